// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ensemble.hpp
 * @brief  k-fold cross-validation ensembles ("crogging"), posterior
 *         aggregation with an optional master network, and the diagonal
 *         regularization post-layer (RPL) trained on held-out predictions.
 */
#ifndef NNAM_ENSEMBLE_HPP
#define NNAM_ENSEMBLE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nnam/model_io.hpp"
#include "nnam/training.hpp"

namespace nnam {

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::size_t> assignment; ///< fold index per utterance

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t i = 0; i < assignment.size(); ++i)
      out[assignment[i]].push_back(i);
    return out;
  }
};

/**
 * Balanced random partition: after a seeded shuffle, position i goes to
 * fold i mod k, so the first (n mod k) folds hold one extra utterance.
 */
inline FoldSplit split_folds(std::size_t count, std::size_t k, Rng &rng) {
  if (k < 2)
    throw ConfigError("split_folds: k must be >= 2");
  if (k > count)
    throw ConfigError("split_folds: k=" + std::to_string(k) + " exceeds " +
                      std::to_string(count) + " utterances");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  FoldSplit s{k, std::vector<std::size_t>(count)};
  for (std::size_t i = 0; i < count; ++i)
    s.assignment[order[i]] = i % k;
  return s;
}

struct CroggingResult {
  std::vector<RecurrentNetwork> nets;
  std::vector<Matrix> heldout; ///< per training utterance: T x C log-posteriors of its fold net
  std::vector<TrainResult> runs;
};

/**
 * Trains net j on every fold but j, early-stopping on fold j, then
 * predicts fold j in evaluation mode. Each fold draws its own child Rng
 * in fold order.
 */
inline CroggingResult train_crogging(const NetworkSpec &spec, std::span<const Utterance> train,
                                     const FoldSplit &split, const TrainOptions &opts, Rng &rng) {
  if (split.assignment.size() != train.size())
    throw ConfigError("train_crogging: split covers " + std::to_string(split.assignment.size()) +
                      " utterances, training set has " + std::to_string(train.size()));
  CroggingResult r;
  r.heldout.resize(train.size());
  for (std::size_t j = 0; j < split.k; ++j) {
    Rng fold_rng = rng.split();
    std::vector<Utterance> fit, held;
    for (std::size_t i = 0; i < train.size(); ++i)
      (split.assignment[i] == j ? held : fit).push_back(train[i]);
    RecurrentNetwork net = make_network(spec, fold_rng);
    try {
      r.runs.push_back(train_staged(std::move(net), fit, held, opts, fold_rng));
    } catch (const TrainingError &e) {
      throw TrainingError("fold " + std::to_string(j) + ": " + e.what());
    }
    r.nets.push_back(r.runs.back().net);
    for (std::size_t i = 0; i < train.size(); ++i)
      if (split.assignment[i] == j)
        r.heldout[i] = forward_eval(r.nets.back(), train[i].features);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct MemberSelection {
  bool master = false;
  bool folds = false;
};

/**
 * One frame: master only, arithmetic mean of fold posteriors, or
 * w * master + (1 - w) * mean(folds). Inputs are log-posteriors; the
 * result is a probability vector.
 */
inline Vector aggregate(const Vector *master_logp, std::span<const Vector> fold_logps,
                        double master_weight, MemberSelection sel) {
  if (!sel.master && !sel.folds)
    throw ConfigError("aggregate: no members selected");
  if (sel.master && !master_logp)
    throw ConfigError("aggregate: master selected but not available");
  if (sel.folds && fold_logps.empty())
    throw ConfigError("aggregate: folds selected but none available");
  if (!(master_weight >= 0.0 && master_weight <= 1.0))
    throw ConfigError("aggregate: master weight must be in [0,1]");
  const std::size_t C = sel.master ? master_logp->dim() : fold_logps[0].dim();
  Vector mean(C);
  if (sel.folds) {
    for (const auto &f : fold_logps) {
      if (f.dim() != C)
        throw ShapeError("aggregate: member class counts differ");
      for (std::size_t c = 0; c < C; ++c)
        mean[c] += std::exp(f[c]);
    }
    for (auto &v : mean)
      v /= static_cast<double>(fold_logps.size());
  }
  if (!sel.master)
    return mean;
  Vector out(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double m = std::exp((*master_logp)[c]);
    out[c] = sel.folds ? master_weight * m + (1.0 - master_weight) * mean[c] : m;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regularization post-layer
// ---------------------------------------------------------------------------

inline constexpr double kRplProbabilityFloor = 1e-30;

/// softmax(d * log p + b), diagonal d.
struct RplParams {
  Vector d;
  Vector b;

  static RplParams identity(std::size_t classes) { return {Vector(classes, 1.0), Vector(classes)}; }
  std::size_t dim() const noexcept { return d.dim(); }

  friend bool operator==(const RplParams &, const RplParams &) = default;
};

/// RPL applied to log-domain input.
inline Vector apply_rpl_log(const RplParams &rpl, const Vector &logp) {
  if (logp.dim() != rpl.dim())
    throw ShapeError("apply_rpl: input " + shape_string(logp) + " vs RPL dim " +
                     std::to_string(rpl.dim()));
  Vector z(logp.dim());
  for (std::size_t c = 0; c < z.dim(); ++c)
    z[c] = rpl.d[c] * logp[c] + rpl.b[c];
  return softmax(z);
}

/// Probabilities are floored at 1e-30 before the log.
inline Vector apply_rpl(const RplParams &rpl, const Vector &posteriors) {
  Vector logp(posteriors.dim());
  for (std::size_t c = 0; c < logp.dim(); ++c)
    logp[c] = std::log(std::max(posteriors[c], kRplProbabilityFloor));
  return apply_rpl_log(rpl, logp);
}

struct RplOptions {
  double lr = 0.1;
  std::size_t max_iterations = 200;
  double holdout = 0.1;
};

struct RplResult {
  RplParams params;
  double heldaside_ce = 0.0;
  double identity_ce = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

struct RplData {
  std::vector<Vector> x; ///< floored log-posteriors
  std::vector<std::size_t> y;
};

inline double rpl_loss(const RplParams &p, const RplData &data, std::span<const std::size_t> idx) {
  double loss = 0.0;
  for (auto i : idx) {
    Vector z(p.dim());
    for (std::size_t c = 0; c < z.dim(); ++c)
      z[c] = p.d[c] * data.x[i][c] + p.b[c];
    loss += cross_entropy(log_softmax(z), data.y[i]);
  }
  return loss / static_cast<double>(idx.size());
}

inline RplParams rpl_gradient(const RplParams &p, const RplData &data,
                              std::span<const std::size_t> idx) {
  RplParams g{Vector(p.dim()), Vector(p.dim())};
  for (auto i : idx) {
    Vector z(p.dim());
    for (std::size_t c = 0; c < z.dim(); ++c)
      z[c] = p.d[c] * data.x[i][c] + p.b[c];
    Vector dz = softmax(z);
    dz[data.y[i]] -= 1.0;
    for (std::size_t c = 0; c < z.dim(); ++c) {
      g.d[c] += dz[c] * data.x[i][c];
      g.b[c] += dz[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (std::size_t c = 0; c < p.dim(); ++c) {
    g.d[c] *= inv;
    g.b[c] *= inv;
  }
  return g;
}

} // namespace detail

/**
 * Full-batch gradient descent from the identity on the frames of
 * `log_posteriors`, holding a random `holdout` fraction aside. A step that
 * raises the training loss is retried at half the rate. Training stops when
 * the held-aside CE rises; the best held-aside parameters are returned, and
 * the identity is one of the candidates.
 */
inline RplResult train_rpl(std::span<const Matrix> log_posteriors,
                           std::span<const std::vector<std::size_t>> labels, Rng &rng,
                           const RplOptions &opts = {}) {
  if (log_posteriors.size() != labels.size())
    throw ShapeError("train_rpl: predictions and labels differ in utterance count");
  if (!(opts.holdout > 0.0 && opts.holdout < 1.0) || !(opts.lr > 0.0))
    throw ConfigError("train_rpl: holdout must be in (0,1) and lr positive");
  detail::RplData data;
  std::size_t C = 0;
  for (std::size_t u = 0; u < labels.size(); ++u) {
    const Matrix &lp = log_posteriors[u];
    if (lp.rows() != labels[u].size())
      throw ShapeError("train_rpl: utterance " + std::to_string(u) + " has " +
                       std::to_string(lp.rows()) + " predictions for " +
                       std::to_string(labels[u].size()) + " labels");
    C = lp.cols();
    for (std::size_t t = 0; t < lp.rows(); ++t) {
      Vector x(C);
      for (std::size_t c = 0; c < C; ++c)
        x[c] = std::max(lp(t, c), std::log(kRplProbabilityFloor));
      if (labels[u][t] >= C)
        throw IndexError("train_rpl: label out of range");
      data.x.push_back(std::move(x));
      data.y.push_back(labels[u][t]);
    }
  }
  if (data.y.size() < 2)
    throw DataError("train_rpl: need at least two frames");
  if (std::all_of(data.y.begin(), data.y.end(), [&](auto v) { return v == data.y[0]; }))
    throw DataError("train_rpl: labels are a single class");

  std::vector<std::size_t> order(data.y.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t n_hold = static_cast<std::size_t>(std::llround(opts.holdout * order.size()));
  n_hold = std::clamp<std::size_t>(n_hold, 1, order.size() - 1);
  const std::span<const std::size_t> hold(order.data(), n_hold);
  const std::span<const std::size_t> fit(order.data() + n_hold, order.size() - n_hold);

  RplResult r;
  RplParams p = RplParams::identity(C);
  r.params = p;
  r.identity_ce = detail::rpl_loss(p, data, hold);
  r.heldaside_ce = r.identity_ce;
  double train_loss = detail::rpl_loss(p, data, fit);
  double prev_hold = r.identity_ce;
  double lr = opts.lr;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const RplParams g = detail::rpl_gradient(p, data, fit);
    RplParams next = p;
    double next_loss = train_loss;
    for (int tries = 0; tries < 30; ++tries) {
      for (std::size_t c = 0; c < C; ++c) {
        next.d[c] = p.d[c] - lr * g.d[c];
        next.b[c] = p.b[c] - lr * g.b[c];
      }
      next_loss = detail::rpl_loss(next, data, fit);
      if (next_loss <= train_loss)
        break;
      lr *= 0.5;
    }
    if (!(next_loss <= train_loss))
      break;
    p = next;
    train_loss = next_loss;
    r.iterations = it + 1;
    const double hold_ce = detail::rpl_loss(p, data, hold);
    if (hold_ce < r.heldaside_ce) {
      r.heldaside_ce = hold_ce;
      r.params = p;
    }
    if (hold_ce > prev_hold)
      break;
    prev_hold = hold_ce;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ensembles and scenarios
// ---------------------------------------------------------------------------

struct Ensemble {
  std::optional<RecurrentNetwork> master;
  std::vector<RecurrentNetwork> folds;
  std::optional<RplParams> rpl;
  double master_weight = 0.5;

  void validate() const {
    if (!master && folds.empty())
      throw ConfigError("ensemble has neither master nor folds");
    if (!(master_weight >= 0.0 && master_weight <= 1.0))
      throw ConfigError("ensemble master weight must be in [0,1]");
    const RecurrentNetwork &ref = master ? *master : folds.front();
    for (const auto &f : folds)
      if (f.num_classes() != ref.num_classes() || f.feature_dim() != ref.feature_dim())
        throw ConfigError("ensemble members disagree on classes or feature dim");
    if (rpl && rpl->dim() != ref.num_classes())
      throw ConfigError("RPL dimension does not match the ensemble's classes");
  }
};

enum class Scenario { master, master_rpl, folds, folds_rpl, master_folds, master_folds_rpl };

inline constexpr std::array<Scenario, 6> kAllScenarios{
  Scenario::master, Scenario::master_rpl,   Scenario::folds,
  Scenario::folds_rpl, Scenario::master_folds, Scenario::master_folds_rpl};

inline std::string_view to_string(Scenario s) {
  switch (s) {
  case Scenario::master: return "master";
  case Scenario::master_rpl: return "master+rpl";
  case Scenario::folds: return "folds";
  case Scenario::folds_rpl: return "folds+rpl";
  case Scenario::master_folds: return "master+folds";
  case Scenario::master_folds_rpl: return "master+folds+rpl";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  for (auto sc : kAllScenarios)
    if (to_string(sc) == s)
      return sc;
  throw ConfigError("unknown scenario '" + std::string(s) + "'");
}

inline Scenario make_scenario(MemberSelection sel, bool rpl) {
  if (sel.master && sel.folds)
    return rpl ? Scenario::master_folds_rpl : Scenario::master_folds;
  if (sel.master)
    return rpl ? Scenario::master_rpl : Scenario::master;
  if (sel.folds)
    return rpl ? Scenario::folds_rpl : Scenario::folds;
  throw ConfigError("scenario needs master, folds or both");
}

inline MemberSelection scenario_members(Scenario s) {
  switch (s) {
  case Scenario::master:
  case Scenario::master_rpl: return {true, false};
  case Scenario::folds:
  case Scenario::folds_rpl: return {false, true};
  default: return {true, true};
  }
}

inline bool scenario_uses_rpl(Scenario s) {
  return s == Scenario::master_rpl || s == Scenario::folds_rpl || s == Scenario::master_folds_rpl;
}

/// Evaluation-mode log-posteriors of every member for one utterance.
struct MemberOutputs {
  std::optional<Matrix> master;
  std::vector<Matrix> folds;
};

inline MemberOutputs member_outputs(const Ensemble &e, const Matrix &features) {
  MemberOutputs out;
  if (e.master)
    out.master = forward_eval(*e.master, features);
  for (const auto &f : e.folds)
    out.folds.push_back(forward_eval(f, features));
  return out;
}

/// T x C posteriors (probabilities) of one scenario from member outputs.
inline Matrix scenario_posteriors(Scenario s, const MemberOutputs &m, double master_weight,
                                  const std::optional<RplParams> &rpl) {
  const MemberSelection sel = scenario_members(s);
  if (sel.master && !m.master)
    throw ConfigError("scenario " + std::string(to_string(s)) + " needs a master network");
  if (sel.folds && m.folds.empty())
    throw ConfigError("scenario " + std::string(to_string(s)) + " needs fold networks");
  if (scenario_uses_rpl(s) && !rpl)
    throw ConfigError("scenario " + std::string(to_string(s)) + " needs an RPL");
  const Matrix &shape = m.master ? *m.master : m.folds.front();
  Matrix out(shape.rows(), shape.cols());
  std::vector<Vector> fold_rows(m.folds.size());
  for (std::size_t t = 0; t < out.rows(); ++t) {
    for (std::size_t k = 0; k < m.folds.size(); ++k)
      fold_rows[k] = m.folds[k].row_vector(t);
    const Vector master_row = m.master ? m.master->row_vector(t) : Vector();
    Vector p = aggregate(m.master ? &master_row : nullptr, fold_rows, master_weight, sel);
    if (scenario_uses_rpl(s))
      p = apply_rpl(*rpl, p);
    std::copy(p.begin(), p.end(), out.row(t).begin());
  }
  return out;
}

/// Posterior streams of all six scenarios for each utterance: [scenario][utterance].
inline std::array<std::vector<Matrix>, 6> evaluate_scenarios(const Ensemble &e,
                                                             std::span<const Utterance> utts) {
  e.validate();
  std::array<std::vector<Matrix>, 6> out;
  for (const auto &u : utts) {
    const MemberOutputs m = member_outputs(e, u.features);
    for (std::size_t k = 0; k < kAllScenarios.size(); ++k)
      out[k].push_back(scenario_posteriors(kAllScenarios[k], m, e.master_weight, e.rpl));
  }
  return out;
}

inline Matrix log_of(const Matrix &probs) {
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.values().size(); ++i)
    out.values()[i] = std::log(std::max(probs.values()[i], kRplProbabilityFloor));
  return out;
}

struct JensenReport {
  double ensemble_ce = 0.0;    ///< CE of the folds-mean posterior
  double mean_member_ce = 0.0; ///< mean over members of each member's CE
  bool holds(double tol = 1e-12) const { return ensemble_ce <= mean_member_ce + tol; }
};

/**
 * Frame cross-entropies of the fold members and of their mean posterior.
 * folds[k][u] is member k's T x C log-posterior for utterance u.
 */
inline JensenReport jensen_check(std::span<const std::vector<Matrix>> folds,
                                 std::span<const std::vector<std::size_t>> labels) {
  if (folds.empty())
    throw ConfigError("jensen_check: no members");
  JensenReport r;
  std::size_t frames = 0;
  const double log_k = std::log(static_cast<double>(folds.size()));
  std::vector<double> buf(folds.size());
  for (std::size_t u = 0; u < labels.size(); ++u)
    for (std::size_t t = 0; t < labels[u].size(); ++t) {
      const std::size_t y = labels[u][t];
      for (std::size_t k = 0; k < folds.size(); ++k) {
        buf[k] = folds[k][u](t, y);
        r.mean_member_ce -= buf[k];
      }
      r.ensemble_ce -= log_sum_exp(buf) - log_k;
      ++frames;
    }
  if (frames == 0)
    throw DataError("jensen_check: no frames");
  r.ensemble_ce /= static_cast<double>(frames);
  r.mean_member_ce /= static_cast<double>(frames * folds.size());
  return r;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string save_rpl(const RplParams &rpl) {
  std::ostringstream os;
  os << "nnam-rpl v1 " << rpl.dim() << "\nd";
  for (double v : rpl.d)
    os << ' ' << format_double(v);
  os << "\nb";
  for (double v : rpl.b)
    os << ' ' << format_double(v);
  os << '\n';
  return os.str();
}

inline RplParams load_rpl_text(const std::string &text, const std::string &source = "<rpl>") {
  const auto lines = split_lines(text);
  auto fail = [&](std::size_t line, const std::string &msg) {
    return ParseError(source + ":" + std::to_string(line) + ": " + msg);
  };
  if (lines.size() < 3)
    throw fail(lines.size(), "truncated RPL file");
  const auto head = split_ws(lines[0]);
  std::size_t C = 0;
  if (head.size() != 3 || head[0] != "nnam-rpl" || head[1] != "v1" || !parse_int(head[2], C))
    throw fail(1, "expected 'nnam-rpl v1 <classes>'");
  RplParams r{Vector(C), Vector(C)};
  auto read_row = [&](std::size_t line, std::string_view name, Vector &v) {
    const auto toks = split_ws(lines[line]);
    if (toks.size() != C + 1 || toks[0] != name)
      throw fail(line + 1, "expected '" + std::string(name) + "' and " + std::to_string(C) + " values");
    for (std::size_t c = 0; c < C; ++c)
      if (!parse_double(toks[c + 1], v[c]))
        throw fail(line + 1, "bad number '" + std::string(toks[c + 1]) + "'");
  };
  read_row(1, "d", r.d);
  read_row(2, "b", r.b);
  return r;
}

/**
 * Writes member models, the RPL and a manifest into `dir`:
 *   nnam-ensemble v1 / master_weight w / master <file> / fold <file>... / rpl <file>
 */
inline std::filesystem::path save_ensemble(const std::filesystem::path &dir, const Ensemble &e) {
  e.validate();
  std::ostringstream man;
  man << "nnam-ensemble v1\nmaster_weight " << format_double(e.master_weight) << '\n';
  if (e.master) {
    save_model_file(dir / "master.model", *e.master);
    man << "master master.model\n";
  }
  for (std::size_t k = 0; k < e.folds.size(); ++k) {
    const std::string name = "fold" + std::to_string(k) + ".model";
    save_model_file(dir / name, e.folds[k]);
    man << "fold " << name << '\n';
  }
  if (e.rpl) {
    write_file_atomic(dir / "rpl.txt", save_rpl(*e.rpl));
    man << "rpl rpl.txt\n";
  }
  const auto path = dir / "ensemble.txt";
  write_file_atomic(path, man.str());
  return path;
}

/// Member paths are relative to the manifest's directory.
inline Ensemble load_ensemble(const std::filesystem::path &manifest) {
  const auto lines = split_lines(read_file(manifest));
  const auto base = manifest.parent_path();
  const std::string src = manifest.string();
  Ensemble e;
  bool header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = split_ws(strip_comment(lines[i]));
    if (toks.empty())
      continue;
    auto fail = [&](const std::string &msg) {
      return ParseError(src + ":" + std::to_string(i + 1) + ": " + msg);
    };
    if (!header) {
      if (toks.size() != 2 || toks[0] != "nnam-ensemble" || toks[1] != "v1")
        throw fail("expected 'nnam-ensemble v1'");
      header = true;
      continue;
    }
    if (toks.size() != 2)
      throw fail("expected '<key> <value>'");
    const std::string value(toks[1]);
    if (toks[0] == "master_weight") {
      if (!parse_double(toks[1], e.master_weight))
        throw fail("bad master weight");
    } else if (toks[0] == "master") {
      e.master = load_model_file(base / value);
    } else if (toks[0] == "fold") {
      e.folds.push_back(load_model_file(base / value));
    } else if (toks[0] == "rpl") {
      e.rpl = load_rpl_text(read_file(base / value), (base / value).string());
    } else {
      throw fail("unknown key '" + std::string(toks[0]) + "'");
    }
  }
  if (!header)
    throw ParseError(src + ": empty manifest");
  e.validate();
  return e;
}

} // namespace nnam

#endif // NNAM_ENSEMBLE_HPP
