// SPDX-License-Identifier: Apache-2.0
/**
 * @file   experiment.hpp
 * @brief  End-to-end pipeline: training single networks and ensembles,
 *         decoding posterior streams, corpus-level scoring and the
 *         repeated-run scenario report.
 */
#ifndef NNAM_EXPERIMENT_HPP
#define NNAM_EXPERIMENT_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nnam/config.hpp"
#include "nnam/corpus.hpp"
#include "nnam/decoder.hpp"
#include "nnam/ensemble.hpp"
#include "nnam/training.hpp"

namespace nnam {

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Error counts summed over utterances.
struct ScoreTotals {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  void add(const PerResult &r) {
    substitutions += r.substitutions;
    deletions += r.deletions;
    insertions += r.insertions;
    reference_length += r.reference_length;
  }
  std::size_t errors() const noexcept { return substitutions + deletions + insertions; }
  double per() const {
    if (reference_length == 0)
      throw ScoringError("no reference phones");
    return 100.0 * static_cast<double>(errors()) / static_cast<double>(reference_length);
  }
};

inline std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// `PER x.xx S n D n I n N n`
inline std::string format_score(const ScoreTotals &s) {
  return "PER " + format_percent(s.per()) + " S " + std::to_string(s.substitutions) + " D " +
         std::to_string(s.deletions) + " I " + std::to_string(s.insertions) + " N " +
         std::to_string(s.reference_length);
}

/// Maps both sides through the phone set's scoring map, then sums counts.
inline ScoreTotals score_transcripts(const std::vector<PhoneSequence> &refs,
                                     const std::vector<PhoneSequence> &hyps, const PhoneSet &ps) {
  if (refs.size() != hyps.size())
    throw ScoringError(std::to_string(refs.size()) + " references but " +
                       std::to_string(hyps.size()) + " hypotheses");
  ScoreTotals t;
  for (std::size_t i = 0; i < refs.size(); ++i)
    t.add(per(map_phones(refs[i], ps), map_phones(hyps[i], ps)));
  return t;
}

// ---------------------------------------------------------------------------
// Hypothesis files
// ---------------------------------------------------------------------------

struct Hypothesis {
  std::string id;
  PhoneSequence phones;
};

/// One line per utterance: `<id> <phones...>`.
inline std::string write_hypotheses(const std::vector<Hypothesis> &hyps) {
  std::string out;
  for (const auto &h : hyps) {
    out += h.id;
    for (const auto &p : h.phones)
      out += ' ' + p;
    out += '\n';
  }
  return out;
}

inline std::vector<Hypothesis> parse_hypotheses(const std::string &text) {
  std::vector<Hypothesis> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto f = split_ws(strip_comment(lines[i]));
    if (f.empty())
      continue;
    Hypothesis h{std::string(f[0]), {}};
    for (std::size_t k = 1; k < f.size(); ++k)
      h.phones.emplace_back(f[k]);
    out.push_back(std::move(h));
  }
  return out;
}

/// Aligns hypotheses to utterances by id; a missing id is an error.
inline ScoreTotals score_hypotheses(std::span<const Utterance> refs,
                                    const std::vector<Hypothesis> &hyps, const PhoneSet &ps) {
  std::map<std::string, const PhoneSequence *> by_id;
  for (const auto &h : hyps)
    if (!by_id.emplace(h.id, &h.phones).second)
      throw ScoringError("duplicate hypothesis for '" + h.id + "'");
  if (by_id.size() != refs.size())
    throw ScoringError(std::to_string(hyps.size()) + " hypotheses for " +
                       std::to_string(refs.size()) + " utterances");
  ScoreTotals t;
  for (const auto &u : refs) {
    const auto it = by_id.find(u.id);
    if (it == by_id.end())
      throw ScoringError("no hypothesis for '" + u.id + "'");
    t.add(per(map_phones(u.transcript, ps), map_phones(*it->second, ps)));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// Training-label priors, or uniform when priors are disabled.
inline ClassPrior decode_priors(const Corpus &c, const DecodeOptions &o) {
  return o.use_priors ? estimate_priors(label_list(c.train), c.num_classes)
                      : uniform_priors(c.num_classes);
}

inline PhoneSequence decode_log_posteriors(const Matrix &log_posteriors, const DecodeGraph &g,
                                           const ClassPrior &priors, const DecodeOptions &o) {
  const Matrix scores = posteriors_to_scores(log_posteriors, priors, o.acoustic_scale);
  return phone_symbols(viterbi_decode(scores, g, o.lm_weight).phones, g.phones);
}

inline std::vector<Hypothesis> decode_utterances(std::span<const Utterance> utts,
                                                 std::span<const Matrix> log_posteriors,
                                                 const DecodeGraph &g, const ClassPrior &priors,
                                                 const DecodeOptions &o) {
  if (utts.size() != log_posteriors.size())
    throw ShapeError("decode: utterance and posterior counts differ");
  std::vector<Hypothesis> out;
  for (std::size_t i = 0; i < utts.size(); ++i)
    out.push_back({utts[i].id, decode_log_posteriors(log_posteriors[i], g, priors, o)});
  return out;
}

/// Flat acoustic evidence: the decode is driven by the language model and HMM alone.
inline Matrix uniform_log_posteriors(std::size_t frames, std::size_t classes) {
  return Matrix(frames, classes, -std::log(static_cast<double>(classes)));
}

/**
 * Class posteriors of an isotropic Gaussian model with equal class weights.
 * A zero noise level is treated as 1e-3 so the posterior stays defined.
 */
inline Matrix gaussian_log_posteriors(const Matrix &features, const SynthTruth &truth) {
  if (features.cols() != truth.means.cols())
    throw ShapeError("gaussian_log_posteriors: feature dim " + std::to_string(features.cols()) +
                     " vs " + std::to_string(truth.means.cols()));
  const double sigma = std::max(truth.noise, 1e-3);
  Matrix out(features.rows(), truth.means.rows());
  Vector z(truth.means.rows());
  for (std::size_t t = 0; t < features.rows(); ++t) {
    for (std::size_t c = 0; c < truth.means.rows(); ++c) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < features.cols(); ++d) {
        const double e = features(t, d) - truth.means(c, d);
        d2 += e * e;
      }
      z[c] = -0.5 * d2 / (sigma * sigma);
    }
    const Vector lp = log_softmax(z);
    std::copy(lp.begin(), lp.end(), out.row(t).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Trains one network on the corpus training split, early-stopping on dev.
inline TrainResult train_network(const Corpus &c, const PipelineConfig &cfg, Rng &rng,
                                 std::function<void(const EpochRecord &)> on_epoch = {}) {
  const NetworkSpec spec = cfg.network_spec(c.feature_dim, c.num_classes);
  RecurrentNetwork net = make_network(spec, rng);
  TrainOptions opts = cfg.train;
  opts.on_epoch = std::move(on_epoch);
  return train_staged(std::move(net), c.train, c.dev, opts, rng);
}

struct EnsembleRun {
  Ensemble ensemble;
  std::optional<TrainResult> master;
  std::optional<CroggingResult> crogging;
  std::optional<RplResult> rpl;
};

/**
 * Master on the full training split (dev for stopping), k fold networks by
 * cross-validation, and an RPL fitted to the folds' held-out predictions.
 * Each component draws its own child Rng: master, folds, RPL.
 */
inline EnsembleRun train_ensemble(const Corpus &c, const PipelineConfig &cfg, Rng &rng) {
  const EnsembleOptions &eo = cfg.ensemble;
  if (eo.folds == 1)
    throw ConfigError("ensemble.folds must be 0 or >= 2");
  if (!eo.master && eo.folds == 0)
    throw ConfigError("ensemble needs a master or folds");
  if (eo.rpl && eo.folds == 0)
    throw ConfigError("the RPL is fitted to fold predictions; it needs ensemble.folds >= 2");
  Rng master_rng = rng.split(), folds_rng = rng.split(), rpl_rng = rng.split();

  EnsembleRun r;
  r.ensemble.master_weight = eo.master_weight;
  if (eo.master) {
    r.master = train_network(c, cfg, master_rng);
    r.ensemble.master = r.master->net;
  }
  if (eo.folds > 0) {
    const NetworkSpec spec = cfg.network_spec(c.feature_dim, c.num_classes);
    const FoldSplit split = split_folds(c.train.size(), eo.folds, folds_rng);
    r.crogging = train_crogging(spec, c.train, split, cfg.train, folds_rng);
    r.ensemble.folds = r.crogging->nets;
  }
  if (eo.rpl) {
    r.rpl = train_rpl(r.crogging->heldout, label_list(c.train), rpl_rng);
    r.ensemble.rpl = r.rpl->params;
  }
  r.ensemble.validate();
  return r;
}

/// Whether an ensemble has the members a scenario needs.
inline bool scenario_available(const Ensemble &e, Scenario s) {
  const MemberSelection sel = scenario_members(s);
  return (!sel.master || e.master) && (!sel.folds || !e.folds.empty()) &&
         (!scenario_uses_rpl(s) || e.rpl);
}

// ---------------------------------------------------------------------------
// Repeated-run experiment
// ---------------------------------------------------------------------------

struct RunReport {
  std::array<std::optional<ScoreTotals>, 6> scores; ///< indexed like kAllScenarios
  std::optional<JensenReport> jensen;               ///< on the test split, folds only
};

/// Scores every available scenario of a trained ensemble on one split.
inline RunReport evaluate_ensemble(const Ensemble &e, const Corpus &c,
                                   std::span<const Utterance> split, const DecodeOptions &o) {
  e.validate();
  const ClassPrior priors = decode_priors(c, o);
  RunReport r;
  std::array<std::vector<PhoneSequence>, 6> hyps;
  std::vector<std::vector<Matrix>> fold_logps(e.folds.size());
  for (const auto &u : split) {
    const MemberOutputs m = member_outputs(e, u.features);
    for (std::size_t k = 0; k < m.folds.size(); ++k)
      fold_logps[k].push_back(m.folds[k]);
    for (std::size_t s = 0; s < kAllScenarios.size(); ++s)
      if (scenario_available(e, kAllScenarios[s]))
        hyps[s].push_back(decode_log_posteriors(
          log_of(scenario_posteriors(kAllScenarios[s], m, e.master_weight, e.rpl)), c.graph,
          priors, o));
  }
  const auto refs = transcript_list(split);
  for (std::size_t s = 0; s < kAllScenarios.size(); ++s)
    if (scenario_available(e, kAllScenarios[s]))
      r.scores[s] = score_transcripts(refs, hyps[s], c.graph.phones);
  if (!e.folds.empty())
    r.jensen = jensen_check(fold_logps, label_list(split));
  return r;
}

struct ExperimentReport {
  std::vector<RunReport> runs;
};

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double> &v) {
  if (v.empty())
    throw ConfigError("mean_std: no values");
  double mean = 0.0;
  for (double x : v)
    mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2)
    return {mean, 0.0};
  double ss = 0.0;
  for (double x : v)
    ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

/// Per-scenario PERs across runs; empty when the scenario was not run.
inline std::vector<double> scenario_pers(const ExperimentReport &rep, Scenario s) {
  const auto idx = static_cast<std::size_t>(s);
  std::vector<double> v;
  for (const auto &run : rep.runs)
    if (run.scores[idx])
      v.push_back(run.scores[idx]->per());
  return v;
}

/**
 * Table of `scenario mean ± std` PER lines, then one line per run with each
 * scenario's PER and the Jensen gap.
 */
inline std::string format_report(const ExperimentReport &rep) {
  std::ostringstream os;
  os << "# runs " << rep.runs.size() << "\n# scenario PER mean ± sample std\n";
  for (Scenario s : kAllScenarios) {
    const auto v = scenario_pers(rep, s);
    if (v.empty())
      continue;
    const auto [m, sd] = mean_std(v);
    char name[24];
    std::snprintf(name, sizeof name, "%-17s", std::string(to_string(s)).c_str());
    os << name << ' ' << format_percent(m) << " ± " << format_percent(sd) << '\n';
  }
  for (std::size_t r = 0; r < rep.runs.size(); ++r) {
    os << "# run " << r;
    for (std::size_t s = 0; s < kAllScenarios.size(); ++s)
      if (rep.runs[r].scores[s])
        os << ' ' << to_string(kAllScenarios[s]) << '=' << format_percent(rep.runs[r].scores[s]->per());
    if (rep.runs[r].jensen)
      os << " jensen " << format_double(rep.runs[r].jensen->ensemble_ce) << " <= "
         << format_double(rep.runs[r].jensen->mean_member_ce);
    os << '\n';
  }
  return os.str();
}

/**
 * cfg.runs repetitions of ensemble training and test-split evaluation on
 * one corpus. Run r uses the r-th child of Rng(cfg.train_seed). Throws
 * TrainingError if the folds-mean CE exceeds the mean member CE on a run.
 */
inline ExperimentReport run_experiment(const Corpus &c, const PipelineConfig &cfg,
                                       const std::function<void(std::size_t)> &on_run = {}) {
  Rng base(cfg.train_seed);
  ExperimentReport rep;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    Rng run_rng = base.split();
    const EnsembleRun er = train_ensemble(c, cfg, run_rng);
    rep.runs.push_back(evaluate_ensemble(er.ensemble, c, c.test, cfg.decode));
    if (const auto &j = rep.runs.back().jensen; j && !j->holds())
      throw TrainingError("run " + std::to_string(r) + ": folds-mean CE " +
                          format_double(j->ensemble_ce) + " exceeds mean member CE " +
                          format_double(j->mean_member_ce));
    if (on_run)
      on_run(r);
  }
  return rep;
}

} // namespace nnam

#endif // NNAM_EXPERIMENT_HPP
