// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Optimizers, utterance minibatches and the staged training loop
 *         shared by recurrent and feed-forward networks.
 */
#ifndef NNAM_TRAINING_HPP
#define NNAM_TRAINING_HPP

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nnam/corpus.hpp"
#include "nnam/network.hpp"
#include "nnam/regularization.hpp"

namespace nnam {

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { sgd, adam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "sgd")
    return OptimizerKind::sgd;
  if (s == "adam")
    return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

/// Per-parameter optimizer memory; `first`/`second` mirror the network's tensors.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  RecurrentNetwork first;  ///< velocity (sgd) or first moment (adam)
  RecurrentNetwork second; ///< second moment (adam only)
};

inline OptimizerState make_optimizer(OptimizerKind kind, const RecurrentNetwork &net, double lr,
                                     double momentum = 0.9) {
  if (!(lr > 0.0))
    throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("momentum must be in [0,1)");
  OptimizerState s;
  s.kind = kind;
  s.lr = lr;
  s.momentum = momentum;
  s.first = zeros_like(net);
  if (kind == OptimizerKind::adam)
    s.second = zeros_like(net);
  return s;
}

namespace detail {

inline std::vector<std::span<double>> tensor_views(RecurrentNetwork &net) {
  std::vector<std::span<double>> out;
  visit_parameters(net, [&](const std::string &, auto &t) { out.push_back(t.values()); });
  return out;
}

inline std::vector<std::span<const double>> tensor_views(const RecurrentNetwork &net) {
  std::vector<std::span<const double>> out;
  visit_parameters(net, [&](const std::string &, const auto &t) { out.push_back(t.values()); });
  return out;
}

inline void check_same_shapes(const RecurrentNetwork &a, const RecurrentNetwork &b,
                              const char *what) {
  std::vector<std::string> sa, sb;
  visit_parameters(a, [&](const std::string &n, const auto &t) { sa.push_back(n + shape_string(t)); });
  visit_parameters(b, [&](const std::string &n, const auto &t) { sb.push_back(n + shape_string(t)); });
  if (sa != sb) {
    std::size_t k = 0;
    while (k < sa.size() && k < sb.size() && sa[k] == sb[k])
      ++k;
    throw ShapeError(std::string(what) + ": parameter mismatch at " +
                     (k < sa.size() ? sa[k] : "<end>") + " vs " + (k < sb.size() ? sb[k] : "<end>"));
  }
}

} // namespace detail

/// v <- momentum * v - lr * g; theta <- theta + v
inline void sgd_momentum_update(RecurrentNetwork &params, const RecurrentNetwork &grads,
                                OptimizerState &state) {
  detail::check_same_shapes(params, grads, "sgd_momentum_update");
  detail::check_same_shapes(params, state.first, "sgd_momentum_update");
  auto p = detail::tensor_views(params);
  auto v = detail::tensor_views(state.first);
  const auto g = detail::tensor_views(grads);
  for (std::size_t k = 0; k < p.size(); ++k)
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      v[k][i] = state.momentum * v[k][i] - state.lr * g[k][i];
      p[k][i] += v[k][i];
    }
  ++state.step;
}

/// Bias-corrected Adam.
inline void adam_update(RecurrentNetwork &params, const RecurrentNetwork &grads,
                        OptimizerState &state) {
  detail::check_same_shapes(params, grads, "adam_update");
  detail::check_same_shapes(params, state.first, "adam_update");
  detail::check_same_shapes(params, state.second, "adam_update");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto p = detail::tensor_views(params);
  auto m = detail::tensor_views(state.first);
  auto v = detail::tensor_views(state.second);
  const auto g = detail::tensor_views(grads);
  for (std::size_t k = 0; k < p.size(); ++k)
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      m[k][i] = state.beta1 * m[k][i] + (1.0 - state.beta1) * g[k][i];
      v[k][i] = state.beta2 * v[k][i] + (1.0 - state.beta2) * g[k][i] * g[k][i];
      p[k][i] -= state.lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + state.eps);
    }
}

inline void optimizer_update(RecurrentNetwork &params, const RecurrentNetwork &grads,
                             OptimizerState &state) {
  if (state.kind == OptimizerKind::sgd)
    sgd_momentum_update(params, grads, state);
  else
    adam_update(params, grads, state);
}

// ---------------------------------------------------------------------------
// Stage plans
// ---------------------------------------------------------------------------

struct Stage {
  OptimizerKind optimizer = OptimizerKind::sgd;
  std::size_t batch = 128; ///< utterances per batch before scaling
  double lr = 1e-3;

  friend bool operator==(const Stage &, const Stage &) = default;
};

struct StagePlan {
  std::vector<Stage> stages;

  void validate() const {
    if (stages.empty())
      throw ConfigError("stage plan needs at least one stage");
    for (const auto &s : stages) {
      if (s.batch < 1)
        throw ConfigError("stage batch size must be >= 1");
      if (!(s.lr > 0.0))
        throw ConfigError("stage learning rate must be positive");
    }
  }

  friend bool operator==(const StagePlan &, const StagePlan &) = default;
};

/// Adam 512 at 1e-3, then SGD-momentum 128 at 1e-3, 1e-4, 1e-5.
inline StagePlan default_recurrent_plan() {
  return {{{OptimizerKind::adam, 512, 1e-3},
           {OptimizerKind::sgd, 128, 1e-3},
           {OptimizerKind::sgd, 128, 1e-4},
           {OptimizerKind::sgd, 128, 1e-5}}};
}

/// SGD-momentum with lr reduced x0.1 per stage and batches 256, 1024, 2048, 2048.
inline StagePlan default_feedforward_plan(double initial_lr = 1e-2) {
  StagePlan plan;
  const std::size_t batches[] = {256, 1024, 2048, 2048};
  double lr = initial_lr;
  for (std::size_t b : batches) {
    plan.stages.push_back({OptimizerKind::sgd, b, lr});
    lr *= 0.1;
  }
  return plan;
}

/// Parses "adam:512:0.001,sgd:128:0.001,...".
inline StagePlan parse_stage_plan(std::string_view text) {
  StagePlan plan;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos)
      end = text.size();
    const std::string_view item = text.substr(pos, end - pos);
    const auto a = item.find(':'), b = item.find(':', a == std::string_view::npos ? a : a + 1);
    Stage s;
    if (a == std::string_view::npos || b == std::string_view::npos ||
        !parse_int(item.substr(a + 1, b - a - 1), s.batch) ||
        !parse_double(item.substr(b + 1), s.lr))
      throw ConfigError("bad stage '" + std::string(item) + "' (expected optimizer:batch:lr)");
    s.optimizer = parse_optimizer_kind(item.substr(0, a));
    plan.stages.push_back(s);
    pos = end + 1;
  }
  plan.validate();
  return plan;
}

inline std::string format_stage_plan(const StagePlan &plan) {
  std::string out;
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const auto &s = plan.stages[k];
    out += (k ? "," : "") + std::string(to_string(s.optimizer)) + ":" + std::to_string(s.batch) +
           ":" + format_double(s.lr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batches and criteria
// ---------------------------------------------------------------------------

/// Shuffled indices 0..count-1 cut into consecutive groups of batch_size.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t count,
                                                          std::size_t batch_size, Rng &rng) {
  if (batch_size < 1)
    throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t k = 0; k < count; k += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(k),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, k + batch_size)));
  return batches;
}

/// max(1, round(batch * scale))
inline std::size_t scaled_batch(std::size_t batch, double scale) {
  const double b = std::round(static_cast<double>(batch) * scale);
  return b < 1.0 ? 1 : static_cast<std::size_t>(b);
}

/// Mean frame cross-entropy over a set of utterances, evaluation mode.
inline double dataset_cross_entropy(const RecurrentNetwork &net, std::span<const Utterance> utts) {
  double loss = 0.0;
  std::size_t frames = 0;
  for (const auto &u : utts) {
    const Matrix lp = forward_eval(net, u.features);
    check_targets(net, u.features, u.labels);
    for (std::size_t t = 0; t < lp.rows(); ++t)
      loss -= lp(t, u.labels[t]);
    frames += lp.rows();
  }
  if (frames == 0)
    throw DataError("cross-entropy of an empty set");
  return loss / static_cast<double>(frames);
}

// ---------------------------------------------------------------------------
// Staged training
// ---------------------------------------------------------------------------

struct EpochRecord {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  double train_ce = 0.0; ///< mean frame CE during the epoch (training mode)
  double dev_ce = 0.0;   ///< evaluation-mode dev CE after the epoch
  double p_dropout = 0.0;
  bool rolled_back = false;
};

/// `stage epoch train_ce dev_ce p_dropout`
inline std::string format_epoch(const EpochRecord &r) {
  std::ostringstream os;
  os << r.stage << ' ' << r.epoch << ' ' << format_double(r.train_ce) << ' '
     << format_double(r.dev_ce) << ' ' << format_double(r.p_dropout);
  return os.str();
}

struct TrainOptions {
  StagePlan plan = default_recurrent_plan();
  double momentum = 0.9;
  double batch_scale = 1.0;          ///< multiplies every stage batch size
  std::size_t max_epochs = 50;       ///< per stage
  double clip = 5.0;                 ///< global gradient norm; <= 0 disables
  std::optional<DropoutSchedule> dropout; ///< unset: constant net.dropout
  bool fit_normalizer = true;
  std::function<void(const EpochRecord &)> on_epoch;
};

struct TrainResult {
  RecurrentNetwork net;
  std::vector<EpochRecord> log;
  double initial_dev_ce = 0.0;
  std::vector<double> stage_dev_ce; ///< best dev CE after each stage
};

namespace detail {

/// One pass over the training set; returns the mean training-mode frame CE.
inline double train_epoch(RecurrentNetwork &net, std::span<const Utterance> train,
                          std::size_t batch, double p, double clip, OptimizerState &opt,
                          Rng &rng) {
  double loss = 0.0;
  std::size_t frames = 0;
  for (const auto &group : make_batches(train.size(), batch, rng)) {
    RecurrentNetwork grad = zeros_like(net);
    std::size_t batch_frames = 0;
    for (auto idx : group)
      batch_frames += train[idx].frames();
    const double w = 1.0 / static_cast<double>(batch_frames);
    for (auto idx : group) {
      const auto &u = train[idx];
      const auto masks = sample_masks(net, u.frames() + net.output_delay, Mode::train, p, rng);
      loss += accumulate_gradient(net, u.features, u.labels, masks, w, grad);
    }
    frames += batch_frames;
    if (!std::isfinite(loss))
      throw TrainingError("non-finite training loss");
    clip_global_norm(grad, clip);
    optimizer_update(net, grad, opt);
  }
  return loss / static_cast<double>(frames);
}

} // namespace detail

/**
 * Runs every stage of the plan. Within a stage, epochs continue until the
 * dev CE rises above the previous epoch's (or max_epochs); on a rise the
 * parameters roll back to the previous epoch. Each stage starts from the
 * best parameters of the one before, with fresh optimizer state.
 */
inline TrainResult train_staged(RecurrentNetwork net, std::span<const Utterance> train,
                                std::span<const Utterance> dev, const TrainOptions &opts,
                                Rng &rng) {
  opts.plan.validate();
  if (train.empty() || dev.empty())
    throw DataError("training needs non-empty train and dev sets");
  if (opts.max_epochs < 1)
    throw ConfigError("max_epochs must be >= 1");
  if (opts.dropout)
    opts.dropout->validate();
  if (opts.fit_normalizer) {
    const auto feats = feature_list(train);
    net.normalizer = fit_normalizer(feats);
  }
  TrainResult r;
  r.initial_dev_ce = dataset_cross_entropy(net, dev);
  double best = r.initial_dev_ce;
  std::size_t global_epoch = 0;

  for (std::size_t si = 0; si < opts.plan.stages.size(); ++si) {
    const Stage &stage = opts.plan.stages[si];
    OptimizerState opt = make_optimizer(stage.optimizer, net, stage.lr, opts.momentum);
    const std::size_t batch = scaled_batch(stage.batch, opts.batch_scale);
    StopState stop{best};
    RecurrentNetwork snapshot = net;
    for (std::size_t e = 0; e < opts.max_epochs; ++e, ++global_epoch) {
      const double p = opts.dropout
                         ? schedule_p(*opts.dropout,
                                      std::min(global_epoch, opts.dropout->total_epochs - 1))
                         : net.dropout;
      Rng epoch_rng = rng.split();
      EpochRecord rec{si, e, 0.0, 0.0, p, false};
      const std::string where = "stage " + std::to_string(si) + " epoch " + std::to_string(e);
      try {
        rec.train_ce = detail::train_epoch(net, train, batch, p, opts.clip, opt, epoch_rng);
        rec.dev_ce = dataset_cross_entropy(net, dev);
        auto [next, stop_now] = should_stop(stop, rec.dev_ce);
        stop = next;
        rec.rolled_back = stop_now;
      } catch (const TrainingError &err) {
        throw TrainingError(where + ": " + err.what());
      }
      if (rec.rolled_back)
        net = snapshot;
      else {
        snapshot = net;
        best = rec.dev_ce;
      }
      r.log.push_back(rec);
      if (opts.on_epoch)
        opts.on_epoch(rec);
      if (rec.rolled_back) {
        ++global_epoch;
        break;
      }
    }
    r.stage_dev_ce.push_back(best);
  }
  r.net = std::move(net);
  return r;
}

/// Recurrent training; the default plan is the four-stage Adam/SGD schedule.
inline TrainResult train_recurrent(RecurrentNetwork net, std::span<const Utterance> train,
                                   std::span<const Utterance> dev, const TrainOptions &opts,
                                   Rng &rng) {
  if (net.kind == CellKind::feedforward)
    throw ConfigError("train_recurrent: network is feed-forward");
  return train_staged(std::move(net), train, dev, opts, rng);
}

/**
 * Feed-forward training: SGD-momentum stages where each dev increase rolls
 * back and moves to the next stage (lr x0.1, larger batch).
 */
inline TrainResult train_feedforward(RecurrentNetwork net, std::span<const Utterance> train,
                                     std::span<const Utterance> dev, const TrainOptions &opts,
                                     Rng &rng) {
  if (net.kind != CellKind::feedforward)
    throw ConfigError("train_feedforward: network is not feed-forward");
  return train_staged(std::move(net), train, dev, opts, rng);
}

} // namespace nnam

#endif // NNAM_TRAINING_HPP
