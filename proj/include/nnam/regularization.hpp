// SPDX-License-Identifier: Apache-2.0
/**
 * @file   regularization.hpp
 * @brief  Inverted dropout, the per-epoch dropout schedule, and the
 *         dev-criterion stopping rule.
 */
#ifndef NNAM_REGULARIZATION_HPP
#define NNAM_REGULARIZATION_HPP

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "nnam/cells.hpp"
#include "nnam/network.hpp"

namespace nnam {

/**
 * Training: zero each unit with probability p and scale survivors by
 * 1/(1-p). Evaluation: identity.
 */
inline Vector dropout_apply(const Vector &x, double p, Mode mode, Rng &rng) {
  if (!(p >= 0.0 && p < 1.0))
    throw ConfigError("dropout probability must be in [0,1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0)
    return x;
  const Vector mask = dropout_mask(x.dim(), p, rng);
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i)
    out[i] = x[i] * mask[i];
  return out;
}

struct DropoutSchedule {
  enum class Kind { constant, dynamic };
  Kind kind = Kind::constant;
  double p_const = 0.2;
  double peak_p = 0.15;
  std::size_t total_epochs = 1;

  void validate() const {
    auto prob_ok = [](double p) { return p >= 0.0 && p < 1.0; };
    if (!prob_ok(p_const) || !prob_ok(peak_p))
      throw ConfigError("dropout schedule probabilities must be in [0,1)");
    if (total_epochs < 1)
      throw ConfigError("dropout schedule needs total_epochs >= 1");
  }
};

/**
 * Dropout probability for an epoch. The dynamic kind is 0 for the first
 * ceil(total/5) epochs, rises linearly to peak_p at epoch total/2 and falls
 * linearly to 0 at the last epoch.
 */
inline double schedule_p(const DropoutSchedule &s, std::size_t epoch) {
  s.validate();
  if (epoch >= s.total_epochs)
    throw IndexError("schedule_p: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(s.total_epochs) + ")");
  if (s.kind == DropoutSchedule::Kind::constant)
    return s.p_const;
  const std::size_t start = (s.total_epochs + 4) / 5;
  const std::size_t mid = s.total_epochs / 2;
  const std::size_t last = s.total_epochs - 1;
  if (epoch < start || epoch == last)
    return 0.0;
  if (epoch <= mid) {
    if (mid == start)
      return s.peak_p;
    return s.peak_p * (static_cast<double>(epoch - start) / static_cast<double>(mid - start));
  }
  return s.peak_p * (static_cast<double>(last - epoch) / static_cast<double>(last - mid));
}

/// Previous dev criterion of a training stage.
struct StopState {
  std::optional<double> previous;
};

/**
 * True iff a previous criterion exists and the new one is strictly larger.
 * The state always records the new value.
 */
inline std::pair<StopState, bool> should_stop(const StopState &state, double dev_criterion) {
  if (std::isnan(dev_criterion))
    throw TrainingError("training diverged: dev criterion is NaN");
  if (!std::isfinite(dev_criterion))
    throw TrainingError("training diverged: dev criterion is not finite");
  const bool stop = state.previous.has_value() && dev_criterion > *state.previous;
  return {StopState{dev_criterion}, stop};
}

} // namespace nnam

#endif // NNAM_REGULARIZATION_HPP
