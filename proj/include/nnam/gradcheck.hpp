// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradcheck.hpp
 * @brief  Analytic-vs-finite-difference gradient comparison for networks.
 */
#ifndef NNAM_GRADCHECK_HPP
#define NNAM_GRADCHECK_HPP

#include <functional>
#include <string>

#include "nnam/network.hpp"

namespace nnam {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t parameters = 0;
};

/// |a - n| / (|a| + |n| + 1e-8)
inline double gradcheck_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
}

namespace detail {

using Real = long double;
using RealVec = std::vector<Real>;

inline RealVec ld_affine(const Matrix &W, const RealVec &x, const Vector &b) {
  RealVec out(W.rows());
  for (std::size_t r = 0; r < W.rows(); ++r) {
    Real acc = b[r];
    for (std::size_t c = 0; c < W.cols(); ++c)
      acc += static_cast<Real>(W(r, c)) * x[c];
    out[r] = acc;
  }
  return out;
}

inline void ld_add(RealVec &a, const RealVec &b) {
  for (std::size_t k = 0; k < a.size(); ++k)
    a[k] += b[k];
}

inline Real ld_sigmoid(Real v) { return 1.0L / (1.0L + std::exp(-v)); }

} // namespace detail

/**
 * Sequence loss in extended precision, transcribed separately from the
 * double-precision forward pass. Serves as the finite-difference oracle's
 * objective.
 */
inline long double reference_sequence_loss(const RecurrentNetwork &net, const Matrix &frames,
                                           std::span<const std::size_t> targets,
                                           const SequenceMasks &masks) {
  using detail::Real;
  using detail::RealVec;
  check_targets(net, frames, targets);
  const Matrix inputs = prepare_inputs(net, frames);
  const std::size_t L = net.layers.size();
  const auto dims = net.hidden_dims();
  std::vector<RealVec> h(L), c(L);
  for (std::size_t l = 0; l < L; ++l) {
    h[l].assign(dims[l], 0.0L);
    c[l].assign(dims[l], 0.0L);
  }
  Real loss = 0.0L;
  for (std::size_t s = 0; s < inputs.rows(); ++s) {
    RealVec in(inputs.row(s).begin(), inputs.row(s).end());
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t H = dims[l];
      RealVec out(H);
      if (const auto *p = std::get_if<LstmParams>(&net.layers[l])) {
        auto pre = [&](const Matrix &Wx, const Matrix &Wh, const Vector &b) {
          RealVec a = detail::ld_affine(Wx, in, b);
          detail::ld_add(a, detail::ld_affine(Wh, h[l], Vector(H)));
          return a;
        };
        const RealVec ai = pre(p->W_xi, p->W_hi, p->b_i), af = pre(p->W_xf, p->W_hf, p->b_f),
                      ao = pre(p->W_xo, p->W_ho, p->b_o), ag = pre(p->W_xc, p->W_hc, p->b_c);
        for (std::size_t k = 0; k < H; ++k) {
          Real cn = detail::ld_sigmoid(af[k]) * c[l][k] + detail::ld_sigmoid(ai[k]) * std::tanh(ag[k]);
          Real hn = detail::ld_sigmoid(ao[k]) * std::tanh(cn);
          if (net.kind == CellKind::zoneout_lstm) {
            const Real kc = masks.keep_c[l][s][k], kh = masks.keep_h[l][s][k];
            cn = kc * c[l][k] + (1.0L - kc) * cn;
            hn = kh * h[l][k] + (1.0L - kh) * hn;
          }
          c[l][k] = cn;
          out[k] = hn;
        }
      } else if (const auto *g = std::get_if<GruParams>(&net.layers[l])) {
        RealVec ar = detail::ld_affine(g->W_r, in, g->b_r);
        detail::ld_add(ar, detail::ld_affine(g->U_r, h[l], Vector(H)));
        RealVec az = detail::ld_affine(g->W_z, in, g->b_z);
        detail::ld_add(az, detail::ld_affine(g->U_z, h[l], Vector(H)));
        RealVec rh(H);
        for (std::size_t k = 0; k < H; ++k)
          rh[k] = detail::ld_sigmoid(ar[k]) * h[l][k];
        RealVec an = detail::ld_affine(g->W, in, g->b_h);
        detail::ld_add(an, detail::ld_affine(g->U, rh, Vector(H)));
        for (std::size_t k = 0; k < H; ++k) {
          const Real z = detail::ld_sigmoid(az[k]);
          out[k] = (1.0L - z) * h[l][k] + z * std::tanh(an[k]);
        }
      } else {
        const auto &d = std::get<DenseParams>(net.layers[l]);
        out = detail::ld_affine(d.W, in, d.b);
        for (auto &v : out)
          v = v > 0.0L ? v : 0.0L;
      }
      h[l] = out;
      if (!masks.dropout.empty())
        for (std::size_t k = 0; k < H; ++k)
          out[k] *= masks.dropout[l][s][k];
      in = std::move(out);
    }
    if (s >= net.output_delay) {
      const RealVec logits = detail::ld_affine(net.output.W, in, net.output.b);
      Real m = logits[0];
      for (Real v : logits)
        m = std::max(m, v);
      Real sum = 0.0L;
      for (Real v : logits)
        sum += std::exp(v - m);
      loss -= logits[targets[s - net.output_delay]] - m - std::log(sum);
    }
  }
  return loss / static_cast<Real>(frames.rows());
}

/**
 * Compares backward_sequence against central differences of the
 * extended-precision reference loss with the masks held fixed. The oracle
 * differences L(θ') - L(θ) so the double-valued objective keeps full
 * relative precision. `tamper`, when set, edits the analytic gradient
 * before comparison (used to prove the check can fail).
 */
inline GradcheckResult gradient_check(const RecurrentNetwork &net, const Matrix &frames,
                                      std::span<const std::size_t> targets,
                                      const SequenceMasks &masks, double h = 1e-5,
                                      const std::function<void(RecurrentNetwork &)> &tamper = {}) {
  auto analytic_net = backward_sequence(net, frames, targets, masks).gradient;
  if (tamper)
    tamper(analytic_net);
  const Vector analytic = flatten_parameters(analytic_net);

  RecurrentNetwork probe = net;
  const long double base = reference_sequence_loss(net, frames, targets, masks);
  auto loss = [&](const Vector &theta) {
    assign_parameters(probe, theta);
    return static_cast<double>(reference_sequence_loss(probe, frames, targets, masks) - base);
  };
  const Vector numeric = finite_diff_gradient(loss, flatten_parameters(net), h);

  GradcheckResult r;
  r.parameters = analytic.dim();
  for (std::size_t i = 0; i < analytic.dim(); ++i) {
    const double e = gradcheck_relative_error(analytic[i], numeric[i]);
    if (r.worst_parameter.empty() || e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_index = i;
      r.worst_parameter = parameter_name_at(net, i);
    }
  }
  return r;
}

/// A small randomized gradcheck problem.
struct GradcheckCase {
  RecurrentNetwork net;
  Matrix frames;
  std::vector<std::size_t> targets;
  SequenceMasks masks;
};

/**
 * Two hidden layers of width <= 8, T <= 7, random biases, output delay
 * 0..2; dropout and zoneout masks sampled in training mode and then frozen.
 */
inline GradcheckCase make_gradcheck_case(CellKind kind, std::uint64_t seed) {
  Rng rng(seed * 7919 + static_cast<std::uint64_t>(kind));
  NetworkSpec spec;
  spec.kind = kind;
  spec.feature_dim = 3;
  spec.hidden = {rng.between(2, 8), rng.between(2, 8)};
  spec.num_classes = 4;
  spec.output_delay = kind == CellKind::feedforward ? 0 : rng.below(3);
  spec.context = kind == CellKind::feedforward ? 3 : 1;
  spec.dropout = 0.2;
  spec.zoneout = {0.5, 0.5};
  GradcheckCase c;
  c.net = make_network(spec, rng);
  visit_parameters(c.net, [&](const std::string &, auto &t) {
    if constexpr (std::is_same_v<std::remove_cvref_t<decltype(t)>, Vector>)
      for (auto &v : t)
        v += rng.uniform(-0.5, 0.5);
  });
  const std::size_t T = rng.between(1, 7);
  c.frames = Matrix(T, spec.feature_dim);
  for (auto &v : c.frames.values())
    v = rng.normal();
  c.net.normalizer.shift = Vector{0.1, -0.2, 0.05};
  c.net.normalizer.scale = Vector{1.5, 0.8, 1.1};
  for (std::size_t t = 0; t < T; ++t)
    c.targets.push_back(rng.below(spec.num_classes));
  c.masks = sample_masks(c.net, T + c.net.output_delay, Mode::train, spec.dropout, rng);
  return c;
}

} // namespace nnam

#endif // NNAM_GRADCHECK_HPP
