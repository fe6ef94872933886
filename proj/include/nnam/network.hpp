// SPDX-License-Identifier: Apache-2.0
/**
 * @file   network.hpp
 * @brief  Stacked recurrent (or feed-forward ReLU) network with softmax
 *         output, sequence forward pass with output delay, and exact
 *         backpropagation through time.
 */
#ifndef NNAM_NETWORK_HPP
#define NNAM_NETWORK_HPP

#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "nnam/cells.hpp"
#include "nnam/features.hpp"

namespace nnam {

enum class CellKind { lstm, gru, zoneout_lstm, feedforward };

inline std::string_view to_string(CellKind kind) {
  switch (kind) {
  case CellKind::lstm: return "lstm";
  case CellKind::gru: return "gru";
  case CellKind::zoneout_lstm: return "zoneout";
  case CellKind::feedforward: return "ff";
  }
  return "?";
}

inline CellKind parse_cell_kind(std::string_view s) {
  if (s == "lstm") return CellKind::lstm;
  if (s == "gru") return CellKind::gru;
  if (s == "zoneout" || s == "zoneout-lstm" || s == "zoneout_lstm")
    return CellKind::zoneout_lstm;
  if (s == "ff" || s == "feedforward" || s == "feed-forward")
    return CellKind::feedforward;
  throw ConfigError("unknown cell kind '" + std::string(s) +
                    "' (expected lstm|gru|zoneout|ff)");
}

using Layer = std::variant<LstmParams, GruParams, DenseParams>;

/// Topology and hyperparameters needed to build a network.
struct NetworkSpec {
  CellKind kind = CellKind::lstm;
  std::size_t feature_dim = 0; ///< raw per-frame feature dimension
  std::vector<std::size_t> hidden;
  std::size_t num_classes = 0;
  std::size_t output_delay = 0;
  std::size_t context = 1; ///< stacked frames fed to the first layer (odd)
  double dropout = 0.0;
  ZoneoutConfig zoneout{};
};

struct RecurrentNetwork {
  CellKind kind = CellKind::lstm;
  std::vector<Layer> layers;
  DenseParams output;
  Normalizer normalizer;
  std::size_t output_delay = 0;
  std::size_t context = 1;
  double dropout = 0.0;
  ZoneoutConfig zoneout{0.0, 0.0};

  std::size_t feature_dim() const noexcept { return normalizer.dim(); }
  std::size_t input_dim() const noexcept { return context * feature_dim(); }
  std::size_t num_classes() const noexcept { return output.W.rows(); }
  bool has_cell_state() const noexcept {
    return kind == CellKind::lstm || kind == CellKind::zoneout_lstm;
  }

  std::vector<std::size_t> hidden_dims() const {
    std::vector<std::size_t> dims;
    for (const auto &l : layers)
      dims.push_back(std::visit([](const auto &p) { return p.hidden_dim(); }, l));
    return dims;
  }

  friend bool operator==(const RecurrentNetwork &, const RecurrentNetwork &) = default;
};

inline RecurrentNetwork make_network(const NetworkSpec &spec, Rng &rng) {
  if (spec.feature_dim == 0 || spec.num_classes == 0)
    throw ConfigError("make_network: feature_dim and num_classes must be positive");
  if (spec.hidden.empty())
    throw ConfigError("make_network: at least one hidden layer required");
  if (spec.context % 2 == 0)
    throw ConfigError("make_network: context must be odd");
  if (!(spec.dropout >= 0.0 && spec.dropout < 1.0))
    throw ConfigError("make_network: dropout must be in [0,1)");
  RecurrentNetwork net;
  net.kind = spec.kind;
  net.output_delay = spec.output_delay;
  net.context = spec.context;
  net.dropout = spec.dropout;
  if (spec.kind == CellKind::zoneout_lstm)
    net.zoneout = spec.zoneout;
  net.normalizer = Normalizer::identity(spec.feature_dim);
  std::size_t in = spec.context * spec.feature_dim;
  for (std::size_t h : spec.hidden) {
    if (h == 0)
      throw ConfigError("make_network: hidden width must be positive");
    switch (spec.kind) {
    case CellKind::lstm:
    case CellKind::zoneout_lstm: net.layers.emplace_back(LstmParams::random(in, h, rng)); break;
    case CellKind::gru: net.layers.emplace_back(GruParams::random(in, h, rng)); break;
    case CellKind::feedforward: net.layers.emplace_back(DenseParams::random(in, h, rng)); break;
    }
    in = h;
  }
  net.output = DenseParams::random(in, spec.num_classes, rng);
  return net;
}

/**
 * Calls f(name, tensor) for every trainable tensor, in a fixed order.
 * Names look like "layer0.W_xi" and "output.b".
 */
template <typename Net, typename F> void visit_parameters(Net &net, F &&f) {
  static_assert(std::is_same_v<std::remove_const_t<Net>, RecurrentNetwork>);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    std::visit(
      [&](auto &p) {
        std::remove_cvref_t<decltype(p)>::visit(
          p, [&](std::string_view n, auto &t) { f(prefix + std::string(n), t); });
      },
      net.layers[l]);
  }
  DenseParams::visit(net.output, [&](std::string_view n, auto &t) {
    f("output." + std::string(n), t);
  });
}

/// Same topology with every trainable tensor zeroed.
inline RecurrentNetwork zeros_like(const RecurrentNetwork &net) {
  RecurrentNetwork z = net;
  visit_parameters(z, [](const std::string &, auto &t) { t.fill(0.0); });
  return z;
}

inline std::size_t parameter_count(const RecurrentNetwork &net) {
  std::size_t n = 0;
  visit_parameters(net, [&](const std::string &, const auto &t) { n += t.values().size(); });
  return n;
}

inline Vector flatten_parameters(const RecurrentNetwork &net) {
  std::vector<double> out;
  out.reserve(parameter_count(net));
  visit_parameters(net, [&](const std::string &, const auto &t) {
    out.insert(out.end(), t.values().begin(), t.values().end());
  });
  return Vector(std::move(out));
}

inline void assign_parameters(RecurrentNetwork &net, const Vector &flat) {
  if (flat.dim() != parameter_count(net))
    throw ShapeError("assign_parameters: expected " + std::to_string(parameter_count(net)) +
                     " values, got " + std::to_string(flat.dim()));
  std::size_t k = 0;
  visit_parameters(net, [&](const std::string &, auto &t) {
    for (double &v : t.values())
      v = flat[k++];
  });
}

/// Name of the tensor holding flat coordinate `index`.
inline std::string parameter_name_at(const RecurrentNetwork &net, std::size_t index) {
  std::string found;
  std::size_t k = 0;
  visit_parameters(net, [&](const std::string &name, const auto &t) {
    if (found.empty() && index < k + t.values().size())
      found = name;
    k += t.values().size();
  });
  return found;
}

inline double global_norm(const RecurrentNetwork &grad) {
  double s = 0.0;
  visit_parameters(grad, [&](const std::string &, const auto &t) {
    for (double v : t.values())
      s += v * v;
  });
  return std::sqrt(s);
}

inline void scale_parameters(RecurrentNetwork &net, double factor) {
  visit_parameters(net, [&](const std::string &, auto &t) {
    for (double &v : t.values())
      v *= factor;
  });
}

/// Rescales grad to global norm max_norm when it is larger; no-op for max_norm <= 0.
inline void clip_global_norm(RecurrentNetwork &grad, double max_norm) {
  if (max_norm <= 0.0)
    return;
  const double n = global_norm(grad);
  if (n > max_norm)
    scale_parameters(grad, max_norm / n);
}

// ---------------------------------------------------------------------------
// Sequence masks
// ---------------------------------------------------------------------------

/**
 * Stochastic factors of one sequence pass, indexed [layer][step].
 * dropout holds 0 or 1/(1-p) per unit of a layer's upward output; empty
 * means no dropout. keep_c / keep_h are zoneout keep factors (0/1 draws in
 * training, the zoneout probabilities at evaluation); empty unless the
 * network is a zoneout LSTM.
 */
struct SequenceMasks {
  std::vector<std::vector<Vector>> dropout;
  std::vector<std::vector<Vector>> keep_c;
  std::vector<std::vector<Vector>> keep_h;
};

inline Vector dropout_mask(std::size_t dim, double p, Rng &rng) {
  Vector m(dim);
  const double scale = 1.0 / (1.0 - p);
  for (auto &v : m)
    v = rng.bernoulli(p) ? 0.0 : scale;
  return m;
}

inline SequenceMasks sample_masks(const RecurrentNetwork &net, std::size_t steps,
                                  Mode mode, double p_dropout, Rng &rng) {
  if (!(p_dropout >= 0.0 && p_dropout < 1.0))
    throw ConfigError("dropout probability must be in [0,1), got " + std::to_string(p_dropout));
  SequenceMasks m;
  const auto dims = net.hidden_dims();
  const std::size_t L = dims.size();
  const bool zoneout = net.kind == CellKind::zoneout_lstm;
  const bool drop = mode == Mode::train && p_dropout > 0.0;
  if (zoneout) {
    m.keep_c.assign(L, std::vector<Vector>(steps));
    m.keep_h.assign(L, std::vector<Vector>(steps));
  }
  if (drop)
    m.dropout.assign(L, std::vector<Vector>(steps));
  for (std::size_t s = 0; s < steps; ++s)
    for (std::size_t l = 0; l < L; ++l) {
      if (zoneout) {
        m.keep_c[l][s] = zoneout_keep(net.zoneout.d_c, dims[l], mode, rng);
        m.keep_h[l][s] = zoneout_keep(net.zoneout.d_h, dims[l], mode, rng);
      }
      if (drop)
        m.dropout[l][s] = dropout_mask(dims[l], p_dropout, rng);
    }
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/**
 * Network inputs for every time step: normalized, context-stacked, and
 * padded with output_delay copies of the last frame.
 */
inline Matrix prepare_inputs(const RecurrentNetwork &net, const Matrix &frames) {
  if (frames.rows() == 0)
    throw DataError("forward_sequence: empty sequence");
  if (frames.cols() != net.feature_dim())
    throw ShapeError("forward_sequence: frames are " + shape_string(frames) +
                     ", network expects feature dim " + std::to_string(net.feature_dim()));
  Matrix x = apply_normalizer(net.normalizer, frames);
  if (net.context > 1)
    x = stack_frames(x, net.context);
  const std::size_t T = x.rows();
  Matrix padded(T + net.output_delay, x.cols());
  for (std::size_t s = 0; s < padded.rows(); ++s) {
    const auto src = x.row(std::min(s, T - 1));
    std::copy(src.begin(), src.end(), padded.row(s).begin());
  }
  return padded;
}

namespace detail {

struct StepCache {
  Vector x;
  Vector h_prev, c_prev;
  LstmActivations lstm;
  GruActivations gru;
  Vector h; ///< layer output (state) after zoneout / ReLU
  Vector c;
};

struct Trace {
  std::size_t frames = 0;
  std::vector<std::vector<StepCache>> steps; ///< [layer][step]
  std::vector<Vector> top;                   ///< output-layer input per step
  Matrix log_post;                           ///< frames x classes
};

inline void check_masks(const RecurrentNetwork &net, const SequenceMasks &m,
                        std::size_t steps) {
  const std::size_t L = net.layers.size();
  auto ok = [&](const std::vector<std::vector<Vector>> &v) {
    if (v.empty())
      return true;
    if (v.size() != L)
      return false;
    for (const auto &per_layer : v)
      if (per_layer.size() < steps)
        return false;
    return true;
  };
  if (!ok(m.dropout) || !ok(m.keep_c) || !ok(m.keep_h))
    throw ShapeError("sequence masks do not cover " + std::to_string(L) +
                     " layers x " + std::to_string(steps) + " steps");
  if (net.kind == CellKind::zoneout_lstm && (m.keep_c.empty() || m.keep_h.empty()))
    throw ConfigError("zoneout network requires zoneout keep factors");
}

inline Trace run_forward(const RecurrentNetwork &net, const Matrix &frames,
                         const SequenceMasks &masks) {
  const Matrix inputs = prepare_inputs(net, frames);
  const std::size_t T = frames.rows();
  const std::size_t steps = inputs.rows();
  const std::size_t L = net.layers.size();
  check_masks(net, masks, steps);

  Trace tr;
  tr.frames = T;
  tr.steps.assign(L, std::vector<StepCache>(steps));
  tr.top.resize(steps);
  tr.log_post = Matrix(T, net.num_classes());

  const auto dims = net.hidden_dims();
  std::vector<Vector> h(L), c(L);
  for (std::size_t l = 0; l < L; ++l) {
    h[l] = Vector(dims[l]);
    c[l] = Vector(dims[l]);
  }
  const bool zoneout = net.kind == CellKind::zoneout_lstm;

  for (std::size_t s = 0; s < steps; ++s) {
    Vector in = inputs.row_vector(s);
    for (std::size_t l = 0; l < L; ++l) {
      StepCache &sc = tr.steps[l][s];
      sc.x = std::move(in);
      if (const auto *p = std::get_if<LstmParams>(&net.layers[l])) {
        sc.h_prev = h[l];
        sc.c_prev = c[l];
        sc.lstm = lstm_activations(*p, sc.x, h[l], c[l]);
        if (zoneout) {
          h[l] = zoneout_mix(sc.h_prev, sc.lstm.h, masks.keep_h[l][s]);
          c[l] = zoneout_mix(sc.c_prev, sc.lstm.c, masks.keep_c[l][s]);
        } else {
          h[l] = sc.lstm.h;
          c[l] = sc.lstm.c;
        }
      } else if (const auto *g = std::get_if<GruParams>(&net.layers[l])) {
        sc.h_prev = h[l];
        sc.gru = gru_activations(*g, sc.x, h[l]);
        h[l] = sc.gru.h;
      } else {
        h[l] = dense_relu(std::get<DenseParams>(net.layers[l]), sc.x);
      }
      sc.h = h[l];
      in = h[l];
      if (!masks.dropout.empty()) {
        const Vector &m = masks.dropout[l][s];
        for (std::size_t k = 0; k < in.dim(); ++k)
          in[k] *= m[k];
      }
    }
    tr.top[s] = std::move(in);
    if (s >= net.output_delay) {
      const Vector lp = log_softmax(affine(net.output.W, tr.top[s], net.output.b));
      std::copy(lp.begin(), lp.end(), tr.log_post.row(s - net.output_delay).begin());
    }
  }
  return tr;
}

inline void lstm_backward(const LstmParams &p, const StepCache &sc, const Vector *keep_c,
                          const Vector *keep_h, const Vector &dh_total, Vector &dc_carry,
                          LstmParams &g, Vector &dx, Vector &dh_prev) {
  const std::size_t H = p.hidden_dim();
  const LstmActivations &a = sc.lstm;
  Vector da_i(H), da_f(H), da_o(H), da_g(H);
  Vector dc_prev(H);
  dh_prev = Vector(H);
  for (std::size_t k = 0; k < H; ++k) {
    const double kh = keep_h ? (*keep_h)[k] : 0.0;
    const double kc = keep_c ? (*keep_c)[k] : 0.0;
    const double dh_cand = (1.0 - kh) * dh_total[k];
    dh_prev[k] = kh * dh_total[k];
    const double dc_cand = dh_cand * a.o[k] * (1.0 - a.tanh_c[k] * a.tanh_c[k]) +
                           (1.0 - kc) * dc_carry[k];
    dc_prev[k] = dc_cand * a.f[k] + kc * dc_carry[k];
    const double d_o = dh_cand * a.tanh_c[k];
    const double d_i = dc_cand * a.g[k];
    const double d_g = dc_cand * a.i[k];
    const double d_f = dc_cand * sc.c_prev[k];
    da_i[k] = d_i * a.i[k] * (1.0 - a.i[k]);
    da_f[k] = d_f * a.f[k] * (1.0 - a.f[k]);
    da_o[k] = d_o * a.o[k] * (1.0 - a.o[k]);
    da_g[k] = d_g * (1.0 - a.g[k] * a.g[k]);
  }
  dx = Vector(p.input_dim());
  auto gate = [&](const Matrix &Wx, const Matrix &Wh, Matrix &gWx, Matrix &gWh,
                  Vector &gb, const Vector &da) {
    add_outer(gWx, da.values(), sc.x.values());
    add_outer(gWh, da.values(), sc.h_prev.values());
    for (std::size_t k = 0; k < H; ++k)
      gb[k] += da[k];
    add_transposed_product(Wx, da.values(), dx.values());
    add_transposed_product(Wh, da.values(), dh_prev.values());
  };
  gate(p.W_xi, p.W_hi, g.W_xi, g.W_hi, g.b_i, da_i);
  gate(p.W_xf, p.W_hf, g.W_xf, g.W_hf, g.b_f, da_f);
  gate(p.W_xo, p.W_ho, g.W_xo, g.W_ho, g.b_o, da_o);
  gate(p.W_xc, p.W_hc, g.W_xc, g.W_hc, g.b_c, da_g);
  dc_carry = std::move(dc_prev);
}

inline void gru_backward(const GruParams &p, const StepCache &sc, const Vector &dh_total,
                         GruParams &g, Vector &dx, Vector &dh_prev) {
  const std::size_t H = p.hidden_dim();
  const GruActivations &a = sc.gru;
  Vector da_n(H), da_z(H), da_r(H);
  dh_prev = Vector(H);
  for (std::size_t k = 0; k < H; ++k) {
    const double dn = dh_total[k] * a.z[k];
    const double dz = dh_total[k] * (a.n[k] - sc.h_prev[k]);
    dh_prev[k] = dh_total[k] * (1.0 - a.z[k]);
    da_n[k] = dn * (1.0 - a.n[k] * a.n[k]);
    da_z[k] = dz * a.z[k] * (1.0 - a.z[k]);
  }
  Vector d_rh(H);
  add_transposed_product(p.U, da_n.values(), d_rh.values());
  for (std::size_t k = 0; k < H; ++k) {
    const double dr = d_rh[k] * sc.h_prev[k];
    dh_prev[k] += d_rh[k] * a.r[k];
    da_r[k] = dr * a.r[k] * (1.0 - a.r[k]);
  }
  dx = Vector(p.input_dim());
  add_outer(g.W, da_n.values(), sc.x.values());
  add_outer(g.U, da_n.values(), a.rh.values());
  add_transposed_product(p.W, da_n.values(), dx.values());
  add_outer(g.W_z, da_z.values(), sc.x.values());
  add_outer(g.U_z, da_z.values(), sc.h_prev.values());
  add_transposed_product(p.W_z, da_z.values(), dx.values());
  add_transposed_product(p.U_z, da_z.values(), dh_prev.values());
  add_outer(g.W_r, da_r.values(), sc.x.values());
  add_outer(g.U_r, da_r.values(), sc.h_prev.values());
  add_transposed_product(p.W_r, da_r.values(), dx.values());
  add_transposed_product(p.U_r, da_r.values(), dh_prev.values());
  for (std::size_t k = 0; k < H; ++k) {
    g.b_h[k] += da_n[k];
    g.b_z[k] += da_z[k];
    g.b_r[k] += da_r[k];
  }
}

inline void dense_backward(const DenseParams &p, const StepCache &sc, const Vector &dh_total,
                           DenseParams &g, Vector &dx) {
  Vector da(dh_total.dim());
  for (std::size_t k = 0; k < da.dim(); ++k)
    da[k] = sc.h[k] > 0.0 ? dh_total[k] : 0.0;
  add_outer(g.W, da.values(), sc.x.values());
  for (std::size_t k = 0; k < da.dim(); ++k)
    g.b[k] += da[k];
  dx = Vector(p.input_dim());
  add_transposed_product(p.W, da.values(), dx.values());
}

} // namespace detail

/**
 * Log-posteriors (frames x classes) with the given masks. The row for frame
 * t is the output produced at step t + output_delay.
 */
inline Matrix forward_with_masks(const RecurrentNetwork &net, const Matrix &frames,
                                 const SequenceMasks &masks) {
  return detail::run_forward(net, frames, masks).log_post;
}

/// Forward pass from zero state; training mode samples fresh masks from rng.
inline Matrix forward_sequence(const RecurrentNetwork &net, const Matrix &frames, Mode mode,
                               Rng &rng) {
  if (frames.rows() == 0)
    throw DataError("forward_sequence: empty sequence");
  const auto masks =
    sample_masks(net, frames.rows() + net.output_delay, mode, net.dropout, rng);
  return forward_with_masks(net, frames, masks);
}

/// Evaluation-mode forward pass (no randomness consumed).
inline Matrix forward_eval(const RecurrentNetwork &net, const Matrix &frames) {
  Rng unused(0);
  return forward_sequence(net, frames, Mode::eval, unused);
}

inline void check_targets(const RecurrentNetwork &net, const Matrix &frames,
                          std::span<const std::size_t> targets) {
  if (targets.size() != frames.rows())
    throw ShapeError("targets length " + std::to_string(targets.size()) +
                     " != frames " + std::to_string(frames.rows()));
  for (auto t : targets)
    if (t >= net.num_classes())
      throw IndexError("target " + std::to_string(t) + " out of range for " +
                       std::to_string(net.num_classes()) + " classes");
}

/**
 * Adds weight * d(Σ_t CE_t)/dθ into grad and returns Σ_t CE_t, with the
 * stochastic factors held fixed at `masks`.
 */
inline double accumulate_gradient(const RecurrentNetwork &net, const Matrix &frames,
                                  std::span<const std::size_t> targets,
                                  const SequenceMasks &masks, double weight,
                                  RecurrentNetwork &grad) {
  check_targets(net, frames, targets);
  const detail::Trace tr = detail::run_forward(net, frames, masks);
  const std::size_t T = tr.frames;
  const std::size_t steps = tr.top.size();
  const std::size_t L = net.layers.size();
  const std::size_t C = net.num_classes();
  const auto dims = net.hidden_dims();

  double loss = 0.0;
  for (std::size_t t = 0; t < T; ++t)
    loss -= tr.log_post(t, targets[t]);

  std::vector<Vector> dh_carry(L), dc_carry(L);
  for (std::size_t l = 0; l < L; ++l) {
    dh_carry[l] = Vector(dims[l]);
    dc_carry[l] = Vector(dims[l]);
  }
  const bool zoneout = net.kind == CellKind::zoneout_lstm;
  const bool recurrent = net.kind != CellKind::feedforward;

  for (std::size_t s = steps; s-- > 0;) {
    Vector d_above(net.output.W.cols());
    if (s >= net.output_delay) {
      const std::size_t t = s - net.output_delay;
      Vector dlogits(C);
      for (std::size_t k = 0; k < C; ++k)
        dlogits[k] = weight * std::exp(tr.log_post(t, k));
      dlogits[targets[t]] -= weight;
      add_outer(grad.output.W, dlogits.values(), tr.top[s].values());
      for (std::size_t k = 0; k < C; ++k)
        grad.output.b[k] += dlogits[k];
      add_transposed_product(net.output.W, dlogits.values(), d_above.values());
    }
    for (std::size_t l = L; l-- > 0;) {
      const detail::StepCache &sc = tr.steps[l][s];
      Vector dh_total = std::move(d_above);
      if (!masks.dropout.empty()) {
        const Vector &m = masks.dropout[l][s];
        for (std::size_t k = 0; k < dh_total.dim(); ++k)
          dh_total[k] *= m[k];
      }
      if (recurrent)
        for (std::size_t k = 0; k < dh_total.dim(); ++k)
          dh_total[k] += dh_carry[l][k];
      Vector dx;
      if (const auto *p = std::get_if<LstmParams>(&net.layers[l])) {
        detail::lstm_backward(*p, sc, zoneout ? &masks.keep_c[l][s] : nullptr,
                              zoneout ? &masks.keep_h[l][s] : nullptr, dh_total,
                              dc_carry[l], std::get<LstmParams>(grad.layers[l]), dx,
                              dh_carry[l]);
      } else if (const auto *g = std::get_if<GruParams>(&net.layers[l])) {
        detail::gru_backward(*g, sc, dh_total, std::get<GruParams>(grad.layers[l]), dx,
                             dh_carry[l]);
      } else {
        detail::dense_backward(std::get<DenseParams>(net.layers[l]), sc, dh_total,
                               std::get<DenseParams>(grad.layers[l]), dx);
      }
      d_above = std::move(dx);
    }
  }
  return loss;
}

struct LossAndGradient {
  double loss = 0.0; ///< mean frame cross-entropy
  RecurrentNetwork gradient;
};

/// Mean frame cross-entropy and its exact gradient for fixed masks.
inline LossAndGradient backward_sequence(const RecurrentNetwork &net, const Matrix &frames,
                                         std::span<const std::size_t> targets,
                                         const SequenceMasks &masks) {
  LossAndGradient out{0.0, zeros_like(net)};
  const double T = static_cast<double>(frames.rows());
  out.loss = accumulate_gradient(net, frames, targets, masks, 1.0 / T, out.gradient) / T;
  return out;
}

/// Mean frame cross-entropy for fixed masks (forward only).
inline double sequence_loss(const RecurrentNetwork &net, const Matrix &frames,
                            std::span<const std::size_t> targets,
                            const SequenceMasks &masks) {
  check_targets(net, frames, targets);
  const Matrix lp = forward_with_masks(net, frames, masks);
  double loss = 0.0;
  for (std::size_t t = 0; t < lp.rows(); ++t)
    loss -= lp(t, targets[t]);
  return loss / static_cast<double>(lp.rows());
}

/**
 * Single stacked input vector through a feed-forward network:
 * normalize, [affine, ReLU, dropout] per hidden layer, output affine,
 * log-softmax.
 */
inline Vector ff_forward(const RecurrentNetwork &net, const Vector &x, Mode mode, Rng &rng) {
  if (net.kind != CellKind::feedforward)
    throw ConfigError("ff_forward: network is not feed-forward");
  if (x.dim() != net.input_dim())
    throw ShapeError("ff_forward: input " + shape_string(x) + ", expected (" +
                     std::to_string(net.input_dim()) + ")");
  Vector in = apply_normalizer(net.normalizer, x);
  for (const auto &layer : net.layers) {
    in = dense_relu(std::get<DenseParams>(layer), in);
    if (mode == Mode::train && net.dropout > 0.0) {
      const Vector m = dropout_mask(in.dim(), net.dropout, rng);
      for (std::size_t k = 0; k < in.dim(); ++k)
        in[k] *= m[k];
    }
  }
  return log_softmax(affine(net.output.W, in, net.output.b));
}

} // namespace nnam

#endif // NNAM_NETWORK_HPP
