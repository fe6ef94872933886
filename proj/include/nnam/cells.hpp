// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cells.hpp
 * @brief  LSTM, GRU, zoneout-LSTM and ReLU layer parameters and single-step
 *         forward equations.
 *
 * LSTM (no peepholes):
 *   i = σ(W_xi x + W_hi h + b_i)      f = σ(W_xf x + W_hf h + b_f)
 *   o = σ(W_xo x + W_ho h + b_o)      g = tanh(W_xc x + W_hc h + b_c)
 *   c' = f * c + i * g                h' = o * tanh(c')
 *
 * GRU:
 *   r = σ(W_r x + U_r h + b_r)        z = σ(W_z x + U_z h + b_z)
 *   n = tanh(W x + U (r * h) + b_h)   h' = (1 - z) * h + z * n
 */
#ifndef NNAM_CELLS_HPP
#define NNAM_CELLS_HPP

#include <cmath>
#include <string_view>

#include "nnam/numeric.hpp"

namespace nnam {

enum class Mode { train, eval };

/// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng &rng) {
  Matrix m(rows, cols);
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double &v : m.values())
    v = rng.uniform(-s, s);
  return m;
}

struct LstmParams {
  Matrix W_xi, W_hi, W_xf, W_hf, W_xo, W_ho, W_xc, W_hc;
  Vector b_i, b_f, b_o, b_c;

  std::size_t input_dim() const noexcept { return W_xi.cols(); }
  std::size_t hidden_dim() const noexcept { return W_xi.rows(); }

  static LstmParams zeros(std::size_t input_dim, std::size_t hidden_dim) {
    LstmParams p;
    for (Matrix *m : {&p.W_xi, &p.W_xf, &p.W_xo, &p.W_xc})
      *m = Matrix(hidden_dim, input_dim);
    for (Matrix *m : {&p.W_hi, &p.W_hf, &p.W_ho, &p.W_hc})
      *m = Matrix(hidden_dim, hidden_dim);
    for (Vector *v : {&p.b_i, &p.b_f, &p.b_o, &p.b_c})
      *v = Vector(hidden_dim);
    return p;
  }

  /// Glorot-uniform weights, zero biases except b_f = 1.
  static LstmParams random(std::size_t input_dim, std::size_t hidden_dim, Rng &rng) {
    LstmParams p = zeros(input_dim, hidden_dim);
    for (Matrix *m : {&p.W_xi, &p.W_hi, &p.W_xf, &p.W_hf, &p.W_xo, &p.W_ho,
                      &p.W_xc, &p.W_hc})
      *m = glorot_uniform(m->rows(), m->cols(), rng);
    p.b_f.fill(1.0);
    return p;
  }

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <typename Self, typename F> static void visit(Self &p, F &&f) {
    f("W_xi", p.W_xi); f("W_hi", p.W_hi); f("b_i", p.b_i);
    f("W_xf", p.W_xf); f("W_hf", p.W_hf); f("b_f", p.b_f);
    f("W_xo", p.W_xo); f("W_ho", p.W_ho); f("b_o", p.b_o);
    f("W_xc", p.W_xc); f("W_hc", p.W_hc); f("b_c", p.b_c);
  }

  friend bool operator==(const LstmParams &, const LstmParams &) = default;
};

struct GruParams {
  Matrix W_r, W_z, W;
  Matrix U_r, U_z, U;
  Vector b_r, b_z, b_h;

  std::size_t input_dim() const noexcept { return W.cols(); }
  std::size_t hidden_dim() const noexcept { return W.rows(); }

  static GruParams zeros(std::size_t input_dim, std::size_t hidden_dim) {
    GruParams p;
    for (Matrix *m : {&p.W_r, &p.W_z, &p.W})
      *m = Matrix(hidden_dim, input_dim);
    for (Matrix *m : {&p.U_r, &p.U_z, &p.U})
      *m = Matrix(hidden_dim, hidden_dim);
    for (Vector *v : {&p.b_r, &p.b_z, &p.b_h})
      *v = Vector(hidden_dim);
    return p;
  }

  static GruParams random(std::size_t input_dim, std::size_t hidden_dim, Rng &rng) {
    GruParams p = zeros(input_dim, hidden_dim);
    for (Matrix *m : {&p.W_r, &p.W_z, &p.W, &p.U_r, &p.U_z, &p.U})
      *m = glorot_uniform(m->rows(), m->cols(), rng);
    return p;
  }

  template <typename Self, typename F> static void visit(Self &p, F &&f) {
    f("W_r", p.W_r); f("U_r", p.U_r); f("b_r", p.b_r);
    f("W_z", p.W_z); f("U_z", p.U_z); f("b_z", p.b_z);
    f("W", p.W); f("U", p.U); f("b_h", p.b_h);
  }

  friend bool operator==(const GruParams &, const GruParams &) = default;
};

/// Affine layer; ReLU hidden layer in feed-forward nets, and the output layer.
struct DenseParams {
  Matrix W;
  Vector b;

  std::size_t input_dim() const noexcept { return W.cols(); }
  std::size_t hidden_dim() const noexcept { return W.rows(); }

  static DenseParams zeros(std::size_t input_dim, std::size_t output_dim) {
    return {Matrix(output_dim, input_dim), Vector(output_dim)};
  }

  static DenseParams random(std::size_t input_dim, std::size_t output_dim, Rng &rng) {
    return {glorot_uniform(output_dim, input_dim, rng), Vector(output_dim)};
  }

  template <typename Self, typename F> static void visit(Self &p, F &&f) {
    f("W", p.W); f("b", p.b);
  }

  friend bool operator==(const DenseParams &, const DenseParams &) = default;
};

/// Zoneout probabilities for the cell (d_c) and hidden (d_h) states.
struct ZoneoutConfig {
  double d_c = 0.5;
  double d_h = 0.5;

  friend bool operator==(const ZoneoutConfig &, const ZoneoutConfig &) = default;
};

struct LayerState {
  Vector h;
  Vector c; ///< empty for GRU and ReLU layers

  static LayerState zeros(std::size_t hidden_dim, bool with_cell = true) {
    return {Vector(hidden_dim), with_cell ? Vector(hidden_dim) : Vector()};
  }
};

/// Intermediate values of one LSTM step, kept for backpropagation.
struct LstmActivations {
  Vector i, f, o, g;
  Vector c;      ///< candidate cell state c'
  Vector tanh_c; ///< tanh(c')
  Vector h;      ///< candidate output h'
};

/// Intermediate values of one GRU step.
struct GruActivations {
  Vector r, z, n;
  Vector rh; ///< r * h_prev
  Vector h;
};

namespace detail {

inline void check_step_dims(std::size_t in, std::size_t hid, const Vector &x,
                            const Vector &h_prev, const char *who) {
  if (x.dim() != in || h_prev.dim() != hid)
    throw ShapeError(std::string(who) + ": expected x (" + std::to_string(in) +
                     ") and h (" + std::to_string(hid) + "), got x " +
                     shape_string(x) + " and h " + shape_string(h_prev));
}

inline Vector gate_preactivation(const Matrix &Wx, const Matrix &Wh,
                                 const Vector &b, const Vector &x,
                                 const Vector &h) {
  Vector a = b;
  add_product(Wx, x.values(), a.values());
  add_product(Wh, h.values(), a.values());
  return a;
}

} // namespace detail

inline LstmActivations lstm_activations(const LstmParams &p, const Vector &x,
                                        const Vector &h_prev,
                                        const Vector &c_prev) {
  detail::check_step_dims(p.input_dim(), p.hidden_dim(), x, h_prev, "lstm_step");
  if (c_prev.dim() != p.hidden_dim())
    throw ShapeError("lstm_step: cell state " + shape_string(c_prev) +
                     " vs hidden " + std::to_string(p.hidden_dim()));
  LstmActivations a;
  a.i = sigmoid(detail::gate_preactivation(p.W_xi, p.W_hi, p.b_i, x, h_prev));
  a.f = sigmoid(detail::gate_preactivation(p.W_xf, p.W_hf, p.b_f, x, h_prev));
  a.o = sigmoid(detail::gate_preactivation(p.W_xo, p.W_ho, p.b_o, x, h_prev));
  a.g = tanh(detail::gate_preactivation(p.W_xc, p.W_hc, p.b_c, x, h_prev));
  const std::size_t H = p.hidden_dim();
  a.c = Vector(H);
  a.tanh_c = Vector(H);
  a.h = Vector(H);
  for (std::size_t k = 0; k < H; ++k) {
    a.c[k] = a.f[k] * c_prev[k] + a.i[k] * a.g[k];
    a.tanh_c[k] = std::tanh(a.c[k]);
    a.h[k] = a.o[k] * a.tanh_c[k];
  }
  return a;
}

inline LayerState lstm_step(const LstmParams &p, const Vector &x,
                            const LayerState &state) {
  auto a = lstm_activations(p, x, state.h, state.c);
  return {std::move(a.h), std::move(a.c)};
}

inline GruActivations gru_activations(const GruParams &p, const Vector &x,
                                      const Vector &h_prev) {
  detail::check_step_dims(p.input_dim(), p.hidden_dim(), x, h_prev, "gru_step");
  const std::size_t H = p.hidden_dim();
  GruActivations a;
  a.r = sigmoid(detail::gate_preactivation(p.W_r, p.U_r, p.b_r, x, h_prev));
  a.z = sigmoid(detail::gate_preactivation(p.W_z, p.U_z, p.b_z, x, h_prev));
  a.rh = Vector(H);
  for (std::size_t k = 0; k < H; ++k)
    a.rh[k] = a.r[k] * h_prev[k];
  a.n = tanh(detail::gate_preactivation(p.W, p.U, p.b_h, x, a.rh));
  a.h = Vector(H);
  for (std::size_t k = 0; k < H; ++k)
    a.h[k] = (1.0 - a.z[k]) * h_prev[k] + a.z[k] * a.n[k];
  return a;
}

inline Vector gru_step(const GruParams &p, const Vector &x, const Vector &h_prev) {
  return gru_activations(p, x, h_prev).h;
}

/**
 * Mixes a candidate state with the previous one: keep * prev + (1 - keep) * cand.
 * Keep factors are 0/1 masks in training and the zoneout probabilities at
 * evaluation time.
 */
inline Vector zoneout_mix(const Vector &prev, const Vector &cand, const Vector &keep) {
  Vector out(cand.dim());
  for (std::size_t k = 0; k < cand.dim(); ++k)
    out[k] = keep[k] * prev[k] + (1.0 - keep[k]) * cand[k];
  return out;
}

/// Keep factors for one zoneout step: Bernoulli(d) draws in training, d otherwise.
inline Vector zoneout_keep(double d, std::size_t dim, Mode mode, Rng &rng) {
  Vector keep(dim, d);
  if (mode == Mode::train)
    for (auto &k : keep)
      k = rng.bernoulli(d) ? 1.0 : 0.0;
  return keep;
}

/**
 * LSTM step followed by zoneout of both states. Training draws per-unit
 * masks (cell mask first, then hidden); evaluation uses the expectation.
 */
inline LayerState zoneout_lstm_step(const LstmParams &p, const ZoneoutConfig &z,
                                    const Vector &x, const LayerState &state,
                                    Mode mode, Rng &rng) {
  auto cand = lstm_step(p, x, state);
  const std::size_t H = p.hidden_dim();
  const Vector keep_c = zoneout_keep(z.d_c, H, mode, rng);
  const Vector keep_h = zoneout_keep(z.d_h, H, mode, rng);
  return {zoneout_mix(state.h, cand.h, keep_h), zoneout_mix(state.c, cand.c, keep_c)};
}

inline Vector dense_relu(const DenseParams &p, const Vector &x) {
  return relu(affine(p.W, x, p.b));
}

} // namespace nnam

#endif // NNAM_CELLS_HPP
