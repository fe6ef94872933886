// SPDX-License-Identifier: Apache-2.0
/**
 * @file   numeric.hpp
 * @brief  Dense vectors and matrices, activations, losses, a splittable
 *         counter-based random generator and the central-difference
 *         gradient oracle.
 */
#ifndef NNAM_NUMERIC_HPP
#define NNAM_NUMERIC_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nnam/error.hpp"

namespace nnam {

/**
 * Dense column vector of doubles.
 */
class Vector {
public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double &operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double> &raw() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Vector &, const Vector &) = default;

private:
  std::vector<double> data_;
};

/**
 * Dense row-major matrix of doubles.
 */
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols)
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " does not match " + std::to_string(rows) + "x" +
                       std::to_string(cols));
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto &r : rows) {
      if (r.size() != cols_)
        throw ShapeError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double &operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  Vector row_vector(std::size_t r) const {
    auto s = row(r);
    return Vector(std::vector<double>(s.begin(), s.end()));
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix &, const Matrix &) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Matrix &m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline std::string shape_string(const Vector &v) {
  return "(" + std::to_string(v.dim()) + ")";
}

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/**
 * Counter-based generator: draw n is a SplitMix64 finalizer applied to
 * key + n * golden-gamma, so streams depend only on the seed and the number
 * of draws. Children produced by split() are independent streams; an Rng is
 * never shared between threads.
 */
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ kSeedSalt)) {}

  std::uint64_t next_u64() noexcept { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Standard normal via Box-Muller; one draw per call.
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n) noexcept {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = next_u64();
    while (x >= limit)
      x = next_u64();
    return static_cast<std::size_t>(x % bound);
  }

  /// Uniform integer in [lo, hi].
  std::size_t between(std::size_t lo, std::size_t hi) noexcept {
    return lo + below(hi - lo + 1);
  }

  /// Independent child stream; advances this generator by one draw.
  Rng split() noexcept { return Rng(next_u64(), Tag{}); }

  template <typename T> void shuffle(std::vector<T> &items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1], items[below(i)]);
  }

private:
  struct Tag {};
  Rng(std::uint64_t key, Tag) : key_(mix(key)) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kSeedSalt = 0xD1B54A32D192ED03ULL;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Linear algebra kernels
// ---------------------------------------------------------------------------

/// out += W x
inline void add_product(const Matrix &W, std::span<const double> x,
                        std::span<double> out) {
  const std::size_t cols = W.cols();
  for (std::size_t r = 0; r < W.rows(); ++r) {
    const double *w = W.row(r).data();
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      acc += w[c] * x[c];
    out[r] += acc;
  }
}

/// out += W^T y
inline void add_transposed_product(const Matrix &W, std::span<const double> y,
                                   std::span<double> out) {
  const std::size_t cols = W.cols();
  for (std::size_t r = 0; r < W.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0)
      continue;
    const double *w = W.row(r).data();
    for (std::size_t c = 0; c < cols; ++c)
      out[c] += w[c] * yr;
  }
}

/// G += y x^T
inline void add_outer(Matrix &G, std::span<const double> y,
                      std::span<const double> x) {
  const std::size_t cols = G.cols();
  for (std::size_t r = 0; r < G.rows(); ++r) {
    const double yr = y[r];
    if (yr == 0.0)
      continue;
    double *g = G.row(r).data();
    for (std::size_t c = 0; c < cols; ++c)
      g[c] += yr * x[c];
  }
}

/**
 * Returns W x + b.
 */
inline Vector affine(const Matrix &W, const Vector &x, const Vector &b) {
  if (W.cols() != x.dim() || W.rows() != b.dim())
    throw ShapeError("affine: W is " + shape_string(W) + ", x is " +
                     shape_string(x) + ", b is " + shape_string(b));
  Vector out = b;
  add_product(W, x.values(), out.values());
  return out;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

inline double sigmoid(double v) noexcept {
  if (v >= 0.0)
    return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Vector sigmoid(const Vector &x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i)
    out[i] = sigmoid(x[i]);
  return out;
}

inline Vector tanh(const Vector &x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i)
    out[i] = std::tanh(x[i]);
  return out;
}

inline Vector relu(const Vector &x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i)
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

/// log Σ exp(x), max-shifted.
inline double log_sum_exp(std::span<const double> x) {
  if (x.empty())
    return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m))
    return m;
  double s = 0.0;
  for (double v : x)
    s += std::exp(v - m);
  return m + std::log(s);
}

inline Vector log_softmax(const Vector &x) {
  if (x.empty())
    throw ShapeError("log_softmax: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x)
    s += std::exp(v - m);
  const double lse = std::log(s);
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i)
    out[i] = x[i] - m - lse;
  return out;
}

inline Vector softmax(const Vector &x) {
  if (x.empty())
    throw ShapeError("softmax: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  Vector out(x.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) {
    out[i] = std::exp(x[i] - m);
    s += out[i];
  }
  for (double &v : out)
    v /= s;
  return out;
}

/**
 * Negative log-probability of the target class.
 */
inline double cross_entropy(const Vector &log_probs, std::size_t target) {
  if (target >= log_probs.dim())
    throw IndexError("cross_entropy: target " + std::to_string(target) +
                     " out of range for " + std::to_string(log_probs.dim()) +
                     " classes");
  return -log_probs[target];
}

/**
 * Central-difference gradient of a scalar function: coordinate i is
 * (f(θ + h e_i) - f(θ - h e_i)) / 2h.
 */
inline Vector finite_diff_gradient(const std::function<double(const Vector &)> &f,
                                   const Vector &theta, double h) {
  if (!(h > 0.0))
    throw ConfigError("finite_diff_gradient: step must be positive");
  Vector probe = theta;
  Vector grad(theta.dim());
  for (std::size_t i = 0; i < theta.dim(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw OracleError("finite_diff_gradient: non-finite value at coordinate " +
                        std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

} // namespace nnam

#endif // NNAM_NUMERIC_HPP
