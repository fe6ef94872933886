// SPDX-License-Identifier: Apache-2.0
/**
 * @file   features.hpp
 * @brief  Input normalization and context-window frame stacking.
 */
#ifndef NNAM_FEATURES_HPP
#define NNAM_FEATURES_HPP

#include <cmath>
#include <span>

#include "nnam/numeric.hpp"

namespace nnam {

/// Per-dimension affine input transform: (x - shift) / scale.
struct Normalizer {
  Vector shift;
  Vector scale;

  std::size_t dim() const noexcept { return shift.dim(); }
  bool empty() const noexcept { return shift.empty(); }

  static Normalizer identity(std::size_t dim) {
    return {Vector(dim, 0.0), Vector(dim, 1.0)};
  }

  friend bool operator==(const Normalizer &, const Normalizer &) = default;
};

inline constexpr double kNormalizerScaleFloor = 1e-6;

/**
 * Mean and standard deviation per dimension over every frame of every
 * sequence; deviations are floored at kNormalizerScaleFloor.
 */
inline Normalizer fit_normalizer(std::span<const Matrix> sequences) {
  std::size_t dim = 0;
  std::size_t frames = 0;
  for (const auto &s : sequences) {
    if (s.rows() == 0)
      continue;
    if (dim == 0)
      dim = s.cols();
    else if (s.cols() != dim)
      throw ShapeError("fit_normalizer: inconsistent feature dimension");
    frames += s.rows();
  }
  if (frames == 0)
    throw DataError("fit_normalizer: empty dataset");

  Vector mean(dim), var(dim);
  for (const auto &s : sequences)
    for (std::size_t t = 0; t < s.rows(); ++t)
      for (std::size_t d = 0; d < dim; ++d)
        mean[d] += s(t, d);
  for (auto &m : mean)
    m /= static_cast<double>(frames);
  for (const auto &s : sequences)
    for (std::size_t t = 0; t < s.rows(); ++t)
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = s(t, d) - mean[d];
        var[d] += diff * diff;
      }
  Normalizer n{mean, Vector(dim)};
  for (std::size_t d = 0; d < dim; ++d)
    n.scale[d] = std::max(std::sqrt(var[d] / static_cast<double>(frames)),
                          kNormalizerScaleFloor);
  return n;
}

/**
 * Normalizes x. When x is a stack of k frames (x.dim() = k * n.dim()) the
 * transform is applied to each block.
 */
inline Vector apply_normalizer(const Normalizer &n, const Vector &x) {
  if (n.dim() == 0 || x.dim() % n.dim() != 0)
    throw ShapeError("apply_normalizer: input " + shape_string(x) +
                     " vs normalizer " + shape_string(n.shift));
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) {
    const std::size_t d = i % n.dim();
    out[i] = (x[i] - n.shift[d]) / n.scale[d];
  }
  return out;
}

inline Matrix apply_normalizer(const Normalizer &n, const Matrix &frames) {
  if (frames.cols() != n.dim())
    throw ShapeError("apply_normalizer: frames " + shape_string(frames) +
                     " vs normalizer " + shape_string(n.shift));
  Matrix out(frames.rows(), frames.cols());
  for (std::size_t t = 0; t < frames.rows(); ++t)
    for (std::size_t d = 0; d < frames.cols(); ++d)
      out(t, d) = (frames(t, d) - n.shift[d]) / n.scale[d];
  return out;
}

/**
 * Row t of the result concatenates frames t-k .. t+k (k = context / 2),
 * repeating the first/last frame past the edges.
 */
inline Matrix stack_frames(const Matrix &frames, std::size_t context) {
  if (context % 2 == 0)
    throw ConfigError("stack_frames: context must be odd, got " +
                      std::to_string(context));
  const std::size_t T = frames.rows(), D = frames.cols();
  const long half = static_cast<long>(context / 2);
  Matrix out(T, context * D);
  for (std::size_t t = 0; t < T; ++t) {
    for (long k = -half; k <= half; ++k) {
      long src = static_cast<long>(t) + k;
      src = std::clamp(src, 0L, static_cast<long>(T) - 1);
      const auto from = frames.row(static_cast<std::size_t>(src));
      auto *dst = out.row(t).data() + static_cast<std::size_t>(k + half) * D;
      std::copy(from.begin(), from.end(), dst);
    }
  }
  return out;
}

} // namespace nnam

#endif // NNAM_FEATURES_HPP
