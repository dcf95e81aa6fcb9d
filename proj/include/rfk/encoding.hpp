#pragma once

// Sinusoidal positional encoding:
//   gamma(p) = (sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p), cos(2^{L-1} pi p))
// applied to each coordinate independently, without the raw value.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#ifndef NDEBUG
#include <atomic>
#include <iostream>
#endif

#include "rfk/geometry.hpp"

namespace rfk {

struct EncodingConfig {
  int L_position = 10;
  int L_direction = 4;
  /// Off: raw xyz / raw unit direction are fed to the network.
  bool positional_encoding = true;
  /// Off: the direction branch is dropped entirely.
  bool view_dependence = true;
  /// Appends the raw coordinate after its sinusoids.
  bool include_raw = false;

  void validate() const {
    if (L_position < 0 || L_direction < 0) throw std::invalid_argument("encoding frequency counts must be >= 0");
  }

  int position_dims() const { return positional_encoding ? 6 * L_position + (include_raw ? 3 : 0) : 3; }

  int direction_dims() const {
    if (!view_dependence) return 0;
    return positional_encoding ? 6 * L_direction + (include_raw ? 3 : 0) : 3;
  }

  /// Direction frequencies scaled with the position frequencies (4 at L = 10).
  static int scaled_direction_frequencies(int L_position) {
    return std::max(1, static_cast<int>(std::lround(L_position * 4.0 / 10.0)));
  }
};

namespace detail {

#ifndef NDEBUG
inline void flag_out_of_range(double p) {
  static std::atomic<bool> warned{false};
  if (std::abs(p) > 1.0 && !warned.exchange(true))
    std::cerr << "rfk: positional encoding input " << p << " lies outside [-1, 1]\n";
}
#endif

}  // namespace detail

/// Writes the 2L encoding of p to out[0 .. 2L). The argument 2^l p is reduced
/// modulo 2 exactly before multiplying by pi, so gamma(p) == gamma(p + 2)
/// whenever p + 2 is representable.
template <typename Scalar>
void encode_scalar_into(double p, int L, Scalar* out) {
#ifndef NDEBUG
  detail::flag_out_of_range(p);
#endif
  for (int l = 0; l < L; ++l) {
    const double reduced = std::remainder(std::ldexp(p, l), 2.0);
    const double arg = std::numbers::pi * reduced;
    out[2 * l] = static_cast<Scalar>(std::sin(arg));
    out[2 * l + 1] = static_cast<Scalar>(std::cos(arg));
  }
}

inline std::vector<double> encode_scalar(double p, int L) {
  if (L < 0) throw std::invalid_argument("encode_scalar: L must be >= 0");
  std::vector<double> out(2 * static_cast<std::size_t>(L));
  encode_scalar_into(p, L, out.data());
  return out;
}

/// Component-major: all 2L values of x, then y, then z.
inline std::vector<double> encode_vec3(const Vec3& v, int L) {
  if (L < 0) throw std::invalid_argument("encode_vec3: L must be >= 0");
  std::vector<double> out(6 * static_cast<std::size_t>(L));
  for (int c = 0; c < 3; ++c) encode_scalar_into(v[c], L, out.data() + 2 * L * c);
  return out;
}

/// Encodes each column of `points` (3 x M) into a (dims x M) network input.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> encode_columns(const Eigen::Matrix3Xd& points, int L,
                                                                     bool positional, bool include_raw) {
  const int dims = positional ? 6 * L + (include_raw ? 3 : 0) : 3;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(dims, points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    Scalar* col = out.col(j).data();
    if (!positional) {
      for (int c = 0; c < 3; ++c) col[c] = static_cast<Scalar>(points(c, j));
      continue;
    }
    for (int c = 0; c < 3; ++c) encode_scalar_into(points(c, j), L, col + 2 * L * c);
    if (include_raw)
      for (int c = 0; c < 3; ++c) col[6 * L + c] = static_cast<Scalar>(points(c, j));
  }
  return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> encode_positions(const Eigen::Matrix3Xd& points,
                                                                       const EncodingConfig& cfg) {
  return encode_columns<Scalar>(points, cfg.L_position, cfg.positional_encoding, cfg.include_raw);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> encode_directions(const Eigen::Matrix3Xd& dirs,
                                                                        const EncodingConfig& cfg) {
  if (!cfg.view_dependence) return Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(0, dirs.cols());
  return encode_columns<Scalar>(dirs, cfg.L_direction, cfg.positional_encoding, cfg.include_raw);
}

}  // namespace rfk
