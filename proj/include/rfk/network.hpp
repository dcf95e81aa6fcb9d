#pragma once

// Radiance-field MLP with hand-derived reverse mode and Adam.
//
// Topology (default widths):
//   trunk    : 8 ReLU layers of 256 channels; the encoded position is
//              concatenated to the activation entering trunk layer 5
//   sigma    : 256 -> 1, ReLU (after optional pre-activation noise)
//   feature  : 256 -> 256, linear
//   view     : (256 + direction dims) -> 128, ReLU
//   rgb      : 128 -> 3, sigmoid
//
// Density depends on position only: sigma is produced before the direction
// encoding enters the network.
//
// All parameters live in one flat vector; per-layer weights (out x in,
// column-major) and biases are views into it. Batched evaluation treats each
// column of the input matrices as one sample.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rfk/encoding.hpp"
#include "rfk/geometry.hpp"
#include "rfk/rng.hpp"

namespace rfk {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Raised when optimization produces non-finite values.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Emitted color and volume density at one query.
struct FieldSample {
  Vec3 rgb = Vec3::Zero();
  double sigma = 0.0;
};

struct LayerDims {
  int in = 0;
  int out = 0;
};

struct MlpShape {
  int position_dims = 60;
  int direction_dims = 24;
  int width = 256;
  int depth = 8;
  int skip_layer = 5;
  int view_width = 128;

  static MlpShape for_encoding(const EncodingConfig& enc) {
    MlpShape s;
    s.position_dims = enc.position_dims();
    s.direction_dims = enc.direction_dims();
    return s;
  }

  /// Same topology with narrow layers, for derivative checks.
  static MlpShape miniature(int position_dims, int direction_dims, int width = 8, int view_width = 4) {
    MlpShape s;
    s.position_dims = position_dims;
    s.direction_dims = direction_dims;
    s.width = width;
    s.view_width = view_width;
    return s;
  }

  void validate() const {
    if (position_dims < 1 || direction_dims < 0 || width < 1 || view_width < 1 || depth < 1)
      throw std::invalid_argument("MlpShape: invalid layer sizes");
    if (skip_layer < 1 || skip_layer >= depth) throw std::invalid_argument("MlpShape: skip layer out of range");
  }

  int sigma_layer() const { return depth; }
  int feature_layer() const { return depth + 1; }
  int view_layer() const { return depth + 2; }
  int rgb_layer() const { return depth + 3; }
  int layer_count() const { return depth + 4; }

  LayerDims dims(int layer) const {
    if (layer == 0) return {position_dims, width};
    if (layer < depth) return {layer == skip_layer ? width + position_dims : width, width};
    if (layer == sigma_layer()) return {width, 1};
    if (layer == feature_layer()) return {width, width};
    if (layer == view_layer()) return {width + direction_dims, view_width};
    if (layer == rgb_layer()) return {view_width, 3};
    throw std::out_of_range("MlpShape: layer index " + std::to_string(layer));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < layer_count(); ++l) {
      auto d = dims(l);
      n += static_cast<std::size_t>(d.in + 1) * d.out;
    }
    return n;
  }

  bool operator==(const MlpShape&) const = default;
};

template <typename Scalar>
class MlpParams {
 public:
  using Weight = Eigen::Map<MatrixX<Scalar>>;
  using ConstWeight = Eigen::Map<const MatrixX<Scalar>>;
  using Bias = Eigen::Map<VectorX<Scalar>>;
  using ConstBias = Eigen::Map<const VectorX<Scalar>>;

  MlpParams() : MlpParams(MlpShape{}) {}

  explicit MlpParams(const MlpShape& shape) : shape_(shape) {
    shape_.validate();
    std::size_t offset = 0;
    for (int l = 0; l < shape_.layer_count(); ++l) {
      offsets_.push_back(offset);
      auto d = shape_.dims(l);
      offset += static_cast<std::size_t>(d.in + 1) * d.out;
    }
    values_ = VectorX<Scalar>::Zero(static_cast<Eigen::Index>(offset));
  }

  const MlpShape& shape() const { return shape_; }
  VectorX<Scalar>& values() { return values_; }
  const VectorX<Scalar>& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  Weight weight(int layer) {
    auto d = shape_.dims(layer);
    return Weight(values_.data() + offsets_[layer], d.out, d.in);
  }
  ConstWeight weight(int layer) const {
    auto d = shape_.dims(layer);
    return ConstWeight(values_.data() + offsets_[layer], d.out, d.in);
  }
  Bias bias(int layer) {
    auto d = shape_.dims(layer);
    return Bias(values_.data() + offsets_[layer] + static_cast<std::size_t>(d.in) * d.out, d.out);
  }
  ConstBias bias(int layer) const {
    auto d = shape_.dims(layer);
    return ConstBias(values_.data() + offsets_[layer] + static_cast<std::size_t>(d.in) * d.out, d.out);
  }

  /// Half-open range of flat indices owned by `layer` (weights then bias).
  std::pair<std::size_t, std::size_t> layer_range(int layer) const {
    auto d = shape_.dims(layer);
    return {offsets_[layer], offsets_[layer] + static_cast<std::size_t>(d.in + 1) * d.out};
  }

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> out(shape_);
    out.values() = values_.template cast<Other>();
    return out;
  }

 private:
  MlpShape shape_;
  std::vector<std::size_t> offsets_;
  VectorX<Scalar> values_;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
/// Values are drawn in double so float and double networks share them;
/// `network` selects an independent stream (coarse 0, fine 1).
template <typename Scalar>
MlpParams<Scalar> init_params(const MlpShape& shape, std::uint64_t seed, std::uint64_t network = 0) {
  MlpParams<Scalar> p(shape);
  for (int l = 0; l < shape.layer_count(); ++l) {
    auto d = shape.dims(l);
    const double bound = std::sqrt(6.0 / (d.in + d.out));
    Rng rng = Rng::stream(seed, Substream::init, {network, static_cast<std::uint64_t>(l)});
    auto w = p.weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  return p;
}

/// Activations retained by a batched forward pass for the backward pass.
template <typename Scalar>
struct ForwardCache {
  const void* owner = nullptr;
  MatrixX<Scalar> position;   // encoded positions (position_dims x M)
  MatrixX<Scalar> direction;  // encoded directions (direction_dims x M)
  std::vector<MatrixX<Scalar>> trunk;
  RowVectorX<Scalar> sigma_preactivation;
  MatrixX<Scalar> feature;
  MatrixX<Scalar> view_hidden;
  MatrixX<Scalar> rgb;
  RowVectorX<Scalar> sigma;

  Eigen::Index samples() const { return rgb.cols(); }
};

/// Batched network outputs: rgb (3 x M) in (0,1), sigma (1 x M) >= 0.
template <typename Scalar>
struct FieldBatch {
  MatrixX<Scalar> rgb;
  RowVectorX<Scalar> sigma;
};

namespace detail {

template <typename Scalar>
void add_bias_relu(MatrixX<Scalar>& z, const typename MlpParams<Scalar>::ConstBias& b) {
  z.colwise() += b;
  z = z.cwiseMax(Scalar(0));
}

}  // namespace detail

/// Batched forward pass. `sigma_noise`, when given, is added to the raw
/// density before rectification. The cache keeps everything backward needs.
template <typename Scalar>
void forward(const MlpParams<Scalar>& params, MatrixX<Scalar> enc_position, MatrixX<Scalar> enc_direction,
             const RowVectorX<Scalar>* sigma_noise, ForwardCache<Scalar>& cache) {
  const MlpShape& s = params.shape();
  const Eigen::Index m = enc_position.cols();
  if (enc_position.rows() != s.position_dims || enc_direction.rows() != s.direction_dims ||
      enc_direction.cols() != m)
    throw std::logic_error("forward: encoded input shape does not match network shape");
  if (sigma_noise && sigma_noise->cols() != m) throw std::logic_error("forward: noise length mismatch");

  cache.owner = &params;
  cache.position = std::move(enc_position);
  cache.direction = std::move(enc_direction);
  cache.trunk.resize(static_cast<std::size_t>(s.depth));

  for (int l = 0; l < s.depth; ++l) {
    auto w = params.weight(l);
    MatrixX<Scalar>& z = cache.trunk[static_cast<std::size_t>(l)];
    if (l == 0) {
      z.noalias() = w * cache.position;
    } else if (l == s.skip_layer) {
      z.noalias() = w.leftCols(s.width) * cache.trunk[static_cast<std::size_t>(l - 1)];
      z.noalias() += w.rightCols(s.position_dims) * cache.position;
    } else {
      z.noalias() = w * cache.trunk[static_cast<std::size_t>(l - 1)];
    }
    detail::add_bias_relu<Scalar>(z, params.bias(l));
  }
  const MatrixX<Scalar>& top = cache.trunk.back();

  cache.sigma_preactivation.noalias() = params.weight(s.sigma_layer()) * top;
  cache.sigma_preactivation.array() += params.bias(s.sigma_layer())(0);
  if (sigma_noise) cache.sigma_preactivation += *sigma_noise;
  cache.sigma = cache.sigma_preactivation.cwiseMax(Scalar(0));

  cache.feature.noalias() = params.weight(s.feature_layer()) * top;
  cache.feature.colwise() += params.bias(s.feature_layer());

  auto wv = params.weight(s.view_layer());
  cache.view_hidden.noalias() = wv.leftCols(s.width) * cache.feature;
  if (s.direction_dims > 0) cache.view_hidden.noalias() += wv.rightCols(s.direction_dims) * cache.direction;
  detail::add_bias_relu<Scalar>(cache.view_hidden, params.bias(s.view_layer()));

  cache.rgb.noalias() = params.weight(s.rgb_layer()) * cache.view_hidden;
  cache.rgb.colwise() += params.bias(s.rgb_layer());
  cache.rgb = (Scalar(1) + (-cache.rgb.array()).exp()).inverse().matrix();
}

template <typename Scalar>
FieldBatch<Scalar> forward(const MlpParams<Scalar>& params, MatrixX<Scalar> enc_position,
                           MatrixX<Scalar> enc_direction, const RowVectorX<Scalar>* sigma_noise = nullptr) {
  ForwardCache<Scalar> cache;
  forward(params, std::move(enc_position), std::move(enc_direction), sigma_noise, cache);
  return {std::move(cache.rgb), std::move(cache.sigma)};
}

/// Gradient of sum_j (grad_rgb_j . rgb_j + grad_sigma_j * sigma_j) with
/// respect to every parameter. ReLU derivatives at 0 are taken as 0.
template <typename Scalar>
MlpParams<Scalar> backward(const MlpParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                           const MatrixX<Scalar>& grad_rgb, const RowVectorX<Scalar>& grad_sigma) {
  const MlpShape& s = params.shape();
  const Eigen::Index m = cache.samples();
  if (cache.owner != &params) throw std::logic_error("backward: cache was produced by a different network");
  if (grad_rgb.rows() != 3 || grad_rgb.cols() != m || grad_sigma.cols() != m)
    throw std::logic_error("backward: upstream gradient shape does not match the cached batch");

  MlpParams<Scalar> grad(s);

  // rgb head: sigmoid
  MatrixX<Scalar> dz = (grad_rgb.array() * cache.rgb.array() * (Scalar(1) - cache.rgb.array())).matrix();
  grad.weight(s.rgb_layer()).noalias() = dz * cache.view_hidden.transpose();
  grad.bias(s.rgb_layer()) = dz.rowwise().sum();
  MatrixX<Scalar> dh = params.weight(s.rgb_layer()).transpose() * dz;

  // view layer: ReLU over [feature; direction]
  dz = (dh.array() * (cache.view_hidden.array() > Scalar(0)).template cast<Scalar>()).matrix();
  auto gv = grad.weight(s.view_layer());
  gv.leftCols(s.width).noalias() = dz * cache.feature.transpose();
  if (s.direction_dims > 0) gv.rightCols(s.direction_dims).noalias() = dz * cache.direction.transpose();
  grad.bias(s.view_layer()) = dz.rowwise().sum();
  MatrixX<Scalar> dfeature = params.weight(s.view_layer()).leftCols(s.width).transpose() * dz;

  const MatrixX<Scalar>& top = cache.trunk.back();

  // feature head: linear
  grad.weight(s.feature_layer()).noalias() = dfeature * top.transpose();
  grad.bias(s.feature_layer()) = dfeature.rowwise().sum();
  MatrixX<Scalar> da = params.weight(s.feature_layer()).transpose() * dfeature;

  // sigma head: ReLU of (pre-activation + noise)
  RowVectorX<Scalar> dsig =
      (grad_sigma.array() * (cache.sigma_preactivation.array() > Scalar(0)).template cast<Scalar>()).matrix();
  grad.weight(s.sigma_layer()).noalias() = dsig * top.transpose();
  grad.bias(s.sigma_layer())(0) = dsig.sum();
  da.noalias() += params.weight(s.sigma_layer()).transpose() * dsig;

  for (int l = s.depth - 1; l >= 0; --l) {
    const MatrixX<Scalar>& act = cache.trunk[static_cast<std::size_t>(l)];
    dz = (da.array() * (act.array() > Scalar(0)).template cast<Scalar>()).matrix();
    auto gw = grad.weight(l);
    grad.bias(l) = dz.rowwise().sum();
    if (l == 0) {
      gw.noalias() = dz * cache.position.transpose();
      break;
    }
    const MatrixX<Scalar>& below = cache.trunk[static_cast<std::size_t>(l - 1)];
    auto w = params.weight(l);
    if (l == s.skip_layer) {
      gw.leftCols(s.width).noalias() = dz * below.transpose();
      gw.rightCols(s.position_dims).noalias() = dz * cache.position.transpose();
      da.noalias() = w.leftCols(s.width).transpose() * dz;
    } else {
      gw.noalias() = dz * below.transpose();
      da.noalias() = w.transpose() * dz;
    }
  }
  return grad;
}

/// Single-query forward pass; noise ~ N(0, noise_std^2) is drawn from `rng`
/// when noise_std > 0.
template <typename Scalar>
std::pair<FieldSample, ForwardCache<Scalar>> forward_sample(const MlpParams<Scalar>& params,
                                                            const VectorX<Scalar>& enc_position,
                                                            const VectorX<Scalar>& enc_direction,
                                                            double noise_std, Rng& rng) {
  ForwardCache<Scalar> cache;
  RowVectorX<Scalar> noise;
  if (noise_std > 0.0) {
    noise.resize(1);
    noise(0) = static_cast<Scalar>(noise_std * rng.normal());
  }
  forward<Scalar>(params, enc_position, enc_direction, noise_std > 0.0 ? &noise : nullptr, cache);
  FieldSample out;
  out.rgb = cache.rgb.col(0).template cast<double>();
  out.sigma = static_cast<double>(cache.sigma(0));
  return {out, std::move(cache)};
}

template <typename Scalar>
MlpParams<Scalar> backward_sample(const MlpParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                                  const Vec3& grad_rgb, double grad_sigma) {
  MatrixX<Scalar> g = grad_rgb.cast<Scalar>();
  RowVectorX<Scalar> gs(1);
  gs(0) = static_cast<Scalar>(grad_sigma);
  return backward(params, cache, g, gs);
}

struct AdamHyperparameters {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

template <typename Scalar>
struct AdamState {
  VectorX<Scalar> first_moment;
  VectorX<Scalar> second_moment;
  std::int64_t step_count = 0;

  static AdamState zeros(std::size_t n) {
    AdamState s;
    s.first_moment = VectorX<Scalar>::Zero(static_cast<Eigen::Index>(n));
    s.second_moment = VectorX<Scalar>::Zero(static_cast<Eigen::Index>(n));
    return s;
  }
};

/// One bias-corrected Adam update:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   w <- w - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Non-finite gradients leave params and state untouched and throw.
template <typename Scalar>
void adam_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads, AdamState<Scalar>& state, double lr,
               const AdamHyperparameters& hp = {}) {
  if (grads.size() != params.size() || static_cast<std::size_t>(state.first_moment.size()) != params.size() ||
      static_cast<std::size_t>(state.second_moment.size()) != params.size())
    throw std::logic_error("adam_step: shape mismatch");
  if (!grads.values().allFinite()) throw DivergenceError("adam_step: non-finite gradient component");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const Scalar b1 = static_cast<Scalar>(hp.beta1), b2 = static_cast<Scalar>(hp.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(hp.beta1, t)));
  const Scalar c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(hp.beta2, t)));
  const Scalar step = static_cast<Scalar>(lr), eps = static_cast<Scalar>(hp.epsilon);

  auto g = grads.values().array();
  auto m = state.first_moment.array();
  auto v = state.second_moment.array();
  m = b1 * m + (Scalar(1) - b1) * g;
  v = b2 * v + (Scalar(1) - b2) * g.square();
  params.values().array() -= step * (m * c1) / ((v * c2).sqrt() + eps);
}

}  // namespace rfk
