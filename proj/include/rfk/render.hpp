#pragma once

// Coarse-to-fine ray rendering over any radiance field that can be evaluated
// in batches, and the network-backed field used for training and inference.

#include <Eigen/Dense>

#include <concepts>
#include <span>
#include <stdexcept>
#include <vector>

#include "rfk/encoding.hpp"
#include "rfk/geometry.hpp"
#include "rfk/network.hpp"
#include "rfk/rng.hpp"
#include "rfk/volume.hpp"

namespace rfk {

/// Anything that maps sample positions and unit view directions (3 x M each)
/// to colors and densities.
template <typename F>
concept RadianceField = requires(const F& f, const Eigen::Matrix3Xd& x, const Eigen::Matrix3Xd& d) {
  { f.evaluate(x, d) } -> std::convertible_to<FieldBatch<double>>;
};

struct RenderConfig {
  int n_coarse = 64;
  int n_fine = 128;
  /// Off: one network, n_coarse stratified samples, fine color = coarse color.
  bool hierarchical = true;
  /// Off: bin midpoints and stratum-midpoint inverse-CDF samples (evaluation).
  bool perturb = true;
  Vec3 background = Vec3::Ones();
};

/// A ray prepared for rendering. `view_dir` is the unit direction seen by
/// the field; rays that miss the scene volume render the background.
struct RenderRay {
  Ray ray;
  Vec3 view_dir = -Vec3::UnitZ();
  bool hit = true;
};

struct RayRender {
  RaySampleSet coarse_samples;
  CompositeResult coarse;
  RaySampleSet fine_samples;
  CompositeResult fine;
  /// First column of this ray's samples in the batched field evaluations.
  Eigen::Index coarse_offset = 0;
  Eigen::Index fine_offset = 0;

  const Vec3& color_coarse() const { return coarse.color; }
  const Vec3& color_fine() const { return fine.color; }
};

struct BatchRender {
  std::vector<RayRender> rays;
  FieldBatch<double> coarse_values;
  FieldBatch<double> fine_values;
  bool hierarchical = true;
};

namespace detail {

inline CompositeResult background_only(const Vec3& background) {
  CompositeResult r;
  r.color = background;
  r.transmittance = {1.0};
  return r;
}

inline void append_points(const RenderRay& rr, const RaySampleSet& s, Eigen::Matrix3Xd& points,
                          Eigen::Matrix3Xd& dirs, Eigen::Index offset) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    points.col(offset + static_cast<Eigen::Index>(i)) = rr.ray.at(s.t_values[i]);
    dirs.col(offset + static_cast<Eigen::Index>(i)) = rr.view_dir;
  }
}

inline std::vector<FieldSample> gather(const FieldBatch<double>& values, Eigen::Index offset, std::size_t n) {
  std::vector<FieldSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index j = offset + static_cast<Eigen::Index>(i);
    out[i].rgb = values.rgb.col(j);
    out[i].sigma = values.sigma(j);
  }
  return out;
}

/// Evaluates `field` at every sample of every hit ray and composites.
template <RadianceField Field>
FieldBatch<double> evaluate_and_composite(const Field& field, std::span<const RenderRay> rays,
                                          std::vector<RayRender>& out, bool fine, const Vec3& background) {
  Eigen::Index total = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (!rays[r].hit) continue;
    const RaySampleSet& s = fine ? out[r].fine_samples : out[r].coarse_samples;
    (fine ? out[r].fine_offset : out[r].coarse_offset) = total;
    total += static_cast<Eigen::Index>(s.size());
  }
  Eigen::Matrix3Xd points(3, total), dirs(3, total);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (!rays[r].hit) continue;
    append_points(rays[r], fine ? out[r].fine_samples : out[r].coarse_samples, points, dirs,
                  fine ? out[r].fine_offset : out[r].coarse_offset);
  }
  FieldBatch<double> values;
  if (total > 0) {
    values = field.evaluate(points, dirs);
  } else {
    values.rgb.resize(3, 0);
    values.sigma.resize(0);
  }
  for (std::size_t r = 0; r < rays.size(); ++r) {
    RayRender& rr = out[r];
    if (!rays[r].hit) {
      (fine ? rr.fine : rr.coarse) = background_only(background);
      continue;
    }
    const RaySampleSet& s = fine ? rr.fine_samples : rr.coarse_samples;
    auto samples = gather(values, fine ? rr.fine_offset : rr.coarse_offset, s.size());
    (fine ? rr.fine : rr.coarse) = composite(s, samples, background);
  }
  return values;
}

}  // namespace detail

/// Renders a batch of rays: stratified coarse samples through `coarse`, then
/// (when hierarchical) inverse-CDF samples from the coarse weights, with the
/// sorted union of both sets evaluated through `fine`. `rngs` holds one
/// stream per ray. Each field is evaluated exactly once per pass, with
/// columns ordered ray-major.
template <RadianceField Coarse, RadianceField Fine>
BatchRender render_rays(const Coarse& coarse, const Fine& fine, std::span<const RenderRay> rays,
                        const RenderConfig& cfg, std::span<Rng> rngs) {
  if (rngs.size() != rays.size()) throw std::invalid_argument("render_rays: one random stream per ray required");
  BatchRender out;
  out.hierarchical = cfg.hierarchical;
  out.rays.resize(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (!rays[r].hit) continue;
    out.rays[r].coarse_samples =
        stratified_sample(rays[r].ray.t_near, rays[r].ray.t_far, cfg.n_coarse, rngs[r], cfg.perturb);
  }
  out.coarse_values = detail::evaluate_and_composite(coarse, rays, out.rays, false, cfg.background);

  if (!cfg.hierarchical) {
    for (auto& rr : out.rays) {
      rr.fine_samples = rr.coarse_samples;
      rr.fine = rr.coarse;
      rr.fine_offset = rr.coarse_offset;
    }
    out.fine_values = out.coarse_values;
    return out;
  }

  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (!rays[r].hit) continue;
    RayRender& rr = out.rays[r];
    const std::vector<double> edges = rr.coarse_samples.interval_edges();
    const PiecewisePdf pdf = weights_to_pdf(rr.coarse.weights, edges);
    const std::vector<double> extra = sample_pdf(pdf, cfg.n_fine, rngs[r], cfg.perturb);
    rr.fine_samples = merge_samples(rr.coarse_samples.t_values, extra, rays[r].ray.t_far);
  }
  out.fine_values = detail::evaluate_and_composite(fine, rays, out.rays, true, cfg.background);
  return out;
}

/// Single-ray convenience wrapper.
template <RadianceField Coarse, RadianceField Fine>
RayRender render_ray(const Coarse& coarse, const Fine& fine, const RenderRay& ray, const RenderConfig& cfg,
                     Rng& rng) {
  std::vector<Rng> rngs{rng};
  BatchRender b = render_rays(coarse, fine, std::span<const RenderRay>(&ray, 1), cfg, std::span<Rng>(rngs));
  rng = rngs[0];
  return std::move(b.rays[0]);
}

/// Per-sample upstream gradients for one batched field evaluation.
struct FieldGradient {
  Eigen::Matrix3Xd rgb;
  Eigen::RowVectorXd sigma;
};

/// Pushes per-ray color gradients through the compositing step of one pass
/// (coarse or fine), producing gradients for each evaluated sample.
inline FieldGradient composite_gradients(const BatchRender& batch, std::span<const RenderRay> rays,
                                         std::span<const Vec3> grad_color, bool fine, const Vec3& background) {
  const FieldBatch<double>& values = fine ? batch.fine_values : batch.coarse_values;
  FieldGradient g;
  g.rgb = Eigen::Matrix3Xd::Zero(3, values.rgb.cols());
  g.sigma = Eigen::RowVectorXd::Zero(values.sigma.cols());
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    if (!rays[r].hit) continue;
    const RayRender& rr = batch.rays[r];
    const RaySampleSet& s = fine ? rr.fine_samples : rr.coarse_samples;
    const CompositeResult& c = fine ? rr.fine : rr.coarse;
    const Eigen::Index offset = fine ? rr.fine_offset : rr.coarse_offset;
    auto samples = detail::gather(values, offset, s.size());
    CompositeGradient cg = composite_backward(s, samples, c, background, grad_color[r]);
    for (std::size_t i = 0; i < s.size(); ++i) {
      g.rgb.col(offset + static_cast<Eigen::Index>(i)) = cg.rgb[i];
      g.sigma(offset + static_cast<Eigen::Index>(i)) = cg.sigma[i];
    }
  }
  return g;
}

/// Network-backed radiance field. Encodes positions and directions, runs the
/// MLP, and (optionally) keeps the forward cache of the most recent batch.
template <typename Scalar>
class NetworkField {
 public:
  NetworkField(const MlpParams<Scalar>& params, const EncodingConfig& encoding, double sigma_noise_std = 0.0,
               Rng* noise_rng = nullptr, ForwardCache<Scalar>* cache = nullptr)
      : params_(&params), encoding_(encoding), noise_std_(sigma_noise_std), noise_rng_(noise_rng), cache_(cache) {
    if (noise_std_ > 0.0 && !noise_rng_) throw std::invalid_argument("NetworkField: noise requires a random stream");
  }

  FieldBatch<double> evaluate(const Eigen::Matrix3Xd& points, const Eigen::Matrix3Xd& dirs) const {
    RowVectorX<Scalar> noise;
    if (noise_std_ > 0.0) {
      noise.resize(points.cols());
      for (Eigen::Index j = 0; j < points.cols(); ++j) noise(j) = static_cast<Scalar>(noise_std_ * noise_rng_->normal());
    }
    ForwardCache<Scalar> local;
    ForwardCache<Scalar>& cache = cache_ ? *cache_ : local;
    forward<Scalar>(*params_, encode_positions<Scalar>(points, encoding_), encode_directions<Scalar>(dirs, encoding_),
                    noise_std_ > 0.0 ? &noise : nullptr, cache);
    queries_ += static_cast<std::size_t>(points.cols());
    FieldBatch<double> out;
    out.rgb = cache.rgb.template cast<double>();
    out.sigma = cache.sigma.template cast<double>();
    return out;
  }

  std::size_t queries() const { return queries_; }

 private:
  const MlpParams<Scalar>* params_;
  EncodingConfig encoding_;
  double noise_std_;
  Rng* noise_rng_;
  ForwardCache<Scalar>* cache_;
  mutable std::size_t queries_ = 0;
};

}  // namespace rfk
