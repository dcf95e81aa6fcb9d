#pragma once

// Quadrature of the emission-absorption rendering integral along a ray:
//
//   C_hat = sum_i T_i (1 - exp(-sigma_i delta_i)) c_i + T_{N+1} background
//   T_i   = exp(-sum_{j<i} sigma_j delta_j)
//
// plus stratified sampling of the integration domain and inverse-transform
// sampling of the piecewise-constant density defined by compositing weights.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rfk/geometry.hpp"
#include "rfk/network.hpp"
#include "rfk/rng.hpp"

namespace rfk {

/// Merge threshold for coincident sample locations.
inline constexpr double kDuplicateSampleGap = 1e-9;
/// Total weight below which the sampling density falls back to uniform.
inline constexpr double kDegenerateWeightSum = 1e-10;

/// Sorted sample depths t_i with interval lengths delta_i = t_{i+1} - t_i; the
/// last interval extends to the far bound.
struct RaySampleSet {
  std::vector<double> t_values;
  std::vector<double> deltas;

  std::size_t size() const { return t_values.size(); }
  bool empty() const { return t_values.empty(); }

  static RaySampleSet from_sorted(std::vector<double> t, double t_far) {
    RaySampleSet s;
    s.deltas.resize(t.size());
    for (std::size_t i = 0; i + 1 < t.size(); ++i) s.deltas[i] = t[i + 1] - t[i];
    if (!t.empty()) s.deltas.back() = std::max(0.0, t_far - t.back());
    s.t_values = std::move(t);
    return s;
  }

  /// Bin edges (t_1, ..., t_N, t_far) covering each sample's interval.
  std::vector<double> interval_edges() const {
    std::vector<double> e(t_values);
    if (!t_values.empty()) e.push_back(t_values.back() + deltas.back());
    return e;
  }
};

struct CompositeResult {
  Vec3 color = Vec3::Zero();
  /// w_i = T_i (1 - exp(-sigma_i delta_i)).
  std::vector<double> weights;
  /// T_1 .. T_{N+1}; the last entry is the transmittance reaching the background.
  std::vector<double> transmittance;
  /// 1 - T_{N+1}.
  double alpha_acc = 0.0;

  double background_transmittance() const { return transmittance.back(); }
};

/// One sample drawn uniformly inside each of N equal bins of [t_near, t_far].
/// With perturb == false the bin midpoints are returned.
inline RaySampleSet stratified_sample(double t_near, double t_far, int n, Rng& rng, bool perturb = true) {
  if (n < 1) throw DomainError("stratified_sample: N must be >= 1");
  if (!(t_near < t_far) || !std::isfinite(t_far)) throw DomainError("stratified_sample: need finite t_near < t_far");
  std::vector<double> t(static_cast<std::size_t>(n));
  const double span = t_far - t_near;
  for (int i = 0; i < n; ++i) {
    const double lo = t_near + span * i / n;
    const double hi = i + 1 == n ? t_far : t_near + span * (i + 1) / n;
    t[static_cast<std::size_t>(i)] = perturb ? rng.uniform(lo, hi) : 0.5 * (lo + hi);
  }
  return RaySampleSet::from_sorted(std::move(t), t_far);
}

namespace detail {

inline void check_composite_inputs(const RaySampleSet& samples, std::span<const FieldSample> values) {
  if (values.size() != samples.size()) throw std::invalid_argument("composite: one field value per sample required");
  for (const FieldSample& v : values)
    if (!(v.sigma >= 0.0)) throw std::invalid_argument("composite: density must be non-negative");
}

}  // namespace detail

/// Emission-absorption quadrature; transmittance from the running optical depth.
inline CompositeResult composite(const RaySampleSet& samples, std::span<const FieldSample> values,
                                 const Vec3& background) {
  detail::check_composite_inputs(samples, values);
  const std::size_t n = samples.size();
  CompositeResult r;
  r.weights.resize(n);
  r.transmittance.resize(n + 1);
  double depth = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = values[i].sigma * samples.deltas[i];
    r.transmittance[i] = std::exp(-depth);
    r.weights[i] = r.transmittance[i] * -std::expm1(-tau);
    r.color += r.weights[i] * values[i].rgb;
    depth += tau;
  }
  r.transmittance[n] = std::exp(-depth);
  r.color += r.transmittance[n] * background;
  r.alpha_acc = 1.0 - r.transmittance[n];
  return r;
}

/// Front-to-back alpha blending with alpha_i = 1 - exp(-sigma_i delta_i) and
/// multiplicative transmittance; a second route to the same color.
inline Vec3 composite_alpha_blend(const RaySampleSet& samples, std::span<const FieldSample> values,
                                  const Vec3& background) {
  detail::check_composite_inputs(samples, values);
  Vec3 color = Vec3::Zero();
  double remaining = 1.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double alpha = 1.0 - std::exp(-values[i].sigma * samples.deltas[i]);
    color += remaining * alpha * values[i].rgb;
    remaining *= 1.0 - alpha;
  }
  return color + remaining * background;
}

struct CompositeGradient {
  std::vector<Vec3> rgb;
  std::vector<double> sigma;
};

/// Gradient of g . C_hat with respect to every (c_i, sigma_i):
///   dC/dc_i     = w_i
///   dC/dsigma_k = delta_k (T_{k+1} c_k - sum_{i>k} w_i c_i - T_{N+1} background)
inline CompositeGradient composite_backward(const RaySampleSet& samples, std::span<const FieldSample> values,
                                            const CompositeResult& forward, const Vec3& background,
                                            const Vec3& grad_color) {
  const std::size_t n = samples.size();
  CompositeGradient g;
  g.rgb.resize(n);
  g.sigma.resize(n);
  double behind = forward.transmittance[n] * grad_color.dot(background);
  for (std::size_t k = n; k-- > 0;) {
    const double gc = grad_color.dot(values[k].rgb);
    g.rgb[k] = forward.weights[k] * grad_color;
    g.sigma[k] = samples.deltas[k] * (forward.transmittance[k + 1] * gc - behind);
    behind += forward.weights[k] * gc;
  }
  return g;
}

/// Normalized piecewise-constant density over [edges.front(), edges.back()].
struct PiecewisePdf {
  std::vector<double> bin_edges;
  std::vector<double> weights;

  std::size_t bins() const { return weights.size(); }
};

/// w_hat_i = w_i / sum_j w_j. A (near) zero total falls back to a density
/// that is uniform over the covered interval.
inline PiecewisePdf weights_to_pdf(std::span<const double> weights, std::span<const double> bin_edges) {
  if (bin_edges.size() != weights.size() + 1) throw std::invalid_argument("weights_to_pdf: need one more edge than weights");
  if (weights.empty()) throw std::invalid_argument("weights_to_pdf: no bins");
  for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i)
    if (!(bin_edges[i] <= bin_edges[i + 1])) throw std::invalid_argument("weights_to_pdf: bin edges must be sorted");
  PiecewisePdf pdf;
  pdf.bin_edges.assign(bin_edges.begin(), bin_edges.end());
  pdf.weights.resize(weights.size());
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("weights_to_pdf: weights must be non-negative");
    total += w;
  }
  if (total < kDegenerateWeightSum) {
    const double width = bin_edges.back() - bin_edges.front();
    for (std::size_t i = 0; i < weights.size(); ++i)
      pdf.weights[i] = width > 0.0 ? (bin_edges[i + 1] - bin_edges[i]) / width : 1.0 / weights.size();
    return pdf;
  }
  for (std::size_t i = 0; i < weights.size(); ++i) pdf.weights[i] = weights[i] / total;
  return pdf;
}

/// Inverse-transform sampling of a piecewise-constant density, linear inside
/// each bin. Uniforms are stratified: u_k in [k/N, (k+1)/N) (or the stratum
/// midpoint when perturb == false), so the output is sorted.
inline std::vector<double> sample_pdf(const PiecewisePdf& pdf, int n, Rng& rng, bool perturb = true) {
  if (n < 1) throw DomainError("sample_pdf: N must be >= 1");
  const std::size_t bins = pdf.bins();
  std::vector<double> cdf(bins + 1, 0.0);
  for (std::size_t i = 0; i < bins; ++i) cdf[i + 1] = cdf[i] + pdf.weights[i];
  for (double& c : cdf) c /= cdf.back();
  cdf.back() = 1.0;

  std::size_t last_nonempty = bins - 1;
  while (last_nonempty > 0 && !(cdf[last_nonempty + 1] > cdf[last_nonempty])) --last_nonempty;

  std::vector<double> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double u = (k + (perturb ? rng.uniform() : 0.5)) / n;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t j = static_cast<std::size_t>(std::distance(cdf.begin(), it));
    j = j == 0 ? 0 : j - 1;
    if (j > last_nonempty) j = last_nonempty;
    const double mass = cdf[j + 1] - cdf[j];
    const double lo = pdf.bin_edges[j], hi = pdf.bin_edges[j + 1];
    const double frac = mass > 0.0 ? std::clamp((u - cdf[j]) / mass, 0.0, 1.0) : 0.5;
    out[static_cast<std::size_t>(k)] = std::clamp(lo + frac * (hi - lo), lo, hi);
  }
  return out;
}

/// Sorted union of two sample-depth sets; depths closer than
/// kDuplicateSampleGap are merged.
inline RaySampleSet merge_samples(std::span<const double> a, std::span<const double> b, double t_far) {
  std::vector<double> all;
  all.reserve(a.size() + b.size());
  all.insert(all.end(), a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<double> merged;
  merged.reserve(all.size());
  for (double t : all)
    if (merged.empty() || t - merged.back() >= kDuplicateSampleGap) merged.push_back(t);
  return RaySampleSet::from_sorted(std::move(merged), t_far);
}

}  // namespace rfk
