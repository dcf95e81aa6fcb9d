#pragma once

// Closed-form radiance fields built from simple primitives, and a dense
// reference integrator for the continuous rendering integral
//
//   C(r) = int_{t_n}^{t_f} T(t) sigma(r(t)) c(r(t), d) dt + T(t_f) background,
//   T(t) = exp(-int_{t_n}^{t} sigma(r(s)) ds).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfk/geometry.hpp"
#include "rfk/network.hpp"

namespace rfk {

/// Axis-aligned box of constant density and color.
struct BoxPrimitive {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
  double sigma = 1.0;
  Vec3 rgb = Vec3::Constant(0.5);
};

/// Isotropic Gaussian density bump: sigma(x) = peak exp(-|x - c|^2 / (2 s^2)).
struct GaussianBlob {
  Vec3 center = Vec3::Zero();
  double std_dev = 0.3;
  double peak_sigma = 10.0;
  Vec3 rgb = Vec3::Constant(0.5);
};

/// Constant-density ball. The color can carry a sinusoidal stripe texture and
/// a view-dependent highlight max(0, reflect(d, n) . light)^shininess.
struct SpherePrimitive {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
  double sigma = 20.0;
  Vec3 rgb = Vec3::Constant(0.5);
  Vec3 stripe_rgb = Vec3::Zero();
  double stripe_amplitude = 0.0;
  double stripe_frequency = 0.0;
  Vec3 stripe_axis = Vec3::UnitZ();
  double specular = 0.0;
  double shininess = 16.0;
  Vec3 light_direction = Vec3(0.3, 0.4, 1.0).normalized();
};

class AnalyticField {
 public:
  AnalyticField& add(const BoxPrimitive& b) {
    boxes_.push_back(b);
    return *this;
  }
  AnalyticField& add(const GaussianBlob& g) {
    blobs_.push_back(g);
    return *this;
  }
  AnalyticField& add(const SpherePrimitive& s) {
    SpherePrimitive copy = s;
    copy.light_direction.normalize();
    copy.stripe_axis.normalize();
    spheres_.push_back(copy);
    return *this;
  }

  bool has_view_dependence() const {
    return std::any_of(spheres_.begin(), spheres_.end(), [](const auto& s) { return s.specular > 0.0; });
  }

  /// Density-weighted mix of the primitives covering x; `dir` must be unit.
  FieldSample sample(const Vec3& x, const Vec3& dir) const {
    FieldSample out;
    Vec3 weighted = Vec3::Zero();
    for (const auto& b : boxes_) {
      if ((x.array() >= b.lo.array()).all() && (x.array() <= b.hi.array()).all()) {
        out.sigma += b.sigma;
        weighted += b.sigma * b.rgb;
      }
    }
    for (const auto& g : blobs_) {
      const double s = g.peak_sigma * std::exp(-(x - g.center).squaredNorm() / (2.0 * g.std_dev * g.std_dev));
      out.sigma += s;
      weighted += s * g.rgb;
    }
    for (const auto& sp : spheres_) {
      const Vec3 offset = x - sp.center;
      const double r = offset.norm();
      if (r > sp.radius) continue;
      out.sigma += sp.sigma;
      weighted += sp.sigma * sphere_color(sp, offset, r, dir);
    }
    if (out.sigma > 0.0) out.rgb = (weighted / out.sigma).cwiseMax(0.0).cwiseMin(1.0);
    return out;
  }

  /// Batched evaluation (positions and unit directions as 3 x M columns).
  FieldBatch<double> evaluate(const Eigen::Matrix3Xd& points, const Eigen::Matrix3Xd& dirs) const {
    FieldBatch<double> out;
    out.rgb.resize(3, points.cols());
    out.sigma.resize(points.cols());
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      FieldSample s = sample(points.col(j), dirs.col(j));
      out.rgb.col(j) = s.rgb;
      out.sigma(j) = s.sigma;
    }
    return out;
  }

  /// Ray parameters in (t0, t1) where the field is discontinuous.
  std::vector<double> breakpoints(const Ray& ray, double t0, double t1) const {
    std::vector<double> out;
    auto keep = [&](double t) {
      if (t > t0 && t < t1) out.push_back(t);
    };
    for (const auto& b : boxes_) {
      Ray r = ray;
      r.t_near = -std::numeric_limits<double>::infinity();
      r.t_far = std::numeric_limits<double>::infinity();
      if (auto hit = clip_to_box(r, b.lo, b.hi)) {
        keep(hit->first);
        keep(hit->second);
      }
    }
    for (const auto& sp : spheres_) {
      const Vec3 oc = ray.origin - sp.center;
      const double a = ray.direction.squaredNorm();
      const double half_b = oc.dot(ray.direction);
      const double c = oc.squaredNorm() - sp.radius * sp.radius;
      const double disc = half_b * half_b - a * c;
      if (disc <= 0.0) continue;
      const double root = std::sqrt(disc);
      keep((-half_b - root) / a);
      keep((-half_b + root) / a);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  static AnalyticField empty() { return {}; }

  static AnalyticField homogeneous(double sigma, const Vec3& rgb) {
    AnalyticField f;
    f.add(BoxPrimitive{Vec3::Constant(-1e6), Vec3::Constant(1e6), sigma, rgb});
    return f;
  }

  /// Reddish slab in front (+z side) of a blue one.
  static AnalyticField two_slab() {
    AnalyticField f;
    f.add(BoxPrimitive{Vec3(-0.8, -0.8, 0.2), Vec3(0.8, 0.8, 0.5), 3.0, Vec3(0.9, 0.15, 0.1)});
    f.add(BoxPrimitive{Vec3(-0.8, -0.8, -0.5), Vec3(0.8, 0.8, -0.2), 3.0, Vec3(0.1, 0.2, 0.9)});
    return f;
  }

  static AnalyticField gaussian_blob() {
    AnalyticField f;
    f.add(GaussianBlob{Vec3(0.1, -0.1, 0.0), 0.3, 8.0, Vec3(0.2, 0.7, 0.3)});
    f.add(GaussianBlob{Vec3(-0.35, 0.3, 0.2), 0.18, 12.0, Vec3(0.9, 0.6, 0.1)});
    return f;
  }

  static AnalyticField specular_sphere() {
    AnalyticField f;
    SpherePrimitive s;
    s.center = Vec3::Zero();
    s.radius = 0.6;
    s.sigma = 6.0;
    s.rgb = Vec3(0.55, 0.2, 0.2);
    s.specular = 0.7;
    s.shininess = 12.0;
    f.add(s);
    return f;
  }

  /// Striped glossy sphere beside two soft blobs; the desk-scale training scene.
  static AnalyticField blob_specular_sphere() {
    AnalyticField f;
    SpherePrimitive s;
    s.center = Vec3(0.15, 0.0, 0.1);
    s.radius = 0.45;
    s.sigma = 25.0;
    s.rgb = Vec3(0.8, 0.25, 0.2);
    s.stripe_rgb = Vec3(0.95, 0.85, 0.3);
    s.stripe_amplitude = 0.8;
    s.stripe_frequency = 6.0;
    s.stripe_axis = Vec3(0.2, 0.1, 1.0);
    s.specular = 0.6;
    s.shininess = 20.0;
    f.add(s);
    f.add(GaussianBlob{Vec3(-0.45, 0.35, -0.15), 0.16, 30.0, Vec3(0.15, 0.55, 0.85)});
    f.add(GaussianBlob{Vec3(-0.2, -0.5, 0.3), 0.12, 30.0, Vec3(0.2, 0.75, 0.3)});
    return f;
  }

  /// Thin constant slab z in [z0, z1] spanning the cube.
  static AnalyticField thin_slab(double z0, double z1, double sigma, const Vec3& rgb) {
    AnalyticField f;
    f.add(BoxPrimitive{Vec3(-1.0, -1.0, z0), Vec3(1.0, 1.0, z1), sigma, rgb});
    return f;
  }

 private:
  static Vec3 sphere_color(const SpherePrimitive& sp, const Vec3& offset, double r, const Vec3& dir) {
    Vec3 base = sp.rgb;
    if (sp.stripe_amplitude > 0.0) {
      const double s =
          sp.stripe_amplitude * 0.5 * (1.0 + std::sin(std::numbers::pi * sp.stripe_frequency * offset.dot(sp.stripe_axis)));
      base = (1.0 - s) * sp.rgb + s * sp.stripe_rgb;
    }
    if (sp.specular > 0.0 && r > 0.0) {
      const Vec3 normal = offset / r;
      const Vec3 reflected = dir - 2.0 * dir.dot(normal) * normal;
      const double lobe = std::max(0.0, reflected.dot(sp.light_direction));
      base += Vec3::Constant(sp.specular * std::pow(lobe, sp.shininess));
    }
    return base;
  }

  std::vector<BoxPrimitive> boxes_;
  std::vector<GaussianBlob> blobs_;
  std::vector<SpherePrimitive> spheres_;
};

namespace detail {

/// Midpoint rule on each smooth piece of [t_near, t_far]; transmittance at
/// a cell midpoint uses the optical depth of all earlier cells plus half of
/// the current one.
inline Vec3 integrate_midpoint(const AnalyticField& field, const Ray& ray, const std::vector<double>& knots,
                               long long n_total, const Vec3& background) {
  const Vec3 dir = ray.direction.normalized();
  const double length = ray.t_far - ray.t_near;
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    const double a = knots[s], b = knots[s + 1];
    const long long n = std::max<long long>(8, static_cast<long long>(std::ceil(n_total * (b - a) / length)));
    const double h = (b - a) / static_cast<double>(n);
    for (long long i = 0; i < n; ++i) {
      const double t = a + (static_cast<double>(i) + 0.5) * h;
      const FieldSample v = field.sample(ray.at(t), dir);
      const double tau = v.sigma * h;
      color += std::exp(-(depth + 0.5 * tau)) * tau * v.rgb;
      depth += tau;
    }
  }
  return color + std::exp(-depth) * background;
}

}  // namespace detail

struct OracleOptions {
  long long n_dense = 16384;
  long long max_n = 1LL << 22;
  double tolerance = 1e-6;
};

/// Converged reference value of the rendering integral: the sample count is
/// doubled until two successive estimates agree to `tolerance` per channel.
inline Vec3 oracle_render(const AnalyticField& field, const Ray& ray, const Vec3& background,
                          const OracleOptions& opt = {}) {
  if (!(ray.t_near < ray.t_far) || !std::isfinite(ray.t_far) || !std::isfinite(ray.t_near))
    throw DomainError("oracle_render: need a finite interval t_near < t_far");
  std::vector<double> knots{ray.t_near};
  for (double t : field.breakpoints(ray, ray.t_near, ray.t_far)) knots.push_back(t);
  knots.push_back(ray.t_far);

  long long n = opt.n_dense;
  Vec3 previous = detail::integrate_midpoint(field, ray, knots, n, background);
  while (2 * n <= opt.max_n) {
    n *= 2;
    Vec3 current = detail::integrate_midpoint(field, ray, knots, n, background);
    if ((current - previous).cwiseAbs().maxCoeff() < opt.tolerance) return current;
    previous = current;
  }
  throw std::runtime_error("oracle_render: no convergence up to " + std::to_string(opt.max_n) + " samples");
}

}  // namespace rfk
