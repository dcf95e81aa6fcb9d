#pragma once

// Pinhole cameras, rigid poses and the normalized-device-coordinate (NDC) ray
// remapping used for forward-facing captures. Everything here is float64.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace rfk {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Raised when an input lies outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kPoseTolerance = 1e-9;

struct CameraIntrinsics {
  int width_px = 1;
  int height_px = 1;
  double focal_px = 1.0;

  void validate() const {
    if (width_px < 1 || height_px < 1) throw std::invalid_argument("camera intrinsics: image size must be >= 1");
    if (!(focal_px > 0.0) || !std::isfinite(focal_px))
      throw std::invalid_argument("camera intrinsics: focal length must be positive");
  }

  /// Focal length for a horizontal field of view.
  static double focal_from_fov(int width_px, double camera_angle_x) {
    return 0.5 * width_px / std::tan(0.5 * camera_angle_x);
  }

  CameraIntrinsics scaled(double factor) const {
    CameraIntrinsics out{static_cast<int>(std::lround(width_px * factor)),
                         static_cast<int>(std::lround(height_px * factor)), focal_px * factor};
    out.validate();
    return out;
  }
};

/// Camera-to-world rigid transform. The camera looks along its local -z axis
/// with +x to the right and +y up.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  }

  bool is_valid(double tol = kPoseTolerance) const {
    return rotation.allFinite() && translation.allFinite() && orthonormality_error() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Builds a pose from a homogeneous 4x4 matrix. A rotation that is
  /// orthonormal only to `repair_tol` (as written by tools that print a few
  /// digits) is projected onto the nearest rotation; otherwise it is kept
  /// bit-for-bit.
  static Pose from_matrix(const Mat4& m, double repair_tol = 1e-4) {
    if (!m.allFinite()) throw std::invalid_argument("pose matrix has non-finite entries");
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
      throw std::invalid_argument("pose matrix bottom row must be (0, 0, 0, 1)");
    Pose p;
    p.rotation = m.topLeftCorner<3, 3>();
    p.translation = m.topRightCorner<3, 1>();
    if (p.is_valid()) return p;
    if (p.orthonormality_error() > repair_tol || std::abs(p.rotation.determinant() - 1.0) > repair_tol)
      throw std::invalid_argument("pose rotation is not orthonormal with determinant +1");
    Eigen::JacobiSVD<Mat3> svd(p.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    p.rotation = svd.matrixU() * svd.matrixV().transpose();
    return p;
  }

  /// Camera at `eye` looking at `target`.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
    Vec3 back = (eye - target).normalized();
    Vec3 right = up.cross(back);
    if (right.norm() < 1e-12) right = Vec3::UnitX().cross(back);
    if (right.norm() < 1e-12) right = Vec3::UnitY().cross(back);
    right.normalize();
    Vec3 cam_up = back.cross(right);
    Pose p;
    p.rotation.col(0) = right;
    p.rotation.col(1) = cam_up;
    p.rotation.col(2) = back;
    p.translation = eye;
    return p;
  }
};

/// Linear blend of translations and spherical blend of rotations.
inline Pose interpolate_pose(const Pose& a, const Pose& b, double s) {
  Eigen::Quaterniond qa(a.rotation), qb(b.rotation);
  Pose out;
  out.rotation = qa.slerp(s, qb).normalized().toRotationMatrix();
  out.translation = (1.0 - s) * a.translation + s * b.translation;
  return out;
}

/// r(t) = origin + t * direction for t in [t_near, t_far].
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = -Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Ray through the center of pixel (px, py) where px, py are integer pixel
/// indices (or any real in range). The camera-space direction has z = -1, so
/// t measures depth along the optical axis.
inline Ray generate_ray(const CameraIntrinsics& intrinsics, const Pose& pose, double px, double py) {
  if (!(px >= 0.0 && px < intrinsics.width_px && py >= 0.0 && py < intrinsics.height_px))
    throw DomainError("generate_ray: pixel (" + std::to_string(px) + ", " + std::to_string(py) +
                      ") outside image");
  const double w = intrinsics.width_px, h = intrinsics.height_px, f = intrinsics.focal_px;
  Vec3 cam((px + 0.5 - 0.5 * w) / f, -(py + 0.5 - 0.5 * h) / f, -1.0);
  Ray r;
  r.origin = pose.translation;
  r.direction = pose.rotation * cam;
  return r;
}

/// Parametric interval of the ray inside the axis-aligned box [lo, hi],
/// intersected with [t_near, t_far]. Empty intersections yield nullopt.
inline std::optional<std::pair<double, double>> clip_to_box(const Ray& ray, const Vec3& lo, const Vec3& hi) {
  double t0 = ray.t_near, t1 = ray.t_far;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (d == 0.0) {
      if (o < lo[a] || o > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o) / d, tb = (hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

/// Perspective projection constants. The projected point is
/// (a_x x/z, a_y y/z, a_z + b_z/z).
struct NdcContext {
  double near = 1.0;
  double a_x = -1.0;
  double a_y = -1.0;
  double a_z = 1.0;
  double b_z = 2.0;

  /// Far plane at infinity: a_z = 1 and b_z = 2n.
  static NdcContext infinite_far(const CameraIntrinsics& intrinsics, double near) {
    if (!(near > 0.0)) throw DomainError("NDC near plane must be positive");
    NdcContext c;
    c.near = near;
    c.a_x = -intrinsics.focal_px / (0.5 * intrinsics.width_px);
    c.a_y = -intrinsics.focal_px / (0.5 * intrinsics.height_px);
    c.a_z = 1.0;
    c.b_z = 2.0 * near;
    return c;
  }

  static NdcContext finite_far(const CameraIntrinsics& intrinsics, double near, double far) {
    if (!(far > near)) throw DomainError("NDC far plane must exceed near plane");
    NdcContext c = infinite_far(intrinsics, near);
    c.a_z = (far + near) / (far - near);
    c.b_z = 2.0 * far * near / (far - near);
    return c;
  }
};

inline Vec3 project_ndc_point(const Vec3& p, const NdcContext& ctx) {
  if (!(p.z() < 0.0)) throw DomainError("project_ndc_point: point is not in front of the camera (z >= 0)");
  return {ctx.a_x * p.x() / p.z(), ctx.a_y * p.y() / p.z(), ctx.a_z + ctx.b_z / p.z()};
}

/// NDC ray parameter for original parameter t, with (o_z, d_z) taken from the
/// near-plane-shifted ray.
inline double ndc_parameter(double t, double origin_z, double direction_z) {
  return 1.0 - origin_z / (origin_z + t * direction_z);
}

/// Moves the ray origin to its intersection with the plane z = -near.
inline Ray shift_to_near_plane(const Ray& ray, double near) {
  if (!(ray.direction.z() < 0.0)) throw DomainError("ndc_convert: ray must point toward -z (d_z < 0)");
  if (!(near > 0.0)) throw DomainError("ndc_convert: near plane must be positive");
  const double t_n = -(near + ray.origin.z()) / ray.direction.z();
  if (t_n > ray.t_far) throw DomainError("ndc_convert: ray ends before reaching the near plane");
  Ray shifted = ray;
  shifted.origin = ray.origin + t_n * ray.direction;
  shifted.t_near = 0.0;
  shifted.t_far = std::numeric_limits<double>::infinity();
  return shifted;
}

/// Maps a camera-space ray (looking down -z) to NDC space; the returned ray
/// covers [0, 1] in its parameter, linear in disparity from the near plane to
/// infinity.
inline Ray ndc_convert(const Ray& ray, const CameraIntrinsics& intrinsics, double near) {
  const Ray s = shift_to_near_plane(ray, near);
  const NdcContext ctx = NdcContext::infinite_far(intrinsics, near);
  const Vec3& o = s.origin;
  const Vec3& d = s.direction;
  Ray out;
  out.origin = {ctx.a_x * o.x() / o.z(), ctx.a_y * o.y() / o.z(), ctx.a_z + ctx.b_z / o.z()};
  out.direction = {ctx.a_x * (d.x() / d.z() - o.x() / o.z()), ctx.a_y * (d.y() / d.z() - o.y() / o.z()),
                   -ctx.b_z / o.z()};
  out.t_near = 0.0;
  out.t_far = 1.0;
  return out;
}

}  // namespace rfk
