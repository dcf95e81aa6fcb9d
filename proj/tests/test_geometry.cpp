#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rfk/geometry.hpp"
#include "rfk/rng.hpp"

namespace {

using rfk::Vec3;

rfk::Pose random_pose(rfk::Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  rfk::Pose p;
  p.rotation = q.toRotationMatrix();
  p.translation = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
  return p;
}

// Homogeneous 4x4 projection followed by the perspective divide.
Vec3 matrix_projection(const Vec3& p, const rfk::NdcContext& c) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m(0, 0) = -c.a_x;
  m(1, 1) = -c.a_y;
  m(2, 2) = -c.a_z;
  m(2, 3) = -c.b_z;
  m(3, 2) = -1.0;
  Eigen::Vector4d h = m * Eigen::Vector4d(p.x(), p.y(), p.z(), 1.0);
  return h.head<3>() / h.w();
}

}  // namespace

TEST(Intrinsics, Validation) {
  EXPECT_THROW((rfk::CameraIntrinsics{0, 10, 5.0}.validate()), std::invalid_argument);
  EXPECT_THROW((rfk::CameraIntrinsics{10, 10, 0.0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((rfk::CameraIntrinsics{1, 1, 1e-3}.validate()));
  EXPECT_NEAR(rfk::CameraIntrinsics::focal_from_fov(800, std::numbers::pi / 2), 400.0, 1e-9);
}

TEST(GenerateRay, PrincipalPointAndEdge) {
  rfk::CameraIntrinsics k{100, 100, 50.0};
  rfk::Pose id;
  rfk::Ray r = rfk::generate_ray(k, id, 49.5, 49.5);
  EXPECT_EQ(r.direction, Vec3(0, 0, -1));
  EXPECT_EQ(r.origin, Vec3::Zero());
  r = rfk::generate_ray(k, id, 99.5, 49.5);
  EXPECT_EQ(r.direction, Vec3(1, 0, -1));
}

TEST(GenerateRay, OutOfRangePixelIsDomainError) {
  rfk::CameraIntrinsics k{10, 8, 5.0};
  EXPECT_THROW(rfk::generate_ray(k, {}, 10.0, 0.0), rfk::DomainError);
  EXPECT_THROW(rfk::generate_ray(k, {}, 0.0, 8.0), rfk::DomainError);
  EXPECT_THROW(rfk::generate_ray(k, {}, -0.1, 0.0), rfk::DomainError);
  EXPECT_NO_THROW(rfk::generate_ray(k, {}, 9.99, 7.99));
}

TEST(GenerateRay, CameraSpaceDepthComponentIsMinusOne) {
  rfk::Rng rng(7);
  rfk::CameraIntrinsics k{64, 48, 40.0};
  for (int i = 0; i < 1000; ++i) {
    rfk::Pose p = random_pose(rng);
    rfk::Ray r = rfk::generate_ray(k, p, rng.uniform(0, 64), rng.uniform(0, 48));
    Vec3 cam = p.rotation.transpose() * r.direction;
    EXPECT_NEAR(cam.z(), -1.0, 1e-14);
    EXPECT_EQ(r.origin, p.translation);
  }
}

TEST(Pose, FromMatrixRoundTripIsBitExact) {
  rfk::Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    rfk::Pose p = random_pose(rng);
    if (!p.is_valid()) continue;
    rfk::Pose q = rfk::Pose::from_matrix(p.matrix());
    EXPECT_EQ(p.rotation, q.rotation);
    EXPECT_EQ(p.translation, q.translation);
  }
}

TEST(Pose, FromMatrixRejectsInvalid) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(3, 0) = 0.5;
  EXPECT_THROW(rfk::Pose::from_matrix(m), std::invalid_argument);
  m = Eigen::Matrix4d::Identity();
  m(0, 0) = 2.0;
  EXPECT_THROW(rfk::Pose::from_matrix(m), std::invalid_argument);
  m = Eigen::Matrix4d::Identity();
  m(2, 2) = -1.0;  // reflection
  EXPECT_THROW(rfk::Pose::from_matrix(m), std::invalid_argument);
}

TEST(Pose, FromMatrixRepairsRoundedRotation) {
  rfk::Rng rng(11);
  rfk::Pose p = random_pose(rng);
  Eigen::Matrix4d m = p.matrix();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = std::round(m(r, c) * 1e6) / 1e6;
  rfk::Pose q = rfk::Pose::from_matrix(m);
  EXPECT_TRUE(q.is_valid());
  EXPECT_LT((q.rotation - p.rotation).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Pose, LookAtFacesTarget) {
  rfk::Pose p = rfk::Pose::look_at(Vec3(3, -2, 1), Vec3(0.5, 0.5, 0));
  EXPECT_TRUE(p.is_valid());
  Vec3 forward = -p.rotation.col(2);
  EXPECT_NEAR(forward.dot((Vec3(0.5, 0.5, 0) - Vec3(3, -2, 1)).normalized()), 1.0, 1e-12);
  rfk::Pose top = rfk::Pose::look_at(Vec3(0, 0, 4), Vec3::Zero());
  EXPECT_TRUE(top.is_valid());
}

TEST(Pose, InterpolationEndpoints) {
  rfk::Rng rng(5);
  rfk::Pose a = random_pose(rng), b = random_pose(rng);
  rfk::Pose s0 = rfk::interpolate_pose(a, b, 0.0), s1 = rfk::interpolate_pose(a, b, 1.0);
  EXPECT_LT((s0.rotation - a.rotation).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s1.rotation - b.rotation).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(rfk::interpolate_pose(a, b, 0.37).is_valid());
}

TEST(ClipToBox, HitsAndMisses) {
  rfk::Ray r;
  r.origin = Vec3(0, 0, 4);
  r.direction = Vec3(0, 0, -1);
  r.t_near = 2;
  r.t_far = 6;
  auto hit = rfk::clip_to_box(r, Vec3::Constant(-1), Vec3::Constant(1));
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->first, 3.0);
  EXPECT_DOUBLE_EQ(hit->second, 5.0);
  r.origin = Vec3(2, 0, 4);
  EXPECT_FALSE(rfk::clip_to_box(r, Vec3::Constant(-1), Vec3::Constant(1)));
}

TEST(Ndc, InfiniteFarConstants) {
  rfk::CameraIntrinsics k{40, 30, 35.0};
  auto c = rfk::NdcContext::infinite_far(k, 1.5);
  EXPECT_EQ(c.a_z, 1.0);
  EXPECT_EQ(c.b_z, 3.0);
  EXPECT_DOUBLE_EQ(c.a_x, -35.0 / 20.0);
  EXPECT_DOUBLE_EQ(c.a_y, -35.0 / 15.0);
}

TEST(Ndc, ProjectionExamples) {
  rfk::CameraIntrinsics k{40, 30, 35.0};
  const double n = 1.5;
  auto c = rfk::NdcContext::infinite_far(k, n);
  EXPECT_EQ(rfk::project_ndc_point(Vec3(0, 0, -n), c).z(), -1.0);
  EXPECT_NEAR(rfk::project_ndc_point(Vec3(0, 0, -1e15), c).z(), 1.0, 1e-12);
  EXPECT_THROW(rfk::project_ndc_point(Vec3(0, 0, 0), c), rfk::DomainError);
  EXPECT_THROW(rfk::project_ndc_point(Vec3(0, 0, 1), c), rfk::DomainError);
}

TEST(Ndc, ProjectionMatchesHomogeneousMatrix) {
  rfk::Rng rng(21);
  rfk::CameraIntrinsics k{64, 48, 50.0};
  for (auto ctx : {rfk::NdcContext::infinite_far(k, 0.7), rfk::NdcContext::finite_far(k, 0.7, 20.0)}) {
    for (int i = 0; i < 10000; ++i) {
      Vec3 p(rng.uniform(-3, 3), rng.uniform(-3, 3), -rng.uniform(0.1, 30));
      Vec3 a = rfk::project_ndc_point(p, ctx), b = matrix_projection(p, ctx);
      EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Ndc, FiniteFarMapsBoundsToUnitInterval) {
  rfk::CameraIntrinsics k{64, 48, 50.0};
  auto c = rfk::NdcContext::finite_far(k, 2.0, 10.0);
  EXPECT_NEAR(rfk::project_ndc_point(Vec3(0, 0, -2), c).z(), -1.0, 1e-14);
  EXPECT_NEAR(rfk::project_ndc_point(Vec3(0, 0, -10), c).z(), 1.0, 1e-14);
}

TEST(Ndc, AxialRayStaysAxial) {
  rfk::CameraIntrinsics k{64, 48, 50.0};
  rfk::Ray r;
  r.origin = Vec3(0, 0, -1);
  r.direction = Vec3(0, 0, -1);
  rfk::Ray n = rfk::ndc_convert(r, k, 1.0);
  EXPECT_EQ(n.origin.z(), -1.0);
  EXPECT_EQ(n.direction.x(), 0.0);
  EXPECT_EQ(n.direction.y(), 0.0);
  EXPECT_EQ(n.t_near, 0.0);
  EXPECT_EQ(n.t_far, 1.0);
  // Half way in NDC is twice the near distance: linear in disparity.
  const double t = 1.0;  // shifted ray: o_z = -1, d_z = -1, depth 2 at t = 1
  EXPECT_DOUBLE_EQ(rfk::ndc_parameter(t, -1.0, -1.0), 0.5);
}

TEST(Ndc, ConvertedRayTracesProjectedPoints) {
  rfk::Rng rng(99);
  rfk::CameraIntrinsics k{64, 48, 50.0};
  const double near = 1.0;
  auto ctx = rfk::NdcContext::infinite_far(k, near);
  for (int i = 0; i < 2000; ++i) {
    rfk::Ray r;
    r.origin = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    r.direction = Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), -1.0);
    rfk::Ray s = rfk::shift_to_near_plane(r, near);
    rfk::Ray n = rfk::ndc_convert(r, k, near);
    EXPECT_LE((rfk::project_ndc_point(s.origin, ctx) - n.origin).cwiseAbs().maxCoeff(), 1e-12);
    for (int j = 0; j < 20; ++j) {
      const double t = rng.uniform(0.0, 50.0);
      const double tp = rfk::ndc_parameter(t, s.origin.z(), s.direction.z());
      EXPECT_LE((rfk::project_ndc_point(s.at(t), ctx) - n.at(tp)).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_GE(tp, 0.0);
      EXPECT_LT(tp, 1.0);
    }
    double last = rfk::ndc_parameter(0.0, s.origin.z(), s.direction.z());
    EXPECT_EQ(last, 0.0);
    for (double t = 0.5; t < 1e6; t *= 2) {
      double tp = rfk::ndc_parameter(t, s.origin.z(), s.direction.z());
      EXPECT_GT(tp, last);
      last = tp;
    }
  }
}

TEST(Ndc, ConvertErrors) {
  rfk::CameraIntrinsics k{64, 48, 50.0};
  rfk::Ray r;
  r.direction = Vec3(0, 0, 1);
  EXPECT_THROW(rfk::ndc_convert(r, k, 1.0), rfk::DomainError);
  r.direction = Vec3(0, 0, -1);
  EXPECT_THROW(rfk::ndc_convert(r, k, 0.0), rfk::DomainError);
  r.t_far = 0.5;  // ends before z = -1
  EXPECT_THROW(rfk::ndc_convert(r, k, 1.0), rfk::DomainError);
}
