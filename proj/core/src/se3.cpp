#include "smore/se3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "smore/errors.hpp"

namespace smore {
namespace {

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),  //
      w.z(), 0.0, -w.x(),   //
      -w.y(), w.x(), 0.0;
  return m;
}

}  // namespace

RigidTransform RigidTransform::from_yaw(double yaw, const Vec3& t) {
  RigidTransform out;
  out.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  out.translation = t;
  return out;
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

double RigidTransform::yaw() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Mat3 exp_rotation(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = hat(w);
  double a;
  double b;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * k + b * k * k;
}

double rotation_angle(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

Vec3 log_rotation(const Mat3& r) {
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double vnorm = q.vec().norm();
  const double theta = 2.0 * std::atan2(vnorm, q.w());
  if (theta > std::numbers::pi - kAmbiguousAngleTolerance) {
    throw GeometryError("log_rotation: rotation angle within tolerance of pi; axis is ambiguous");
  }
  if (vnorm < 1e-12) {
    // theta ~ 2|v|; first-order term is exact to machine precision here.
    return 2.0 * q.vec() / q.w();
  }
  return (theta / vnorm) * q.vec();
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const Mat3 err = r.transpose() * r - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Twist twist_of(const RigidTransform& delta) { return {log_rotation(delta.rotation), delta.translation}; }

RigidTransform interp_relative(const RigidTransform& delta, double s) {
  if (s == 0.0) return RigidTransform::identity();
  if (s == 1.0) return delta;
  const Vec3 w = log_rotation(delta.rotation);
  return {exp_rotation(s * w), s * delta.translation};
}

RigidTransform continuous_ego_pose(const RigidTransform& ego0_to_world,
                                   const RigidTransform& ego1_to_world, double t) {
  // delta = T_w^{e1} (T_w^{e0})^{-1} = T_{e0}^{e1}; the bracket at (1 - t) is T_{e_t}^{e1}.
  const RigidTransform delta = ego1_to_world.inverse() * ego0_to_world;
  return ego1_to_world * interp_relative(delta, 1.0 - t);
}

RigidTransform continuous_object_pose(const RigidTransform& ego0_to_obj0,
                                      const RigidTransform& ego1_to_obj1,
                                      const RigidTransform& world_to_ego0,
                                      const RigidTransform& world_to_ego1, double t,
                                      bool include_ego_motion) {
  // World-frame object motion T_{o0}^{o1} = (T_{e1}^{o1} T_w^{e1}) (T_{e0}^{o0} T_w^{e0})^{-1}.
  const RigidTransform world_to_obj0 = ego0_to_obj0 * world_to_ego0;
  const RigidTransform world_to_obj1 = ego1_to_obj1 * world_to_ego1;
  const RigidTransform obj_delta = world_to_obj1 * world_to_obj0.inverse();
  // T_{o_t}^{o1}; its inverse carries o1 coordinates into o_t.
  const RigidTransform obj_t_to_obj1 = interp_relative(obj_delta, 1.0 - t);
  RigidTransform out = obj_t_to_obj1.inverse() * ego1_to_obj1;
  if (include_ego_motion) {
    const RigidTransform ego_delta = world_to_ego1 * world_to_ego0.inverse();
    out = out * interp_relative(ego_delta, 1.0 - t);
  }
  return out;
}

double max_abs_difference(const RigidTransform& a, const RigidTransform& b) {
  return std::max((a.rotation - b.rotation).cwiseAbs().maxCoeff(),
                  (a.translation - b.translation).cwiseAbs().maxCoeff());
}

}  // namespace smore
