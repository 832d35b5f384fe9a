#pragma once

#include "smore/types.hpp"

namespace smore {

/// Rigid transform x' = R x + t. Maps coordinates of the source frame into the target frame.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static RigidTransform from_rotation(const Mat3& r) { return {r, Vec3::Zero()}; }
  /// Rotation about +z by `yaw` radians followed by translation.
  static RigidTransform from_yaw(double yaw, const Vec3& t = Vec3::Zero());
  static RigidTransform from_matrix(const Mat4& m);

  Mat4 matrix() const;
  RigidTransform inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_direction(const Vec3& d) const { return rotation * d; }

  /// Yaw of the rotated x axis projected on the xy plane.
  double yaw() const;
};

/// Composition a * b: apply b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) { return compose(a, b); }
inline RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

/// Log-map velocities of a relative transform: angular = log(R), linear = translation part.
struct Twist {
  Vec3 angular = Vec3::Zero();
  Vec3 linear = Vec3::Zero();
};

Mat3 exp_rotation(const Vec3& axis_angle);

/// Axis-angle of R with magnitude in [0, pi]. Throws GeometryError when the angle is
/// within `kAmbiguousAngleTolerance` of pi, where the axis sign is undetermined.
Vec3 log_rotation(const Mat3& r);

inline constexpr double kAmbiguousAngleTolerance = 1e-7;

double rotation_angle(const Mat3& r);
bool is_rotation(const Mat3& r, double tol = 1e-9);
/// Nearest rotation matrix (polar decomposition via SVD).
Mat3 orthonormalize(const Mat3& r);

Twist twist_of(const RigidTransform& delta);

/// Split constant-velocity interpolation of a relative transform:
/// rotation follows the geodesic exp(s log R), translation scales linearly (s v).
/// s = 0 yields identity, s = 1 yields `delta`.
RigidTransform interp_relative(const RigidTransform& delta, double s);

/// Sensor pose T_{e_t}^{w} between keyframes e_0 (t = 0) and e_1 (t = 1).
/// Inputs are body-to-world keyframe poses.
RigidTransform continuous_ego_pose(const RigidTransform& ego0_to_world,
                                   const RigidTransform& ego1_to_world, double t);

/// Object pose relative to the sensor, T_{e_t}^{o_t}, with the object's constant
/// velocity applied in the world frame.
///
/// `ego0_to_obj0` and `ego1_to_obj1` are T_{e_0}^{o_0} and T_{e_1}^{o_1};
/// `world_to_ego0` and `world_to_ego1` are T_w^{e_0} and T_w^{e_1}.
/// When `include_ego_motion` is false the trailing T_{e_t}^{e_1} factor is dropped, which
/// is what callers holding points already deskewed into e_1 need.
RigidTransform continuous_object_pose(const RigidTransform& ego0_to_obj0,
                                      const RigidTransform& ego1_to_obj1,
                                      const RigidTransform& world_to_ego0,
                                      const RigidTransform& world_to_ego1, double t,
                                      bool include_ego_motion = true);

/// Max absolute difference over the 12 affine entries.
double max_abs_difference(const RigidTransform& a, const RigidTransform& b);

}  // namespace smore
