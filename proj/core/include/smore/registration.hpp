#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smore/proximity.hpp"
#include "smore/se3.hpp"
#include "smore/sweep.hpp"
#include "smore/trajectory.hpp"

namespace smore {

struct IcpParams {
  double huber_k = 0.2;           // meters
  double match_threshold = 1.5;   // meters
  int max_iterations = 50;
  double convergence_eps = 1e-7;  // norm of the (rotation rad, translation m) update
  std::size_t min_points = 50;
  double condition_limit = 1e6;
  int max_step_halvings = 10;

  /// Throws smore::Error unless every field is positive.
  void validate() const;
};

enum class RegistrationStatus {
  Converged,
  MaxIterations,
  SkipObject,           // fewer than min_points inputs
  DivergedRegistration  // no correspondence within match_threshold
};

struct IcpIterate {
  int iteration = 0;
  double mean_residual = 0.0;
  std::size_t inliers = 0;
  double objective = 0.0;
};

struct RegistrationResult {
  RigidTransform pose;
  double mean_residual = 0.0;  // mean |point-to-plane residual| over matched points
  std::size_t inlier_count = 0;
  bool converged = false;
  RegistrationStatus status = RegistrationStatus::MaxIterations;
  double condition_number = 0.0;  // of the final 6x6 normal matrix
  bool ambiguous = false;         // condition_number above IcpParams::condition_limit
  int iterations = 0;
  std::vector<IcpIterate> trace;
};

double huber_cost(double r, double k);

/// Robust point-to-plane ICP: find `pose` minimizing sum huber(n . (pose * x - m)) with
/// (m, n) the closest surface point and its triangle normal within match_threshold.
/// Gauss-Newton with IRLS weights; a step is halved until the truncated robust objective
/// does not increase. Directions whose curvature falls below lambda_max / condition_limit
/// are left unchanged.
RegistrationResult icp_point_to_plane(const SurfaceQuery& surface, std::span<const Vec3> points,
                                      const RigidTransform& init, const IcpParams& params);

/// Truncated robust objective used by the step guard, exposed for tests.
double icp_objective(const SurfaceQuery& surface, std::span<const Vec3> points, const RigidTransform& pose,
                     const IcpParams& params);

/// Points of one object (or the background) observed during one sweep.
struct SweepView {
  PointSet points;            // ego frame at acquisition time
  std::vector<double> times;  // sweep fractions
  double start_time = 0.0;
  double period = 0.1;

  double end_time() const { return start_time + period; }
};

struct KeyframeRegistration {
  RegistrationResult icp;
  /// Canonical-frame correction C (new canonical point = C * old canonical point).
  RigidTransform correction;
  /// Updated keyframe pose at the end of the sweep (body-to-world).
  RigidTransform keyframe_pose;
};

/// Pose step for one object keyframe: canonicalize with the current continuous pose
/// (world-frame motion inside the sweep held fixed), register against the canonical
/// mesh, and move the keyframe by the resulting correction.
KeyframeRegistration register_object_keyframe(const SurfaceQuery& object_mesh, const SweepView& view,
                                              const BodyTrajectory& ego, const BodyTrajectory& object,
                                              const IcpParams& params, bool actor_deskew = true);

/// Pose step for one ego keyframe: deskew into e_1 with the current intra-sweep motion
/// held fixed and register against the world-frame background mesh.
KeyframeRegistration register_ego_keyframe(const SurfaceQuery& background, const SweepView& view,
                                           const BodyTrajectory& ego, const IcpParams& params);

}  // namespace smore
