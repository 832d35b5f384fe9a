#pragma once

#include <cstddef>
#include <vector>

#include "smore/se3.hpp"

namespace smore {

/// Keyframed body-to-world poses with constant-velocity motion between consecutive
/// keyframes. Evaluation follows the same split interpolation as continuous_ego_pose,
/// so ego and actor trajectories share one motion model.
class BodyTrajectory {
 public:
  BodyTrajectory() = default;
  /// Throws smore::Error if times are not strictly increasing or sizes differ.
  BodyTrajectory(std::vector<double> times, std::vector<RigidTransform> poses);

  static BodyTrajectory constant(const RigidTransform& pose, double first, double last);

  bool empty() const { return times_.empty(); }
  std::size_t size() const { return times_.size(); }
  double first_time() const;
  double last_time() const;
  bool covers(double time, double slack = 1e-9) const;

  const std::vector<double>& times() const { return times_; }
  const std::vector<RigidTransform>& poses() const { return poses_; }
  const RigidTransform& keyframe(std::size_t i) const { return poses_.at(i); }
  void set_keyframe(std::size_t i, const RigidTransform& pose) { poses_.at(i) = pose; }

  /// Index of the segment [k, k+1] containing `time`. Throws CoverageError.
  std::size_t segment(double time) const;
  /// Index of the keyframe at `time` within `tol`, or size() if none.
  std::size_t keyframe_index(double time, double tol = 1e-9) const;

  /// T_{b_t}^{w} at absolute time. Throws CoverageError outside [first, last].
  RigidTransform pose_at(double time) const;

 private:
  std::vector<double> times_;
  std::vector<RigidTransform> poses_;
};

}  // namespace smore
