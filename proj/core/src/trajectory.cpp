#include "smore/trajectory.hpp"

#include <algorithm>
#include <string>

#include "smore/errors.hpp"

namespace smore {

BodyTrajectory::BodyTrajectory(std::vector<double> times, std::vector<RigidTransform> poses)
    : times_(std::move(times)), poses_(std::move(poses)) {
  if (times_.size() != poses_.size()) {
    throw Error("BodyTrajectory: " + std::to_string(times_.size()) + " times but " +
                std::to_string(poses_.size()) + " poses");
  }
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw Error("BodyTrajectory: keyframe times must be strictly increasing");
  }
}

BodyTrajectory BodyTrajectory::constant(const RigidTransform& pose, double first, double last) {
  if (last > first) return BodyTrajectory({first, last}, {pose, pose});
  return BodyTrajectory({first}, {pose});
}

double BodyTrajectory::first_time() const {
  if (times_.empty()) throw Error("BodyTrajectory: empty");
  return times_.front();
}

double BodyTrajectory::last_time() const {
  if (times_.empty()) throw Error("BodyTrajectory: empty");
  return times_.back();
}

bool BodyTrajectory::covers(double time, double slack) const {
  return !times_.empty() && time >= times_.front() - slack && time <= times_.back() + slack;
}

std::size_t BodyTrajectory::segment(double time) const {
  if (!covers(time)) {
    throw CoverageError("trajectory does not cover time " + std::to_string(time), time,
                        times_.empty() ? 0.0 : times_.front(), times_.empty() ? 0.0 : times_.back());
  }
  if (times_.size() == 1) return 0;
  auto it = std::upper_bound(times_.begin(), times_.end(), time);
  std::size_t hi = static_cast<std::size_t>(it - times_.begin());
  hi = std::clamp<std::size_t>(hi, 1, times_.size() - 1);
  return hi - 1;
}

std::size_t BodyTrajectory::keyframe_index(double time, double tol) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), time - tol);
  if (it != times_.end() && std::abs(*it - time) <= tol) return static_cast<std::size_t>(it - times_.begin());
  return times_.size();
}

RigidTransform BodyTrajectory::pose_at(double time) const {
  const std::size_t k = segment(time);
  if (times_.size() == 1) return poses_[0];
  const double t0 = times_[k];
  const double t1 = times_[k + 1];
  if (time <= t0) return poses_[k];
  if (time >= t1) return poses_[k + 1];
  return continuous_ego_pose(poses_[k], poses_[k + 1], (time - t0) / (t1 - t0));
}

}  // namespace smore
