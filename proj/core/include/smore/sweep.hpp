#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smore/trajectory.hpp"
#include "smore/types.hpp"

namespace smore {

/// Object id 0 is the static background.
inline constexpr int kBackgroundId = 0;

/// One sensor revolution. Points are in the ego frame at their own acquisition time;
/// `times` is the fraction of the period in [0, 1], with keyframe e_0 at `start_time`
/// and keyframe e_1 at `start_time + period`.
struct Sweep {
  PointSet points;
  std::vector<double> times;
  std::vector<std::uint16_t> beam_ids;
  int sweep_index = 0;
  double start_time = 0.0;
  double period = 0.1;

  std::size_t size() const { return points.size(); }
  double end_time() const { return start_time + period; }
  double absolute_time(std::size_t i) const { return start_time + times[i] * period; }
  /// Throws smore::Error on size mismatch, times outside [0, 1], or non-positive period.
  void validate() const;
};

struct BoxAnnotation {
  double timestamp = 0.0;  // seconds
  Vec3 center = Vec3::Zero();
  Vec3 extent = Vec3::Ones();  // full side lengths, object frame (x forward)
  double yaw = 0.0;

  RigidTransform pose() const { return RigidTransform::from_yaw(yaw, center); }
};

struct BoundingBoxTrack {
  int object_id = 0;
  std::vector<BoxAnnotation> entries;

  /// Strictly increasing timestamps and positive extents; throws smore::Error.
  void validate() const;
};

/// An oriented box moving along a body trajectory; used for point assignment.
struct BoxTrajectory {
  int object_id = 0;
  BodyTrajectory trajectory;  // box-to-world
  Vec3 extent = Vec3::Ones();
};

/// Partition a sweep into background (0) and per-box labels. Box poses are evaluated at
/// each point's own time. Points inside several boxes go to the nearest box center.
/// Boxes whose trajectory does not cover a point's time are ignored for that point.
std::vector<int> assign_points(const Sweep& sweep, const BodyTrajectory& ego,
                               std::span<const BoxTrajectory> boxes, double margin = 0.0);

struct DeskewedSweep {
  PointSet points;   // frame e_1 (sensor pose at the end of the sweep)
  PointSet origins;  // true ray origins, frame e_1
  std::vector<double> times;
  std::vector<std::uint16_t> beam_ids;
};

/// Map every point by T_{e_t}^{e_1}. Throws CoverageError when `ego` misses the sweep span.
DeskewedSweep deskew_ego(const Sweep& sweep, const BodyTrajectory& ego);

/// World-frame sensor position at the acquisition time of point `index`.
Vec3 point_ray_origin(std::size_t index, const Sweep& sweep, const BodyTrajectory& ego);

struct CanonicalizeOptions {
  /// Input points are already expressed in e_1 (ego-deskewed).
  bool already_ego_deskewed = false;
  /// Apply the object's constant-velocity motion per point. When false every point uses the
  /// object pose at the sweep keyframe (t = 1), the classic per-sweep assumption.
  bool actor_deskew = true;
};

struct CanonicalPoints {
  PointSet points;
  PointSet origins;
};

/// Map object points into the object's canonical frame with the inverse of its
/// continuous pose. `times` are sweep fractions; `start_time`/`period` locate the sweep.
CanonicalPoints canonicalize_object_points(std::span<const Vec3> points, std::span<const double> times,
                                           double start_time, double period, const BodyTrajectory& ego,
                                           const BodyTrajectory& object,
                                           const CanonicalizeOptions& options = {});

/// Per-point T_{e_t}^{o_t} (or T_{e_1}^{o_t} when already deskewed), matching
/// canonicalize_object_points.
RigidTransform object_from_sensor(double t, const RigidTransform& ego0_to_world,
                                  const RigidTransform& ego1_to_world, const RigidTransform& obj0_to_world,
                                  const RigidTransform& obj1_to_world, const CanonicalizeOptions& options);

/// Background points into the world frame (with world-frame ray origins).
CanonicalPoints canonicalize_background_points(std::span<const Vec3> points, std::span<const double> times,
                                               double start_time, double period, const BodyTrajectory& ego);

}  // namespace smore
