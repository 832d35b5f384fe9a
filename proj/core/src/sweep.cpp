#include "smore/sweep.hpp"

#include <limits>
#include <string>

#include "smore/errors.hpp"

namespace smore {

void Sweep::validate() const {
  if (points.size() != times.size() || points.size() != beam_ids.size()) {
    throw Error("sweep " + std::to_string(sweep_index) + ": points/times/beam_ids sizes differ");
  }
  if (!(period > 0.0)) throw Error("sweep " + std::to_string(sweep_index) + ": period must be positive");
  for (double t : times) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("sweep " + std::to_string(sweep_index) + ": time outside [0, 1]");
  }
}

void BoundingBoxTrack::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if ((entries[i].extent.array() <= 0.0).any()) {
      throw Error("track " + std::to_string(object_id) + ": non-positive extent");
    }
    if (i > 0 && !(entries[i].timestamp > entries[i - 1].timestamp)) {
      throw Error("track " + std::to_string(object_id) + ": timestamps not strictly increasing");
    }
  }
}

std::vector<int> assign_points(const Sweep& sweep, const BodyTrajectory& ego, std::span<const BoxTrajectory> boxes,
                               double margin) {
  std::vector<int> labels(sweep.size(), kBackgroundId);
  if (boxes.empty()) return labels;

  // Points sharing a firing time share poses.
  std::vector<RigidTransform> sensor_to_box(boxes.size());
  std::vector<bool> live(boxes.size(), false);
  double cached_time = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const double time = sweep.absolute_time(i);
    if (time != cached_time) {
      cached_time = time;
      const RigidTransform ego_pose = ego.pose_at(time);
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        live[b] = boxes[b].trajectory.covers(time);
        if (live[b]) sensor_to_box[b] = boxes[b].trajectory.pose_at(time).inverse() * ego_pose;
      }
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (!live[b]) continue;
      const Vec3 local = sensor_to_box[b].apply(sweep.points[i]);
      const Vec3 half = 0.5 * boxes[b].extent + Vec3::Constant(margin);
      if ((local.cwiseAbs().array() <= half.array()).all()) {
        const double d = local.squaredNorm();
        if (d < best) {
          best = d;
          labels[i] = boxes[b].object_id;
        }
      }
    }
  }
  return labels;
}

DeskewedSweep deskew_ego(const Sweep& sweep, const BodyTrajectory& ego) {
  const RigidTransform e0 = ego.pose_at(sweep.start_time);
  const RigidTransform e1 = ego.pose_at(sweep.end_time());
  const RigidTransform delta = e1.inverse() * e0;  // T_{e0}^{e1}

  DeskewedSweep out;
  out.points.reserve(sweep.size());
  out.origins.reserve(sweep.size());
  out.times = sweep.times;
  out.beam_ids = sweep.beam_ids;
  double cached_t = std::numeric_limits<double>::quiet_NaN();
  RigidTransform to_e1;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const double t = sweep.times[i];
    if (t != cached_t) {
      cached_t = t;
      to_e1 = interp_relative(delta, 1.0 - t);
    }
    out.points.push_back(to_e1.apply(sweep.points[i]));
    out.origins.push_back(to_e1.translation);
  }
  return out;
}

Vec3 point_ray_origin(std::size_t index, const Sweep& sweep, const BodyTrajectory& ego) {
  const RigidTransform e0 = ego.pose_at(sweep.start_time);
  const RigidTransform e1 = ego.pose_at(sweep.end_time());
  return continuous_ego_pose(e0, e1, sweep.times.at(index)).translation;
}

RigidTransform object_from_sensor(double t, const RigidTransform& ego0_to_world, const RigidTransform& ego1_to_world,
                                  const RigidTransform& obj0_to_world, const RigidTransform& obj1_to_world,
                                  const CanonicalizeOptions& options) {
  const RigidTransform world_to_ego0 = ego0_to_world.inverse();
  const RigidTransform world_to_ego1 = ego1_to_world.inverse();
  const RigidTransform ego0_to_obj0 = obj0_to_world.inverse() * ego0_to_world;
  const RigidTransform ego1_to_obj1 = obj1_to_world.inverse() * ego1_to_world;
  if (options.actor_deskew) {
    return continuous_object_pose(ego0_to_obj0, ego1_to_obj1, world_to_ego0, world_to_ego1, t,
                                  !options.already_ego_deskewed);
  }
  if (options.already_ego_deskewed) return ego1_to_obj1;
  return ego1_to_obj1 * interp_relative(world_to_ego1 * ego0_to_world, 1.0 - t);
}

CanonicalPoints canonicalize_object_points(std::span<const Vec3> points, std::span<const double> times,
                                           double start_time, double period, const BodyTrajectory& ego,
                                           const BodyTrajectory& object, const CanonicalizeOptions& options) {
  if (points.size() != times.size()) throw Error("canonicalize_object_points: points/times size mismatch");
  const double end_time = start_time + period;
  const RigidTransform e0 = ego.pose_at(start_time);
  const RigidTransform e1 = ego.pose_at(end_time);
  const RigidTransform o0 = object.pose_at(start_time);
  const RigidTransform o1 = object.pose_at(end_time);

  CanonicalizeOptions with_ego = options;
  with_ego.already_ego_deskewed = false;

  CanonicalPoints out;
  out.points.reserve(points.size());
  out.origins.reserve(points.size());
  double cached_t = std::numeric_limits<double>::quiet_NaN();
  RigidTransform to_obj;
  RigidTransform sensor_to_obj;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (times[i] != cached_t) {
      cached_t = times[i];
      sensor_to_obj = object_from_sensor(cached_t, e0, e1, o0, o1, with_ego);
      to_obj = options.already_ego_deskewed ? object_from_sensor(cached_t, e0, e1, o0, o1, options) : sensor_to_obj;
    }
    out.points.push_back(to_obj.apply(points[i]));
    out.origins.push_back(sensor_to_obj.translation);
  }
  return out;
}

CanonicalPoints canonicalize_background_points(std::span<const Vec3> points, std::span<const double> times,
                                               double start_time, double period, const BodyTrajectory& ego) {
  if (points.size() != times.size()) throw Error("canonicalize_background_points: points/times size mismatch");
  const RigidTransform e0 = ego.pose_at(start_time);
  const RigidTransform e1 = ego.pose_at(start_time + period);
  CanonicalPoints out;
  out.points.reserve(points.size());
  out.origins.reserve(points.size());
  double cached_t = std::numeric_limits<double>::quiet_NaN();
  RigidTransform pose;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (times[i] != cached_t) {
      cached_t = times[i];
      pose = continuous_ego_pose(e0, e1, cached_t);
    }
    out.points.push_back(pose.apply(points[i]));
    out.origins.push_back(pose.translation);
  }
  return out;
}

}  // namespace smore
