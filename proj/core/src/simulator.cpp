#include "smore/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "smore/errors.hpp"
#include "smore/parallel.hpp"
#include "smore/proximity.hpp"

namespace smore {
namespace {

constexpr double kRayEpsilon = 1e-9;

std::optional<double> intersect_plane(const SimPlane& plane, const Vec3& origin, const Vec3& dir) {
  const RigidTransform inv = plane.pose.inverse();
  const Vec3 o = inv.apply(origin);
  const Vec3 d = inv.apply_direction(dir);
  if (std::abs(d.z()) < 1e-15) return std::nullopt;
  const double t = -o.z() / d.z();
  if (t <= kRayEpsilon) return std::nullopt;
  const Vec3 p = o + t * d;
  if (std::abs(p.x()) > plane.half_size.x() || std::abs(p.y()) > plane.half_size.y()) return std::nullopt;
  return t;
}

std::optional<double> intersect_box(const SimBox& box, const Vec3& origin, const Vec3& dir) {
  const RigidTransform inv = box.pose.inverse();
  const Vec3 o = inv.apply(origin);
  const Vec3 d = inv.apply_direction(dir);
  const Vec3 half = 0.5 * box.extent;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > half[a]) return std::nullopt;
      continue;
    }
    double t0 = (-half[a] - o[a]) / d[a];
    double t1 = (half[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_near > kRayEpsilon) return t_near;
  if (t_far > kRayEpsilon) return t_far;
  return std::nullopt;
}

class Raycaster {
 public:
  explicit Raycaster(const SimSceneConfig& config) : config_(config) {
    for (const SimMesh& m : config.meshes) static_meshes_.push_back(std::make_unique<MeshProximityIndex>(m.mesh));
    for (const SimActor& a : config.actors) actors_.push_back(std::make_unique<MeshProximityIndex>(a.mesh));
  }

  /// Actor poses must be supplied for `time`; nullopt entries are absent actors.
  std::optional<SimHit> cast(const Vec3& origin, const Vec3& dir, double max_range,
                             const std::vector<std::optional<RigidTransform>>& actor_poses) const {
    std::optional<SimHit> best;
    auto offer = [&](double t, int id) {
      if (t <= max_range && (!best || t < best->range)) best = SimHit{t, id};
    };
    for (const SimPlane& p : config_.planes) {
      if (auto t = intersect_plane(p, origin, dir)) offer(*t, kBackgroundId);
    }
    for (const SimBox& b : config_.boxes) {
      if (auto t = intersect_box(b, origin, dir)) offer(*t, kBackgroundId);
    }
    for (std::size_t m = 0; m < static_meshes_.size(); ++m) {
      const RigidTransform inv = config_.meshes[m].pose.inverse();
      if (auto hit = static_meshes_[m]->intersect({inv.apply(origin), inv.apply_direction(dir)}, max_range)) {
        offer(hit->t, kBackgroundId);
      }
    }
    for (std::size_t a = 0; a < actors_.size(); ++a) {
      if (!actor_poses[a]) continue;
      const RigidTransform inv = actor_poses[a]->inverse();
      if (auto hit = actors_[a]->intersect({inv.apply(origin), inv.apply_direction(dir)}, max_range)) {
        offer(hit->t, config_.actors[a].object_id);
      }
    }
    return best;
  }

  std::vector<std::optional<RigidTransform>> actor_poses(double time) const {
    std::vector<std::optional<RigidTransform>> poses(config_.actors.size());
    for (std::size_t a = 0; a < config_.actors.size(); ++a) {
      if (config_.actors[a].trajectory.covers(time)) poses[a] = config_.actors[a].trajectory.pose_at(time);
    }
    return poses;
  }

 private:
  const SimSceneConfig& config_;
  std::vector<std::unique_ptr<MeshProximityIndex>> static_meshes_;
  std::vector<std::unique_ptr<MeshProximityIndex>> actors_;
};

}  // namespace

Vec3 SensorSpec::direction(std::size_t beam, int azimuth) const {
  const double el = elevation_angles.at(beam);
  const double az = 2.0 * std::numbers::pi * static_cast<double>(azimuth) / static_cast<double>(azimuth_steps_per_rev);
  return Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
}

void SensorSpec::validate() const {
  if (elevation_angles.empty()) throw Error("SensorSpec: no beams");
  if (elevation_angles.size() > 65535) throw Error("SensorSpec: too many beams");
  if (azimuth_steps_per_rev <= 0) throw Error("SensorSpec: azimuth_steps_per_rev must be positive");
  if (!(period_seconds > 0.0)) throw Error("SensorSpec: period must be positive");
  if (!(max_range > 0.0) || min_range < 0.0 || min_range >= max_range) throw Error("SensorSpec: invalid range limits");
  if (range_noise_sigma < 0.0) throw Error("SensorSpec: negative range noise");
}

SensorSpec SensorSpec::default_spec() {
  SensorSpec s;
  for (int b = 0; b < 16; ++b) s.elevation_angles.push_back((-15.0 + 2.0 * b) * std::numbers::pi / 180.0);
  return s;
}

void SimSceneConfig::validate() const {
  sensor.validate();
  if (sweep_count <= 0) throw Error("SimSceneConfig: sweep_count must be positive");
  const double end = start_time + sweep_count * sensor.period_seconds;
  if (!ego.covers(start_time) || !ego.covers(end)) {
    throw Error("SimSceneConfig: ego trajectory does not cover the capture interval");
  }
  std::set<int> ids;
  for (const SimActor& a : actors) {
    if (a.object_id <= 0 || a.object_id > 65535) throw Error("SimSceneConfig: actor ids must be in [1, 65535]");
    if (!ids.insert(a.object_id).second) throw Error("SimSceneConfig: duplicate actor id " + std::to_string(a.object_id));
    if (a.mesh.empty()) throw Error("SimSceneConfig: actor " + std::to_string(a.object_id) + " has no mesh");
  }
}

TriangleMesh background_mesh(const SimSceneConfig& config) {
  TriangleMesh out;
  for (const SimPlane& p : config.planes) {
    const Vec3 u(2.0 * p.half_size.x(), 0.0, 0.0);
    const Vec3 v(0.0, 2.0 * p.half_size.y(), 0.0);
    const Vec3 corner(-p.half_size.x(), -p.half_size.y(), 0.0);
    out.append(make_quad_mesh(corner, u, v).transformed(p.pose));
  }
  for (const SimBox& b : config.boxes) out.append(make_box_mesh(b.extent).transformed(b.pose));
  for (const SimMesh& m : config.meshes) out.append(m.mesh.transformed(m.pose));
  return out;
}

std::optional<SimHit> cast_scene(const SimSceneConfig& config, const Vec3& origin, const Vec3& direction,
                                 double time, double max_range) {
  Raycaster caster(config);
  return caster.cast(origin, direction.normalized(), max_range, caster.actor_poses(time));
}

SimDataset simulate(const SimSceneConfig& config) {
  config.validate();
  const SensorSpec& sensor = config.sensor;
  const std::size_t beams = sensor.beam_count();
  const int steps = sensor.azimuth_steps_per_rev;
  const double period = sensor.period_seconds;
  Raycaster caster(config);

  SimDataset out;
  out.sensor = sensor;
  std::vector<double> key_times;
  std::vector<RigidTransform> key_poses;
  for (int k = 0; k <= config.sweep_count; ++k) {
    const double t = config.start_time + k * period;
    key_times.push_back(t);
    key_poses.push_back(config.ego.pose_at(t));
  }
  out.ego = BodyTrajectory(key_times, key_poses);

  for (int s = 0; s < config.sweep_count; ++s) {
    const double start = config.start_time + s * period;
    std::vector<std::optional<SimHit>> hits(static_cast<std::size_t>(steps) * beams);
    std::vector<Vec3> emit(static_cast<std::size_t>(steps));
    parallel_for(static_cast<std::size_t>(steps), [&](std::size_t a) {
      const double time = start + static_cast<double>(a) / steps * period;
      const RigidTransform ego = config.ego.pose_at(time);
      emit[a] = ego.translation;
      const auto poses = caster.actor_poses(time);
      for (std::size_t b = 0; b < beams; ++b) {
        const Vec3 dir = ego.apply_direction(sensor.direction(b, static_cast<int>(a)));
        auto hit = caster.cast(ego.translation, dir, sensor.max_range, poses);
        if (hit && hit->range >= sensor.min_range) hits[a * beams + b] = hit;
      }
    });

    std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(s) + 1);
    std::normal_distribution<double> noise(0.0, sensor.range_noise_sigma);
    Sweep sweep;
    sweep.sweep_index = s;
    sweep.start_time = start;
    sweep.period = period;
    std::vector<std::uint16_t> labels;
    PointSet origins;
    std::vector<int> azimuths;
    for (int a = 0; a < steps; ++a) {
      for (std::size_t b = 0; b < beams; ++b) {
        const auto& hit = hits[static_cast<std::size_t>(a) * beams + b];
        if (!hit) continue;
        double range = hit->range;
        if (sensor.range_noise_sigma > 0.0) range += noise(rng);
        sweep.points.push_back(sensor.direction(b, a) * range);
        sweep.times.push_back(static_cast<double>(a) / steps);
        sweep.beam_ids.push_back(static_cast<std::uint16_t>(b));
        labels.push_back(static_cast<std::uint16_t>(hit->object_id));
        origins.push_back(emit[static_cast<std::size_t>(a)]);
        azimuths.push_back(a);
      }
    }
    out.sweeps.push_back(std::move(sweep));
    out.labels.push_back(std::move(labels));
    out.origins.push_back(std::move(origins));
    out.azimuths.push_back(std::move(azimuths));
  }

  const double first = key_times.front();
  const double last = key_times.back();
  out.scene.background = background_mesh(config);
  out.scene.ego = out.ego;
  for (const SimActor& a : config.actors) {
    out.scene.objects[a.object_id] = SceneObject{a.mesh, a.trajectory, a.extent};
    BoundingBoxTrack track;
    track.object_id = a.object_id;
    for (double t : a.trajectory.times()) {
      if (t < first - 1e-9 || t > last + 1e-9) continue;
      const RigidTransform pose = a.trajectory.pose_at(t);
      BoxAnnotation entry;
      entry.timestamp = t;
      entry.center = pose.translation;
      entry.yaw = pose.yaw();
      entry.extent = a.extent;
      track.entries.push_back(entry);
    }
    if (!track.entries.empty()) out.tracks.push_back(std::move(track));
  }
  return out;
}

BodyTrajectory arc_trajectory(const Vec3& start, double start_yaw, double speed, double yaw_rate,
                              std::span<const double> times) {
  std::vector<double> ts(times.begin(), times.end());
  std::vector<RigidTransform> poses;
  const double t0 = ts.empty() ? 0.0 : ts.front();
  for (double t : ts) {
    const double dt = t - t0;
    const double yaw = start_yaw + yaw_rate * dt;
    Vec3 p = start;
    if (std::abs(yaw_rate) < 1e-12) {
      p += speed * dt * Vec3(std::cos(start_yaw), std::sin(start_yaw), 0.0);
    } else {
      const double r = speed / yaw_rate;
      p += Vec3(r * (std::sin(yaw) - std::sin(start_yaw)), -r * (std::cos(yaw) - std::cos(start_yaw)), 0.0);
    }
    poses.push_back(RigidTransform::from_yaw(yaw, p));
  }
  return BodyTrajectory(std::move(ts), std::move(poses));
}

TriangleMesh make_car_mesh(const Vec3& extent) {
  const double l = extent.x();
  const double w = extent.y();
  const double h = extent.z();
  TriangleMesh car = make_box_mesh(Vec3(l, w, 0.6 * h), Vec3(0.0, 0.0, -0.5 * h + 0.3 * h));
  car.append(make_box_mesh(Vec3(0.5 * l, 0.9 * w, 0.4 * h), Vec3(-0.1 * l, 0.0, 0.5 * h - 0.2 * h)));
  return car;
}

SimSceneConfig make_fast_mover_scene(const FastMoverOptions& options) {
  SimSceneConfig config;
  config.sensor = SensorSpec::default_spec();
  config.sensor.max_range = 40.0;
  config.sensor.range_noise_sigma = options.range_noise_sigma;
  config.sweep_count = options.sweep_count;
  config.seed = options.seed;

  std::vector<double> times;
  for (int k = 0; k <= options.sweep_count; ++k) times.push_back(k * config.sensor.period_seconds);
  config.ego = arc_trajectory(Vec3(0.0, 0.0, 1.8), 0.0, options.ego_speed, options.ego_yaw_rate, times);

  SimPlane ground;
  ground.pose = RigidTransform::from_translation(Vec3(10.0, 5.0, 0.0));
  ground.half_size = Eigen::Vector2d(35.0, 35.0);
  config.planes.push_back(ground);

  auto add_box = [&](const Vec3& center, const Vec3& extent, double yaw) {
    config.boxes.push_back({RigidTransform::from_yaw(yaw, center), extent});
  };
  add_box(Vec3(32.0, 5.0, 3.0), Vec3(1.0, 50.0, 6.0), 0.0);
  add_box(Vec3(10.0, -24.0, 2.5), Vec3(40.0, 1.0, 5.0), 0.0);
  add_box(Vec3(4.0, 22.0, 2.0), Vec3(8.0, 6.0, 4.0), 0.2);
  add_box(Vec3(22.0, 8.0, 0.75), Vec3(2.0, 2.0, 1.5), 0.4);
  add_box(Vec3(-4.0, 8.0, 2.0), Vec3(1.0, 1.0, 4.0), 0.0);
  add_box(Vec3(3.0, -8.0, 1.0), Vec3(3.0, 2.0, 2.0), -0.3);

  SimActor car;
  car.object_id = 1;
  car.extent = Vec3(4.5, 1.8, 1.5);
  car.mesh = make_car_mesh(car.extent);
  car.trajectory = arc_trajectory(options.actor_start, options.actor_yaw, options.actor_speed,
                                  options.actor_yaw_rate, times);
  config.actors.push_back(std::move(car));
  return config;
}

std::vector<BoundingBoxTrack> perturb_annotations(std::span<const BoundingBoxTrack> tracks,
                                                  const AnnotationNoise& noise, double subsample_hz,
                                                  std::uint64_t seed) {
  if (noise.translation_sigma < 0.0 || noise.vertical_sigma < 0.0 || noise.yaw_sigma < 0.0) {
    throw Error("perturb_annotations: noise must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<BoundingBoxTrack> out;
  for (const BoundingBoxTrack& track : tracks) {
    BoundingBoxTrack kept;
    kept.object_id = track.object_id;
    std::size_t stride = 1;
    if (subsample_hz > 0.0 && track.entries.size() >= 2) {
      std::vector<double> gaps;
      for (std::size_t i = 1; i < track.entries.size(); ++i) {
        gaps.push_back(track.entries[i].timestamp - track.entries[i - 1].timestamp);
      }
      std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
      const double source_hz = 1.0 / gaps[gaps.size() / 2];
      stride = static_cast<std::size_t>(std::max(1.0, std::round(source_hz / subsample_hz)));
    }
    for (std::size_t i = 0; i < track.entries.size(); i += stride) {
      BoxAnnotation e = track.entries[i];
      const double dx = unit(rng);
      const double dy = unit(rng);
      const double dz = unit(rng);
      const double dyaw = unit(rng);
      e.center += Vec3(noise.translation_sigma * dx, noise.translation_sigma * dy, noise.vertical_sigma * dz);
      e.yaw = std::remainder(e.yaw + noise.yaw_sigma * dyaw, 2.0 * std::numbers::pi);
      kept.entries.push_back(e);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

BodyTrajectory perturb_trajectory(const BodyTrajectory& trajectory, double translation_sigma,
                                  double rotation_sigma, std::uint64_t seed) {
  if (translation_sigma < 0.0 || rotation_sigma < 0.0) throw Error("perturb_trajectory: noise must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<RigidTransform> poses;
  for (const RigidTransform& pose : trajectory.poses()) {
    Vec3 dt;
    Vec3 dw;
    for (int a = 0; a < 3; ++a) dt[a] = translation_sigma * unit(rng);
    for (int a = 0; a < 3; ++a) dw[a] = rotation_sigma * unit(rng);
    RigidTransform noisy = pose;
    noisy.rotation = exp_rotation(dw) * pose.rotation;
    noisy.translation = pose.translation + dt;
    poses.push_back(noisy);
  }
  return BodyTrajectory(trajectory.times(), std::move(poses));
}

}  // namespace smore
