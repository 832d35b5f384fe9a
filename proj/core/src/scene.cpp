#include "smore/scene.hpp"

#include <limits>
#include <string>

#include "smore/errors.hpp"

namespace smore {
namespace {

double exhaustive_distance(const TriangleMesh& mesh, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Triangle& f : mesh.triangles) {
    const Vec3 c = closest_point_on_triangle(p, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    best = std::min(best, (c - p).squaredNorm());
  }
  return std::sqrt(best);
}

bool covers_sweep(const BodyTrajectory& traj, const Sweep& sweep) {
  return traj.covers(sweep.start_time) && traj.covers(sweep.end_time());
}

}  // namespace

void SceneModel::validate() const {
  if (ego.empty()) throw Error("SceneModel: empty ego trajectory");
  for (const auto& [id, obj] : objects) {
    if (id <= 0) throw Error("SceneModel: object ids must be positive, got " + std::to_string(id));
    if (obj.trajectory.empty()) throw Error("SceneModel: object " + std::to_string(id) + " has no trajectory");
  }
}

SceneIndex::SceneIndex(const SceneModel& scene) {
  if (!scene.background.empty()) {
    surfaces_[kBackgroundId] = std::make_unique<MeshProximityIndex>(scene.background);
  }
  for (const auto& [id, obj] : scene.objects) {
    if (!obj.mesh.empty()) surfaces_[id] = std::make_unique<MeshProximityIndex>(obj.mesh);
  }
}

const MeshProximityIndex* SceneIndex::surface(int id) const {
  auto it = surfaces_.find(id);
  return it == surfaces_.end() ? nullptr : it->second.get();
}

std::vector<ComposedSurface> compose_at(const SceneModel& scene, double time) {
  const RigidTransform world_to_ego = scene.ego.pose_at(time).inverse();
  std::vector<ComposedSurface> out;
  out.push_back({kBackgroundId, &scene.background, world_to_ego});
  for (const auto& [id, obj] : scene.objects) {
    if (!obj.trajectory.covers(time)) continue;
    out.push_back({id, &obj.mesh, world_to_ego * obj.trajectory.pose_at(time)});
  }
  return out;
}

std::vector<std::optional<double>> assigned_distances(const SceneModel& scene, const SceneIndex& index,
                                                      const Sweep& sweep, std::span<const int> labels,
                                                      const EvaluationOptions& options) {
  if (labels.size() != sweep.size()) throw Error("assigned_distances: label count does not match sweep");
  std::vector<std::optional<double>> out(sweep.size());
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);

  for (const auto& [id, members] : groups) {
    const MeshProximityIndex* surface = index.surface(id);
    if (surface == nullptr) continue;
    PointSet pts;
    std::vector<double> times;
    pts.reserve(members.size());
    times.reserve(members.size());
    for (std::size_t i : members) {
      pts.push_back(sweep.points[i]);
      times.push_back(sweep.times[i]);
    }
    CanonicalPoints canon;
    if (id == kBackgroundId) {
      canon = canonicalize_background_points(pts, times, sweep.start_time, sweep.period, scene.ego);
    } else {
      auto it = scene.objects.find(id);
      if (it == scene.objects.end() || !covers_sweep(it->second.trajectory, sweep)) continue;
      CanonicalizeOptions copt;
      copt.actor_deskew = options.actor_deskew;
      canon = canonicalize_object_points(pts, times, sweep.start_time, sweep.period, scene.ego, it->second.trajectory,
                                         copt);
    }
    for (std::size_t n = 0; n < members.size(); ++n) {
      out[members[n]] = surface->closest(canon.points[n])->distance;
    }
  }
  return out;
}

ObjectiveBreakdown objective(const SceneModel& scene, const SceneIndex& index, std::span<const Sweep> sweeps,
                             std::span<const std::vector<int>> labels, const EvaluationOptions& options) {
  if (sweeps.size() != labels.size()) throw Error("objective: one label vector per sweep required");
  ObjectiveBreakdown out;
  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    const auto dist = assigned_distances(scene, index, sweeps[s], labels[s], options);
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (!dist[i]) {
        ++out.unscored;
        continue;
      }
      out.per_object[labels[s][i]] += *dist[i];
      ++out.point_counts[labels[s][i]];
    }
  }
  for (const auto& [id, v] : out.per_object) out.total += v;
  return out;
}

ObjectiveBreakdown objective_composed(const SceneModel& scene, std::span<const Sweep> sweeps,
                                      std::span<const std::vector<int>> labels, ComposedDistance mode) {
  if (sweeps.size() != labels.size()) throw Error("objective_composed: one label vector per sweep required");
  ObjectiveBreakdown out;
  for (std::size_t s = 0; s < sweeps.size(); ++s) {
    const Sweep& sweep = sweeps[s];
    double cached_time = std::numeric_limits<double>::quiet_NaN();
    std::map<int, TriangleMesh> posed;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const int label = labels[s][i];
      if (label != kBackgroundId) {
        auto it = scene.objects.find(label);
        if (it == scene.objects.end() || it->second.mesh.empty() || !covers_sweep(it->second.trajectory, sweep)) {
          ++out.unscored;
          continue;
        }
      } else if (scene.background.empty()) {
        ++out.unscored;
        continue;
      }
      const double time = sweep.absolute_time(i);
      if (time != cached_time) {
        cached_time = time;
        posed.clear();
        for (const ComposedSurface& c : compose_at(scene, time)) {
          if (!c.mesh->empty()) posed[c.id] = c.mesh->transformed(c.mesh_to_ego);
        }
      }
      double d = std::numeric_limits<double>::infinity();
      if (mode == ComposedDistance::AssignedSurface) {
        d = exhaustive_distance(posed.at(label), sweep.points[i]);
      } else {
        for (const auto& [id, mesh] : posed) d = std::min(d, exhaustive_distance(mesh, sweep.points[i]));
      }
      out.per_object[label] += d;
      ++out.point_counts[label];
    }
  }
  for (const auto& [id, v] : out.per_object) out.total += v;
  return out;
}

double scene_distance(const SceneModel& scene, const SceneIndex& index, const Vec3& point_in_ego, double time) {
  const RigidTransform ego_pose = scene.ego.pose_at(time);
  const Vec3 world = ego_pose.apply(point_in_ego);
  double best = std::numeric_limits<double>::infinity();
  if (const auto* bg = index.surface(kBackgroundId)) best = bg->closest(world)->distance;
  for (const auto& [id, obj] : scene.objects) {
    const auto* surface = index.surface(id);
    if (surface == nullptr || !obj.trajectory.covers(time)) continue;
    const Vec3 local = obj.trajectory.pose_at(time).inverse().apply(world);
    if (const auto hit = surface->closest(local, best)) best = std::min(best, hit->distance);
  }
  return best;
}

}  // namespace smore
