#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "smore/mesh.hpp"
#include "smore/proximity.hpp"
#include "smore/sweep.hpp"
#include "smore/trajectory.hpp"

namespace smore {

struct SceneObject {
  TriangleMesh mesh;          // canonical (object) frame
  BodyTrajectory trajectory;  // object-to-world
  Vec3 extent = Vec3::Ones(); // box extent used for point assignment
};

/// Background mesh in the world frame, ego trajectory, and rigid objects keyed by id (> 0).
struct SceneModel {
  TriangleMesh background;
  BodyTrajectory ego;
  std::map<int, SceneObject> objects;

  /// Throws smore::Error on an empty ego trajectory or a non-positive object id.
  void validate() const;
};

/// Proximity indexes for every component of a scene. Holds copies of the meshes.
class SceneIndex {
 public:
  explicit SceneIndex(const SceneModel& scene);

  /// nullptr when the component has no mesh.
  const MeshProximityIndex* surface(int id) const;

 private:
  std::map<int, std::unique_ptr<MeshProximityIndex>> surfaces_;
};

struct ComposedSurface {
  int id = kBackgroundId;
  const TriangleMesh* mesh = nullptr;
  RigidTransform mesh_to_ego;  // T_w^{e_t} for the background, T_{o_t}^{e_t} for objects
};

/// All surfaces posed into the ego frame at absolute time `time`. Objects whose trajectory
/// does not cover `time` are absent. Throws CoverageError when the ego trajectory does not.
std::vector<ComposedSurface> compose_at(const SceneModel& scene, double time);

struct EvaluationOptions {
  bool actor_deskew = true;
};

/// Per-point distance to the surface of the point's assigned component, measured in the
/// component's canonical frame with per-point continuous time. nullopt marks points whose
/// component has no mesh or whose trajectory does not cover the sweep.
std::vector<std::optional<double>> assigned_distances(const SceneModel& scene, const SceneIndex& index,
                                                      const Sweep& sweep, std::span<const int> labels,
                                                      const EvaluationOptions& options = {});

struct ObjectiveBreakdown {
  double total = 0.0;
  std::map<int, double> per_object;
  std::map<int, std::size_t> point_counts;
  std::size_t unscored = 0;
};

/// Sum over sweeps and components of D(M_i, canonicalized X_i); total equals the sum of the
/// per-object terms.
ObjectiveBreakdown objective(const SceneModel& scene, const SceneIndex& index, std::span<const Sweep> sweeps,
                             std::span<const std::vector<int>> labels, const EvaluationOptions& options = {});

enum class ComposedDistance {
  AssignedSurface,  // distance to the point's own component, posed into the ego frame
  NearestSurface    // distance to the union of all posed components
};

/// Reference evaluation that poses meshes into the ego frame at each point's time and
/// measures against the raw points (exhaustive triangle search). Intended for small scenes.
ObjectiveBreakdown objective_composed(const SceneModel& scene, std::span<const Sweep> sweeps,
                                      std::span<const std::vector<int>> labels,
                                      ComposedDistance mode = ComposedDistance::AssignedSurface);

/// Distance from an ego-frame point at absolute time `time` to the nearest composed surface.
double scene_distance(const SceneModel& scene, const SceneIndex& index, const Vec3& point_in_ego, double time);

}  // namespace smore
