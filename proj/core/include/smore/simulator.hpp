#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "smore/mesh.hpp"
#include "smore/scene.hpp"
#include "smore/sweep.hpp"

namespace smore {

struct SensorSpec {
  std::vector<double> elevation_angles;  // radians, one per beam
  int azimuth_steps_per_rev = 1080;
  double period_seconds = 0.1;
  double max_range = 80.0;
  double min_range = 0.5;
  double range_noise_sigma = 0.0;

  std::size_t beam_count() const { return elevation_angles.size(); }
  /// Unit ray direction in the sensor frame.
  Vec3 direction(std::size_t beam, int azimuth) const;
  /// Throws smore::Error on an empty beam list or non-positive period/steps/range.
  void validate() const;

  /// 16 beams from -15 to +15 degrees in 2 degree steps, 1080 azimuth steps, 0.1 s.
  static SensorSpec default_spec();
};

/// Finite rectangle in its local xy plane (normal +z), |x| <= half_size.x, |y| <= half_size.y.
struct SimPlane {
  RigidTransform pose;
  Eigen::Vector2d half_size = Eigen::Vector2d(10.0, 10.0);
};

struct SimBox {
  RigidTransform pose;
  Vec3 extent = Vec3::Ones();
};

struct SimMesh {
  RigidTransform pose;
  TriangleMesh mesh;
};

struct SimActor {
  int object_id = 1;
  TriangleMesh mesh;          // canonical frame, box centred on the origin
  BodyTrajectory trajectory;  // object-to-world
  Vec3 extent = Vec3::Ones();
};

struct SimSceneConfig {
  std::vector<SimPlane> planes;
  std::vector<SimBox> boxes;
  std::vector<SimMesh> meshes;
  std::vector<SimActor> actors;
  BodyTrajectory ego;  // sensor-to-world; keyframes at sweep boundaries
  SensorSpec sensor = SensorSpec::default_spec();
  int sweep_count = 10;
  double start_time = 0.0;
  std::uint64_t seed = 0;

  /// Throws smore::Error on duplicate or zero actor ids, or an ego trajectory that does
  /// not cover every sweep.
  void validate() const;
};

struct SimDataset {
  std::vector<Sweep> sweeps;
  std::vector<std::vector<std::uint16_t>> labels;  // true object id per point
  std::vector<PointSet> origins;                   // world-frame emission position per point
  std::vector<std::vector<int>> azimuths;          // azimuth index per point
  BodyTrajectory ego;                              // ground truth, keyframes at sweep boundaries
  std::vector<BoundingBoxTrack> tracks;            // ground-truth boxes at every keyframe
  SceneModel scene;                                // ground-truth meshes and trajectories
  SensorSpec sensor;
};

/// World-frame background as one mesh.
TriangleMesh background_mesh(const SimSceneConfig& config);

/// Nearest hit of a world ray against the composed scene at absolute time `time`.
struct SimHit {
  double range = 0.0;
  int object_id = kBackgroundId;
};
std::optional<SimHit> cast_scene(const SimSceneConfig& config, const Vec3& origin, const Vec3& direction,
                                 double time, double max_range);

/// Rolling-shutter capture: firing `a` of sweep `s` happens at sweep fraction a / steps.
SimDataset simulate(const SimSceneConfig& config);

/// Keyframes of a body moving along a circular arc (straight line when yaw_rate is 0) at
/// constant speed, heading along its x axis.
BodyTrajectory arc_trajectory(const Vec3& start, double start_yaw, double speed, double yaw_rate,
                              std::span<const double> times);

/// Car-like body (lower box plus cabin) centred on its bounding box, x forward.
TriangleMesh make_car_mesh(const Vec3& extent = Vec3(4.5, 1.8, 1.5));

struct FastMoverOptions {
  int sweep_count = 20;
  double ego_speed = 5.0;                 // m/s
  double ego_yaw_rate = 0.5235987755982988;  // rad/s (30 deg/s)
  double actor_speed = 10.0;              // m/s
  /// The default actor starts a quarter circle behind the ego on the ego's own arc and
  /// closes in along it, so it is seen near mid-sweep with its front facing the sensor.
  double actor_yaw_rate = 1.0471975511965976;  // rad/s, keeps it on the ego's arc
  Vec3 actor_start = Vec3(-9.549296585513721, 9.549296585513721, 1.05);
  double actor_yaw = -1.5707963267948966;
  double range_noise_sigma = 0.0;
  std::uint64_t seed = 1;
};

/// Turning ego, one fast car, ground plane and a few static boxes.
SimSceneConfig make_fast_mover_scene(const FastMoverOptions& options = {});

struct AnnotationNoise {
  double translation_sigma = 0.0;  // meters, applied to x and y
  double vertical_sigma = 0.0;     // meters, applied to z
  double yaw_sigma = 0.0;          // radians
};

/// Seeded perturbation of box centres and yaw, after keeping every k-th entry where
/// k = round(source rate / subsample_hz). subsample_hz <= 0 keeps every entry.
std::vector<BoundingBoxTrack> perturb_annotations(std::span<const BoundingBoxTrack> tracks,
                                                  const AnnotationNoise& noise, double subsample_hz,
                                                  std::uint64_t seed);

/// Seeded independent per-keyframe perturbation of a trajectory (translation per axis,
/// rotation as a random axis-angle with per-axis sigma).
BodyTrajectory perturb_trajectory(const BodyTrajectory& trajectory, double translation_sigma,
                                  double rotation_sigma, std::uint64_t seed);

}  // namespace smore
