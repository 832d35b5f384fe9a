#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "smore/registration.hpp"
#include "smore/scene.hpp"
#include "smore/sweep.hpp"
#include "smore/tsdf.hpp"

namespace smore {

struct OptimizerConfig {
  int max_outer_iterations = 100;
  double early_stop_residual = 0.01;  // meters
  int early_stop_streak = 3;
  std::size_t min_points_per_view = 50;
  IcpParams icp;
  TsdfParams object_recon = TsdfParams::with_voxel(0.05);
  TsdfParams background_recon = TsdfParams::with_voxel(0.15);
  /// Per-point object motion inside a sweep; off reproduces the per-sweep rigid assumption.
  bool actor_deskew = true;
  /// Run pose steps. Off yields a single mesh step on the initial poses.
  bool refine = true;
  bool refine_ego = true;
  /// Re-run point assignment with the current trajectories every outer iteration.
  bool reassign_points = true;
  double box_margin = 0.25;  // meters
  /// Views larger than this are strided down for registration; 0 keeps every point.
  std::size_t icp_max_points = 0;
  /// Weight of the keyframe third-difference penalty when per-sweep registrations are turned
  /// into keyframe updates. Zero leaves the alternating keyframe mode unconstrained.
  double trajectory_smoothness = 1.0;
  /// Allowed relative increase of a component's term across its mesh step before a warning.
  double mesh_step_slack = 0.05;

  /// Throws smore::Error on non-positive counts or thresholds.
  void validate() const;
};

struct InterpolatedTrack {
  BoxTrajectory box;
  bool single_entry = false;  // only one annotation: static pose
};

/// Object keyframe poses at `keyframe_times`: linear centre and shortest-arc yaw between
/// neighbouring annotations, constant-velocity extrapolation up to `period` beyond the first
/// and last annotation. Keyframes further out are dropped. Extent is the mean of the entries.
std::vector<InterpolatedTrack> interpolate_tracks(std::span<const BoundingBoxTrack> tracks,
                                                  std::span<const double> keyframe_times, double period);

/// Pose of a track at `time` under the same rule (no extrapolation cap).
RigidTransform track_pose(const BoundingBoxTrack& track, double time);

struct ComponentIterate {
  int id = kBackgroundId;
  std::size_t views = 0;
  std::size_t points = 0;
  double residual = 0.0;        // inlier-weighted mean registration residual
  std::size_t inliers = 0;
  double objective = 0.0;       // term after the pose step
  double mesh_before = -1.0;    // term before the mesh step (-1: no previous mesh)
  double mesh_after = -1.0;     // term after the mesh step (-1: no mesh step ran)
  bool mesh_step_violation = false;
  bool stopped = false;
};

struct IterationReport {
  int iteration = 0;
  double objective = 0.0;
  std::vector<ComponentIterate> components;
};

struct ConvergenceReport {
  std::vector<IterationReport> iterations;
  /// Objective after the first mesh step on the initial poses.
  double initial_objective = 0.0;
  /// Objective after each outer iteration's pose step.
  std::vector<double> objective_trace;
  /// Objective of the returned scene.
  double final_objective = 0.0;
  std::map<int, double> final_terms;
  std::map<int, std::size_t> final_points;
  std::vector<int> unusable_objects;     // no view with enough points
  std::vector<int> single_entry_tracks;
  std::vector<std::string> warnings;
  bool all_stopped = false;
  bool failed = false;  // non-finite objective or nothing reconstructable
};

struct OptimizerResult {
  SceneModel scene;
  ConvergenceReport report;
  /// Point labels used for the returned scene.
  std::vector<std::vector<int>> labels;
};

/// Coordinate descent: mesh step per component from canonicalized points, then pose step
/// (ego keyframes against the background, then object keyframes), with per-component sticky
/// early stop. A final mesh step brings the surfaces up to date with the last poses.
OptimizerResult optimize_scene(std::span<const Sweep> sweeps, const BodyTrajectory& ego,
                               std::span<const BoxTrajectory> objects, const OptimizerConfig& config);

}  // namespace smore
