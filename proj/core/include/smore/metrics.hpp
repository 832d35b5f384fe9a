#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "smore/registration.hpp"
#include "smore/scene.hpp"
#include "smore/simulator.hpp"
#include "smore/sweep.hpp"

namespace smore {

inline constexpr double kRelaxedThreshold = 0.10;  // meters
inline constexpr double kStrictThreshold = 0.05;   // meters

struct EvalReport {
  std::set<std::string> metrics;  // which of chamfer, depth, ate, nn were computed
  double chamfer_sq = 0.0;        // m^2
  double chamfer = 0.0;           // unsquared variant, m
  double median_depth_sq = 0.0;   // m^2
  double median_depth = 0.0;      // median |range difference|, m
  std::size_t matched_rays = 0;
  std::size_t predicted_only_rays = 0;
  std::size_t measured_only_rays = 0;
  double ate = 0.0;  // m
  std::size_t ate_samples = 0;
  double nn_mean = 0.0;  // m
  double acc_relaxed = 0.0;
  double acc_strict = 0.0;
  std::size_t nn_points = 0;
  std::vector<int> test_sweeps;
};

/// Half the sum of the two directed means of squared nearest-neighbour distances.
/// Throws smore::Error on an empty set.
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b);
/// Same with unsquared distances.
double chamfer_distance_unsquared(std::span<const Vec3> a, std::span<const Vec3> b);

/// One ray identified by (sweep, beam, azimuth); absent rays are misses.
struct RaySample {
  int sweep = 0;
  int beam = 0;
  int azimuth = 0;
  double range = 0.0;
};

struct DepthError {
  double median_sq = 0.0;
  double median_abs = 0.0;
  std::size_t matched = 0;
  std::size_t predicted_only = 0;
  std::size_t measured_only = 0;
};

/// Median squared range difference over rays hit in both sets. Throws smore::Error when no
/// ray is hit in both.
DepthError median_depth_error(std::span<const RaySample> predicted, std::span<const RaySample> measured);

/// Azimuth index of a point from its sweep fraction.
int azimuth_index(double sweep_fraction, int steps_per_rev);
/// Rays of a measured sweep (azimuth recovered from the point time).
std::vector<RaySample> sweep_rays(const Sweep& sweep, int steps_per_rev);

/// Body-frame point minimising the summed squared distance to the box centres carried by
/// `trajectory` (entries outside its coverage are ignored). Throws when none is covered.
Vec3 fit_body_center(const BodyTrajectory& trajectory, std::span<const BoxAnnotation> boxes);

struct AteResult {
  double ate = 0.0;
  std::size_t samples = 0;
  std::map<int, double> per_object;
};

/// Mean over (object, ground-truth timestamp) of the distance between the fitted centre
/// carried by the predicted trajectory and the ground-truth centre. The centre is fitted on
/// `fit_tracks` only. Objects in `excluded`, without a prediction, or without a fit track are
/// skipped; ground-truth timestamps outside the predicted coverage are skipped.
/// Throws smore::Error when nothing is evaluable.
AteResult average_translation_error(const std::map<int, BodyTrajectory>& predicted,
                                    std::span<const BoundingBoxTrack> fit_tracks,
                                    std::span<const BoundingBoxTrack> ground_truth,
                                    const std::set<int>& excluded = {});

struct NnAccuracy {
  double nn_mean = 0.0;
  double acc_relaxed = 0.0;
  double acc_strict = 0.0;
  std::size_t count = 0;
};

NnAccuracy summarize_distances(std::span<const double> distances);

enum class NnTarget {
  Nearest,  // nearest composed surface
  Assigned  // the surface of the point's own label
};

/// Distance of every point to the composed reconstruction at its own timestamp. With
/// NnTarget::Assigned, points whose label has no surface are skipped; `only_label` restricts
/// the evaluation to one label.
NnAccuracy nn_accuracy(const SceneModel& scene, const SceneIndex& index, std::span<const Sweep> sweeps,
                       std::span<const std::vector<int>> labels, NnTarget target = NnTarget::Nearest,
                       std::optional<int> only_label = std::nullopt);

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Every floor(1/fraction)-th sweep starting at seed mod stride; at least one test sweep.
HoldoutSplit holdout_split(std::size_t sweep_count, double fraction, std::uint64_t seed);

struct SynthesizedSweep {
  Sweep sweep;  // points in the ego frame at their firing time
  std::vector<int> azimuths;
  std::vector<int> labels;
  std::vector<RaySample> rays;
};

/// Cast every sensor ray of one sweep against the scene composed at its firing time, from
/// the ego position at that time.
SynthesizedSweep synthesize_sweep(const SceneModel& scene, const SceneIndex& index, const SensorSpec& sensor,
                                  int sweep_index, double start_time, const BodyTrajectory& ego);

/// One pose step for a held-out sweep: register its background points (by box assignment
/// with the scene's objects) against the frozen background and return the ego trajectory
/// with the sweep moved rigidly: both of its keyframes take the correction. Returns `ego` unchanged when registration is skipped.
BodyTrajectory refine_test_pose(const SceneModel& scene, const SceneIndex& index, const Sweep& sweep,
                                const BodyTrajectory& ego, const IcpParams& params);

}  // namespace smore
