#include "smore/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "smore/errors.hpp"
#include "smore/kdtree.hpp"
#include "smore/parallel.hpp"
#include "smore/registration.hpp"

namespace smore {
namespace {

// Directed means of nearest-neighbour distance (squared and unsquared) from a to b.
std::pair<double, double> directed(std::span<const Vec3> a, std::span<const Vec3> b) {
  const PointKdTree tree(b);
  std::vector<double> sq(a.size());
  parallel_for(a.size(), [&](std::size_t i) { sq[i] = tree.nearest(a[i]).second; });
  double sum_sq = 0.0;
  double sum = 0.0;
  for (double v : sq) {
    sum_sq += v;
    sum += std::sqrt(v);
  }
  const double n = static_cast<double>(a.size());
  return {sum_sq / n, sum / n};
}

void require_points(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error("chamfer: both point sets must be non-empty");
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  require_points(a, b);
  return 0.5 * (directed(a, b).first + directed(b, a).first);
}

double chamfer_distance_unsquared(std::span<const Vec3> a, std::span<const Vec3> b) {
  require_points(a, b);
  return 0.5 * (directed(a, b).second + directed(b, a).second);
}

DepthError median_depth_error(std::span<const RaySample> predicted, std::span<const RaySample> measured) {
  using Key = std::tuple<int, int, int>;
  std::map<Key, double> pred;
  for (const RaySample& r : predicted) pred[{r.sweep, r.beam, r.azimuth}] = r.range;
  DepthError out;
  std::vector<double> sq;
  std::vector<double> abs;
  std::set<Key> matched;
  for (const RaySample& r : measured) {
    const Key key{r.sweep, r.beam, r.azimuth};
    auto it = pred.find(key);
    if (it == pred.end()) {
      ++out.measured_only;
      continue;
    }
    if (!matched.insert(key).second) continue;
    const double d = it->second - r.range;
    sq.push_back(d * d);
    abs.push_back(std::abs(d));
  }
  out.matched = sq.size();
  out.predicted_only = pred.size() - out.matched;
  if (out.matched == 0) throw Error("median_depth_error: no ray is hit in both sets");
  out.median_sq = median_of(std::move(sq));
  out.median_abs = median_of(std::move(abs));
  return out;
}

int azimuth_index(double sweep_fraction, int steps_per_rev) {
  return static_cast<int>(std::lround(sweep_fraction * steps_per_rev));
}

std::vector<RaySample> sweep_rays(const Sweep& sweep, int steps_per_rev) {
  std::vector<RaySample> out;
  out.reserve(sweep.size());
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    out.push_back({sweep.sweep_index, sweep.beam_ids[i], azimuth_index(sweep.times[i], steps_per_rev),
                   sweep.points[i].norm()});
  }
  return out;
}

Vec3 fit_body_center(const BodyTrajectory& trajectory, std::span<const BoxAnnotation> boxes) {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (const BoxAnnotation& b : boxes) {
    if (!trajectory.covers(b.timestamp)) continue;
    sum += trajectory.pose_at(b.timestamp).inverse().apply(b.center);
    ++n;
  }
  if (n == 0) throw Error("fit_body_center: no box inside the trajectory coverage");
  return sum / static_cast<double>(n);
}

AteResult average_translation_error(const std::map<int, BodyTrajectory>& predicted,
                                    std::span<const BoundingBoxTrack> fit_tracks,
                                    std::span<const BoundingBoxTrack> ground_truth, const std::set<int>& excluded) {
  AteResult out;
  double total = 0.0;
  for (const BoundingBoxTrack& gt : ground_truth) {
    if (excluded.count(gt.object_id)) continue;
    auto pred = predicted.find(gt.object_id);
    if (pred == predicted.end() || pred->second.empty()) continue;
    auto fit = std::find_if(fit_tracks.begin(), fit_tracks.end(),
                            [&](const BoundingBoxTrack& t) { return t.object_id == gt.object_id; });
    if (fit == fit_tracks.end()) continue;
    Vec3 center;
    try {
      center = fit_body_center(pred->second, fit->entries);
    } catch (const Error&) {
      continue;
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const BoxAnnotation& b : gt.entries) {
      if (!pred->second.covers(b.timestamp)) continue;
      sum += (pred->second.pose_at(b.timestamp).apply(center) - b.center).norm();
      ++n;
    }
    if (n == 0) continue;
    out.per_object[gt.object_id] = sum / static_cast<double>(n);
    total += sum;
    out.samples += n;
  }
  if (out.samples == 0) throw Error("ate: no evaluable object");
  out.ate = total / static_cast<double>(out.samples);
  return out;
}

NnAccuracy summarize_distances(std::span<const double> distances) {
  NnAccuracy out;
  out.count = distances.size();
  if (distances.empty()) return out;
  std::size_t relaxed = 0;
  std::size_t strict = 0;
  double sum = 0.0;
  for (double d : distances) {
    sum += d;
    relaxed += d < kRelaxedThreshold ? 1 : 0;
    strict += d < kStrictThreshold ? 1 : 0;
  }
  const double n = static_cast<double>(distances.size());
  out.nn_mean = sum / n;
  out.acc_relaxed = static_cast<double>(relaxed) / n;
  out.acc_strict = static_cast<double>(strict) / n;
  return out;
}

NnAccuracy nn_accuracy(const SceneModel& scene, const SceneIndex& index, std::span<const Sweep> sweeps,
                       std::span<const std::vector<int>> labels, NnTarget target, std::optional<int> only_label) {
  if (labels.size() != sweeps.size()) throw Error("nn_accuracy: one label vector per sweep required");
  std::vector<std::vector<double>> per_sweep(sweeps.size());
  parallel_for(sweeps.size(), [&](std::size_t s) {
    const Sweep& sweep = sweeps[s];
    if (target == NnTarget::Assigned) {
      const auto dist = assigned_distances(scene, index, sweep, labels[s]);
      for (std::size_t i = 0; i < dist.size(); ++i) {
        if (only_label && labels[s][i] != *only_label) continue;
        if (dist[i]) per_sweep[s].push_back(*dist[i]);
      }
    } else {
      for (std::size_t i = 0; i < sweep.size(); ++i) {
        if (only_label && labels[s][i] != *only_label) continue;
        const double d = scene_distance(scene, index, sweep.points[i], sweep.absolute_time(i));
        if (std::isfinite(d)) per_sweep[s].push_back(d);
      }
    }
  });
  std::vector<double> all;
  for (auto& v : per_sweep) all.insert(all.end(), v.begin(), v.end());
  return summarize_distances(all);
}

HoldoutSplit holdout_split(std::size_t sweep_count, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("holdout_split: fraction must lie in (0, 1)");
  HoldoutSplit out;
  if (sweep_count == 0) return out;
  const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(1.0 / fraction)));
  const std::size_t count =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(sweep_count) * fraction)));
  std::size_t offset = static_cast<std::size_t>(seed % stride);
  if (offset >= sweep_count) offset = 0;
  std::vector<bool> test(sweep_count, false);
  for (std::size_t k = 0, i = offset; k < count && i < sweep_count; ++k, i += stride) test[i] = true;
  for (std::size_t i = 0; i < sweep_count; ++i) (test[i] ? out.test : out.train).push_back(i);
  return out;
}

SynthesizedSweep synthesize_sweep(const SceneModel& scene, const SceneIndex& index, const SensorSpec& sensor,
                                  int sweep_index, double start_time, const BodyTrajectory& ego) {
  sensor.validate();
  const std::size_t beams = sensor.beam_count();
  const int steps = sensor.azimuth_steps_per_rev;
  std::vector<std::optional<RayHit>> hits(static_cast<std::size_t>(steps) * beams);
  std::vector<int> hit_label(hits.size(), kBackgroundId);
  parallel_for(static_cast<std::size_t>(steps), [&](std::size_t a) {
    const double time = start_time + static_cast<double>(a) / steps * sensor.period_seconds;
    const RigidTransform pose = ego.pose_at(time);
    std::vector<PosedIndex> posed;
    std::vector<int> ids;
    if (const auto* bg = index.surface(kBackgroundId)) {
      posed.push_back({bg, RigidTransform::identity()});
      ids.push_back(kBackgroundId);
    }
    for (const auto& [id, obj] : scene.objects) {
      const auto* surface = index.surface(id);
      if (surface == nullptr || !obj.trajectory.covers(time)) continue;
      posed.push_back({surface, obj.trajectory.pose_at(time)});
      ids.push_back(id);
    }
    for (std::size_t b = 0; b < beams; ++b) {
      const Ray ray{pose.translation, pose.apply_direction(sensor.direction(b, static_cast<int>(a)))};
      auto hit = ray_mesh_intersect(posed, ray);
      if (!hit || hit->distance > sensor.max_range || hit->distance < sensor.min_range) continue;
      hits[a * beams + b] = hit;
      hit_label[a * beams + b] = ids[static_cast<std::size_t>(hit->surface)];
    }
  });

  SynthesizedSweep out;
  out.sweep.sweep_index = sweep_index;
  out.sweep.start_time = start_time;
  out.sweep.period = sensor.period_seconds;
  for (int a = 0; a < steps; ++a) {
    for (std::size_t b = 0; b < beams; ++b) {
      const std::size_t slot = static_cast<std::size_t>(a) * beams + b;
      if (!hits[slot]) continue;
      const double range = hits[slot]->distance;
      out.sweep.points.push_back(sensor.direction(b, a) * range);
      out.sweep.times.push_back(static_cast<double>(a) / steps);
      out.sweep.beam_ids.push_back(static_cast<std::uint16_t>(b));
      out.azimuths.push_back(a);
      out.labels.push_back(hit_label[slot]);
      out.rays.push_back({sweep_index, static_cast<int>(b), a, range});
    }
  }
  return out;
}

BodyTrajectory refine_test_pose(const SceneModel& scene, const SceneIndex& index, const Sweep& sweep,
                                const BodyTrajectory& ego, const IcpParams& params) {
  const auto* background = index.surface(kBackgroundId);
  const std::size_t k = ego.keyframe_index(sweep.end_time(), 1e-6);
  if (background == nullptr || k >= ego.size()) return ego;
  std::vector<BoxTrajectory> boxes;
  for (const auto& [id, obj] : scene.objects) boxes.push_back({id, obj.trajectory, obj.extent});
  const std::vector<int> labels = assign_points(sweep, ego, boxes, 0.0);
  SweepView view;
  view.start_time = sweep.start_time;
  view.period = sweep.period;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (labels[i] != kBackgroundId) continue;
    view.points.push_back(sweep.points[i]);
    view.times.push_back(sweep.times[i]);
  }
  if (view.points.size() < params.min_points) return ego;
  const KeyframeRegistration reg = register_ego_keyframe(*background, view, ego, params);
  if (reg.icp.status == RegistrationStatus::SkipObject || reg.icp.status == RegistrationStatus::DivergedRegistration) {
    return ego;
  }
  BodyTrajectory out = ego;
  out.set_keyframe(k, reg.keyframe_pose);
  const std::size_t first = ego.keyframe_index(sweep.start_time, 1e-6);
  if (first < ego.size()) out.set_keyframe(first, reg.correction * ego.keyframe(first));
  return out;
}

}  // namespace smore
