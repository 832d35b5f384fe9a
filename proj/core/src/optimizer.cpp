#include "smore/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Dense>

#include "smore/errors.hpp"
#include "smore/parallel.hpp"

namespace smore {
namespace {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

BoxAnnotation blend(const BoxAnnotation& a, const BoxAnnotation& b, double time) {
  const double s = (time - a.timestamp) / (b.timestamp - a.timestamp);
  BoxAnnotation out = a;
  out.timestamp = time;
  out.center = a.center + s * (b.center - a.center);
  out.yaw = wrap_angle(a.yaw + s * wrap_angle(b.yaw - a.yaw));
  return out;
}

struct View {
  std::size_t sweep = 0;
  PointSet points;
  std::vector<double> times;
};

struct Component {
  int id = kBackgroundId;
  BodyTrajectory trajectory;  // unused for the background
  Vec3 extent = Vec3::Ones();
  TriangleMesh mesh;
  std::unique_ptr<MeshProximityIndex> index;
  std::vector<View> views;
  int streak = 0;
  bool stopped = false;
  bool ever_usable = false;
};

class Driver {
 public:
  Driver(std::span<const Sweep> sweeps, const BodyTrajectory& ego, std::span<const BoxTrajectory> objects,
         const OptimizerConfig& config)
      : sweeps_(sweeps), ego_(ego), config_(config) {
    components_.emplace_back();
    for (const BoxTrajectory& box : objects) {
      if (box.object_id == kBackgroundId) throw Error("optimize_scene: object id 0 is reserved for the background");
      for (const Component& c : components_) {
        if (c.id == box.object_id) throw Error("optimize_scene: duplicate object id " + std::to_string(box.object_id));
      }
      Component c;
      c.id = box.object_id;
      c.trajectory = box.trajectory;
      c.extent = box.extent;
      components_.push_back(std::move(c));
    }
  }

  OptimizerResult run() {
    ConvergenceReport report;
    assign();
    mesh_step(nullptr);
    report.initial_objective = objective(nullptr);

    int iteration = 0;
    if (config_.refine) {
      for (iteration = 1; iteration <= config_.max_outer_iterations; ++iteration) {
        IterationReport it;
        it.iteration = iteration;
        it.components.resize(components_.size());
        for (std::size_t c = 0; c < components_.size(); ++c) it.components[c].id = components_[c].id;
        if (iteration > 1) {
          if (config_.reassign_points) assign();
          mesh_step(&it);
        }
        pose_step(it);
        it.objective = objective(&it);
        report.objective_trace.push_back(it.objective);
        for (std::size_t c = 0; c < components_.size(); ++c) it.components[c].stopped = components_[c].stopped;
        report.iterations.push_back(std::move(it));
        if (all_stopped()) break;
      }
      if (config_.reassign_points) assign();
      mesh_step(nullptr);
    }

    OptimizerResult result;
    report.final_objective = objective(nullptr, &report);
    report.all_stopped = all_stopped();
    for (const Component& c : components_) {
      if (c.id != kBackgroundId && !c.ever_usable) {
        report.unusable_objects.push_back(c.id);
        report.warnings.push_back("object " + std::to_string(c.id) + " has no view with enough points");
      }
    }
    for (const IterationReport& it : report.iterations) {
      for (const ComponentIterate& ci : it.components) {
        if (ci.mesh_step_violation) {
          std::ostringstream msg;
          msg << "iteration " << it.iteration << ": mesh step raised the term of component " << ci.id << " from "
              << ci.mesh_before << " to " << ci.mesh_after;
          report.warnings.push_back(msg.str());
        }
      }
    }
    bool any_mesh = false;
    for (const Component& c : components_) any_mesh = any_mesh || !c.mesh.empty();
    report.failed = !std::isfinite(report.final_objective) || !any_mesh;

    result.scene.ego = ego_;
    result.scene.background = components_[0].mesh;
    for (std::size_t c = 1; c < components_.size(); ++c) {
      SceneObject obj;
      obj.mesh = components_[c].mesh;
      obj.trajectory = components_[c].trajectory;
      obj.extent = components_[c].extent;
      result.scene.objects.emplace(components_[c].id, std::move(obj));
    }
    result.labels = labels_;
    result.report = std::move(report);
    return result;
  }

 private:
  bool all_stopped() const {
    for (const Component& c : components_) {
      if (c.id == kBackgroundId && !config_.refine_ego) continue;
      if (!c.stopped) return false;
    }
    return true;
  }

  bool covers_sweep(const Component& c, const Sweep& sweep) const {
    if (c.id == kBackgroundId) return true;
    return c.trajectory.covers(sweep.start_time) && c.trajectory.covers(sweep.end_time());
  }

  void assign() {
    std::vector<BoxTrajectory> boxes;
    for (std::size_t c = 1; c < components_.size(); ++c) {
      boxes.push_back({components_[c].id, components_[c].trajectory, components_[c].extent});
    }
    labels_.assign(sweeps_.size(), {});
    parallel_for(sweeps_.size(), [&](std::size_t s) {
      labels_[s] = assign_points(sweeps_[s], ego_, boxes, config_.box_margin);
    });

    std::map<int, std::size_t> slot;
    for (std::size_t c = 0; c < components_.size(); ++c) {
      slot[components_[c].id] = c;
      components_[c].views.clear();
    }
    for (std::size_t s = 0; s < sweeps_.size(); ++s) {
      std::vector<View> views(components_.size());
      for (std::size_t i = 0; i < sweeps_[s].size(); ++i) {
        View& v = views[slot.at(labels_[s][i])];
        v.points.push_back(sweeps_[s].points[i]);
        v.times.push_back(sweeps_[s].times[i]);
      }
      for (std::size_t c = 0; c < components_.size(); ++c) {
        if (views[c].points.size() < config_.min_points_per_view) continue;
        if (!covers_sweep(components_[c], sweeps_[s])) continue;
        views[c].sweep = s;
        components_[c].ever_usable = true;
        components_[c].views.push_back(std::move(views[c]));
      }
    }
  }

  CanonicalPoints canonicalize(const Component& c) const {
    CanonicalPoints all;
    for (const View& v : c.views) {
      const Sweep& sweep = sweeps_[v.sweep];
      CanonicalPoints part;
      if (c.id == kBackgroundId) {
        part = canonicalize_background_points(v.points, v.times, sweep.start_time, sweep.period, ego_);
      } else {
        CanonicalizeOptions options;
        options.actor_deskew = config_.actor_deskew;
        part = canonicalize_object_points(v.points, v.times, sweep.start_time, sweep.period, ego_, c.trajectory,
                                          options);
      }
      all.points.insert(all.points.end(), part.points.begin(), part.points.end());
      all.origins.insert(all.origins.end(), part.origins.begin(), part.origins.end());
    }
    return all;
  }

  void mesh_step(IterationReport* it) {
    parallel_for(components_.size(), [&](std::size_t c) {
      Component& comp = components_[c];
      if (comp.stopped || comp.views.empty()) return;
      const CanonicalPoints canon = canonicalize(comp);
      const TsdfParams& params = comp.id == kBackgroundId ? config_.background_recon : config_.object_recon;
      if (canon.points.size() < params.min_points) return;
      const double before = comp.index ? nn_distance(*comp.index, canon.points) : -1.0;
      ReconstructionResult recon = reconstruct_surface(canon.points, canon.origins, params);
      if (recon.status != ReconstructionStatus::Ok) return;
      comp.mesh = std::move(recon.mesh);
      comp.index = std::make_unique<MeshProximityIndex>(comp.mesh);
      if (it != nullptr) {
        ComponentIterate& ci = it->components[c];
        ci.mesh_before = before;
        ci.mesh_after = nn_distance(*comp.index, canon.points);
        ci.mesh_step_violation = before >= 0.0 && ci.mesh_after > before * (1.0 + config_.mesh_step_slack);
      }
    });
  }

  SweepView make_view(const View& v) const {
    const Sweep& sweep = sweeps_[v.sweep];
    SweepView out;
    out.start_time = sweep.start_time;
    out.period = sweep.period;
    const std::size_t n = v.points.size();
    const std::size_t stride =
        config_.icp_max_points == 0 ? 1 : std::max<std::size_t>(1, (n + config_.icp_max_points - 1) / config_.icp_max_points);
    for (std::size_t i = 0; i < n; i += stride) {
      out.points.push_back(v.points[i]);
      out.times.push_back(v.times[i]);
    }
    return out;
  }

  // Where one rigid sweep correction asks the trajectory to be at `time`.
  struct PoseTarget {
    double time = 0.0;
    RigidTransform pose;
  };

  // Every registered sweep pins the pose at its mean observation time. Keyframes follow from
  // a least-squares fit of per-keyframe updates (world-frame rotation about the body origin,
  // world translation) to those targets. N sweeps leave one direction of N + 1 keyframes
  // unobserved (keyframes alternating about the true path), so a penalty on the third
  // difference of the updated keyframes picks the smoothest solution; it also bridges
  // keyframes without a view.
  static std::vector<Eigen::Matrix<double, 6, 1>> keyframe_updates(const BodyTrajectory& traj,
                                                                  const std::vector<PoseTarget>& targets,
                                                                  double smoothness) {
    using Vec6 = Eigen::Matrix<double, 6, 1>;
    constexpr double kRidge = 1e-9;
    const std::size_t n = traj.size();
    Eigen::MatrixXd normal = Eigen::MatrixXd::Identity(n, n) * kRidge;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 6);
    for (const PoseTarget& target : targets) {
      const std::size_t k = traj.segment(target.time);
      const RigidTransform current = traj.pose_at(target.time);
      Vec6 y;
      y.head<3>() = log_rotation(target.pose.rotation * current.rotation.transpose());
      y.tail<3>() = target.pose.translation - current.translation;
      if (n == 1) {
        normal(0, 0) += 1.0;
        rhs.row(0) += y.transpose();
        continue;
      }
      const double s = std::clamp((target.time - traj.times()[k]) / (traj.times()[k + 1] - traj.times()[k]), 0.0, 1.0);
      const double a[2] = {1.0 - s, s};
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) normal(k + i, k + j) += a[i] * a[j];
        rhs.row(k + i) += a[i] * y.transpose();
      }
    }
    // Third differences vanish on constant-velocity and steady-turn motion.
    for (std::size_t k = 0; k + 3 < n; ++k) {
      Vec6 jerk = Vec6::Zero();
      Vec3 step[3];
      for (int i = 0; i < 3; ++i) {
        step[i] = log_rotation(traj.keyframe(k + i + 1).rotation * traj.keyframe(k + i).rotation.transpose());
      }
      jerk.head<3>() = step[2] - 2.0 * step[1] + step[0];
      jerk.tail<3>() = traj.keyframe(k + 3).translation - 3.0 * traj.keyframe(k + 2).translation +
                       3.0 * traj.keyframe(k + 1).translation - traj.keyframe(k).translation;
      const double c[4] = {-1.0, 3.0, -3.0, 1.0};
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) normal(k + i, k + j) += smoothness * c[i] * c[j];
        rhs.row(k + i) -= smoothness * c[i] * jerk.transpose();
      }
    }
    const Eigen::MatrixXd solved = normal.ldlt().solve(rhs);
    std::vector<Vec6> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = solved.row(k).transpose();
    return out;
  }

  static BodyTrajectory moved(const BodyTrajectory& traj, const std::vector<Eigen::Matrix<double, 6, 1>>& updates,
                              double scale) {
    BodyTrajectory out = traj;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const RigidTransform& pose = traj.keyframe(k);
      RigidTransform next;
      next.rotation = orthonormalize(exp_rotation(scale * updates[k].head<3>()) * pose.rotation);
      next.translation = pose.translation + scale * updates[k].tail<3>();
      out.set_keyframe(k, next);
    }
    return out;
  }

  // Applies the fitted updates with step halving on the component's objective term; the
  // trajectory is left unchanged if no step lowers it.
  void update_trajectory(Component& comp, BodyTrajectory& traj, const std::vector<PoseTarget>& targets) {
    if (targets.empty()) return;
    const auto updates = keyframe_updates(traj, targets, config_.trajectory_smoothness);
    const BodyTrajectory original = traj;
    const double before = component_cost(comp);
    double scale = 1.0;
    for (int h = 0; h < 4; ++h, scale *= 0.5) {
      traj = moved(original, updates, scale);
      if (component_cost(comp) <= before) return;
    }
    traj = original;
  }

  double component_cost(const Component& c) const {
    return nn_distance(*c.index, canonicalize(c).points);
  }

  static double mean_time(const SweepView& view) {
    double sum = 0.0;
    for (double t : view.times) sum += t;
    return view.times.empty() ? 1.0 : sum / static_cast<double>(view.times.size());
  }

  void pose_step(IterationReport& it) {
    Component& bg = components_[0];
    if (config_.refine_ego && !bg.stopped && bg.index && !bg.views.empty()) {
      std::vector<std::optional<KeyframeRegistration>> regs(bg.views.size());
      std::vector<std::optional<PoseTarget>> targets(bg.views.size());
      parallel_for(bg.views.size(), [&](std::size_t v) {
        const SweepView view = make_view(bg.views[v]);
        const KeyframeRegistration reg = register_ego_keyframe(*bg.index, view, ego_, config_.icp);
        if (reg.icp.status != RegistrationStatus::Converged && reg.icp.status != RegistrationStatus::MaxIterations) {
          return;
        }
        regs[v] = reg;
        const double time = view.start_time + mean_time(view) * view.period;
        targets[v] = PoseTarget{time, reg.correction * ego_.pose_at(time)};
      });
      finish_component(0, regs, it);
      std::vector<PoseTarget> kept;
      for (const auto& t : targets) {
        if (t) kept.push_back(*t);
      }
      update_trajectory(bg, ego_, kept);
    }

    parallel_for(components_.size() - 1, [&](std::size_t o) {
      const std::size_t c = o + 1;
      Component& comp = components_[c];
      if (comp.stopped || !comp.index || comp.views.empty()) return;
      std::vector<std::optional<KeyframeRegistration>> regs(comp.views.size());
      std::vector<PoseTarget> targets;
      for (std::size_t v = 0; v < comp.views.size(); ++v) {
        const SweepView view = make_view(comp.views[v]);
        const KeyframeRegistration reg =
            register_object_keyframe(*comp.index, view, ego_, comp.trajectory, config_.icp, config_.actor_deskew);
        if (reg.icp.status != RegistrationStatus::Converged && reg.icp.status != RegistrationStatus::MaxIterations) {
          continue;
        }
        regs[v] = reg;
        // Without actor deskew every point of the view uses the keyframe pose at the sweep end.
        const double time =
            config_.actor_deskew ? view.start_time + mean_time(view) * view.period : view.end_time();
        targets.push_back({time, comp.trajectory.pose_at(time) * reg.correction.inverse()});
      }
      finish_component(c, regs, it);
      update_trajectory(comp, comp.trajectory, targets);
    });
  }

  void finish_component(std::size_t c, const std::vector<std::optional<KeyframeRegistration>>& regs,
                        IterationReport& it) {
    Component& comp = components_[c];
    ComponentIterate& ci = it.components[c];
    double weighted = 0.0;
    for (std::size_t v = 0; v < regs.size(); ++v) {
      if (!regs[v]) continue;
      ++ci.views;
      ci.inliers += regs[v]->icp.inlier_count;
      weighted += regs[v]->icp.mean_residual * static_cast<double>(regs[v]->icp.inlier_count);
    }
    ci.residual = ci.inliers > 0 ? weighted / static_cast<double>(ci.inliers) : 0.0;
    if (ci.inliers > 0 && ci.residual < config_.early_stop_residual) {
      ++comp.streak;
    } else {
      comp.streak = 0;
    }
    if (comp.streak >= config_.early_stop_streak) comp.stopped = true;
  }

  double objective(IterationReport* it, ConvergenceReport* final_report = nullptr) const {
    std::vector<double> terms(components_.size(), 0.0);
    std::vector<std::size_t> counts(components_.size(), 0);
    parallel_for(components_.size(), [&](std::size_t c) {
      const Component& comp = components_[c];
      if (!comp.index || comp.views.empty()) return;
      const CanonicalPoints canon = canonicalize(comp);
      terms[c] = nn_distance(*comp.index, canon.points);
      counts[c] = canon.points.size();
    });
    double total = 0.0;
    for (std::size_t c = 0; c < components_.size(); ++c) {
      total += terms[c];
      if (it != nullptr) {
        it->components[c].objective = terms[c];
        it->components[c].points = counts[c];
      }
      if (final_report != nullptr) {
        final_report->final_terms[components_[c].id] = terms[c];
        final_report->final_points[components_[c].id] = counts[c];
      }
    }
    return total;
  }

  std::span<const Sweep> sweeps_;
  BodyTrajectory ego_;
  OptimizerConfig config_;
  std::vector<Component> components_;
  std::vector<std::vector<int>> labels_;
};

}  // namespace

void OptimizerConfig::validate() const {
  if (max_outer_iterations < 0) throw Error("OptimizerConfig: max_outer_iterations must be non-negative");
  if (!(early_stop_residual > 0.0)) throw Error("OptimizerConfig: early_stop_residual must be positive");
  if (early_stop_streak <= 0) throw Error("OptimizerConfig: early_stop_streak must be positive");
  if (min_points_per_view == 0) throw Error("OptimizerConfig: min_points_per_view must be positive");
  if (!(object_recon.voxel_size > 0.0) || !(background_recon.voxel_size > 0.0)) {
    throw Error("OptimizerConfig: voxel sizes must be positive");
  }
  if (box_margin < 0.0) throw Error("OptimizerConfig: box_margin must be non-negative");
  if (!(trajectory_smoothness >= 0.0)) throw Error("OptimizerConfig: trajectory_smoothness must be non-negative");
  icp.validate();
}

RigidTransform track_pose(const BoundingBoxTrack& track, double time) {
  const auto& e = track.entries;
  if (e.empty()) throw Error("track_pose: empty track " + std::to_string(track.object_id));
  if (e.size() == 1) return e.front().pose();
  std::size_t j = 0;
  if (time <= e.front().timestamp) {
    j = 0;
  } else if (time >= e.back().timestamp) {
    j = e.size() - 2;
  } else {
    j = static_cast<std::size_t>(std::upper_bound(e.begin(), e.end(), time,
                                                  [](double t, const BoxAnnotation& a) { return t < a.timestamp; }) -
                                 e.begin()) -
        1;
  }
  return blend(e[j], e[j + 1], time).pose();
}

std::vector<InterpolatedTrack> interpolate_tracks(std::span<const BoundingBoxTrack> tracks,
                                                  std::span<const double> keyframe_times, double period) {
  if (!(period > 0.0)) throw Error("interpolate_tracks: period must be positive");
  std::vector<InterpolatedTrack> out;
  for (const BoundingBoxTrack& track : tracks) {
    track.validate();
    if (track.entries.empty()) continue;
    InterpolatedTrack result;
    result.box.object_id = track.object_id;
    result.single_entry = track.entries.size() == 1;
    Vec3 extent = Vec3::Zero();
    for (const BoxAnnotation& a : track.entries) extent += a.extent;
    result.box.extent = extent / static_cast<double>(track.entries.size());

    const double lo = track.entries.front().timestamp - period - 1e-9;
    const double hi = track.entries.back().timestamp + period + 1e-9;
    std::vector<double> times;
    std::vector<RigidTransform> poses;
    for (double t : keyframe_times) {
      if (t < lo || t > hi) continue;
      times.push_back(t);
      poses.push_back(track_pose(track, t));
    }
    if (!times.empty()) result.box.trajectory = BodyTrajectory(std::move(times), std::move(poses));
    out.push_back(std::move(result));
  }
  return out;
}

OptimizerResult optimize_scene(std::span<const Sweep> sweeps, const BodyTrajectory& ego,
                               std::span<const BoxTrajectory> objects, const OptimizerConfig& config) {
  config.validate();
  if (ego.empty()) throw Error("optimize_scene: empty ego trajectory");
  for (const Sweep& s : sweeps) s.validate();
  Driver driver(sweeps, ego, objects, config);
  return driver.run();
}

}  // namespace smore
