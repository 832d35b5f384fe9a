#include "smore/registration.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "smore/errors.hpp"

namespace smore {
namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Linearization {
  Mat6 hessian = Mat6::Zero();
  Vec6 gradient = Vec6::Zero();
  double objective = 0.0;
  double abs_residual_sum = 0.0;
  std::size_t matched = 0;
  Vec3 center = Vec3::Zero();
};

// Evaluates the truncated robust objective at `pose` and the IRLS normal equations
// around `center`.
Linearization linearize(const SurfaceQuery& surface, std::span<const Vec3> points, const RigidTransform& pose,
                        const IcpParams& params, const Vec3& center) {
  Linearization lin;
  lin.center = center;
  const double unmatched_cost = huber_cost(params.match_threshold, params.huber_k);
  for (const Vec3& x : points) {
    const Vec3 y = pose.apply(x);
    const auto hit = surface.closest(y, params.match_threshold);
    if (!hit) {
      lin.objective += unmatched_cost;
      continue;
    }
    const Vec3& n = hit->normal;
    const double r = n.dot(y - hit->point);
    const double ar = std::abs(r);
    const double w = ar <= params.huber_k ? 1.0 : params.huber_k / ar;
    Vec6 j;
    j.head<3>() = (y - center).cross(n);
    j.tail<3>() = n;
    lin.hessian.noalias() += w * j * j.transpose();
    lin.gradient.noalias() += w * r * j;
    lin.objective += huber_cost(r, params.huber_k);
    lin.abs_residual_sum += ar;
    ++lin.matched;
  }
  return lin;
}

// Left update about `center`: y -> center + R (y - center) + v.
RigidTransform apply_update(const RigidTransform& pose, const Vec6& delta, const Vec3& center) {
  const Mat3 r = exp_rotation(delta.head<3>());
  const RigidTransform step{r, center - r * center + delta.tail<3>()};
  RigidTransform out = step * pose;
  out.rotation = orthonormalize(out.rotation);
  return out;
}

Vec3 centroid(std::span<const Vec3> points, const RigidTransform& pose) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : points) c += pose.apply(p);
  return points.empty() ? c : Vec3(c / static_cast<double>(points.size()));
}

}  // namespace

void IcpParams::validate() const {
  if (!(huber_k > 0.0 && match_threshold > 0.0 && max_iterations > 0 && convergence_eps > 0.0 &&
        condition_limit > 0.0)) {
    throw Error("IcpParams: all parameters must be positive");
  }
}

double huber_cost(double r, double k) {
  const double a = std::abs(r);
  return a <= k ? 0.5 * r * r : k * (a - 0.5 * k);
}

double icp_objective(const SurfaceQuery& surface, std::span<const Vec3> points, const RigidTransform& pose,
                     const IcpParams& params) {
  return linearize(surface, points, pose, params, Vec3::Zero()).objective;
}

RegistrationResult icp_point_to_plane(const SurfaceQuery& surface, std::span<const Vec3> points,
                                      const RigidTransform& init, const IcpParams& params) {
  params.validate();
  RegistrationResult result;
  result.pose = init;
  if (points.size() < params.min_points) {
    result.status = RegistrationStatus::SkipObject;
    return result;
  }

  Vec3 center = centroid(points, result.pose);
  Linearization lin = linearize(surface, points, result.pose, params, center);
  if (lin.matched == 0) {
    result.status = RegistrationStatus::DivergedRegistration;
    return result;
  }

  auto record = [&](int it, const Linearization& l) {
    result.mean_residual = l.matched ? l.abs_residual_sum / static_cast<double>(l.matched) : 0.0;
    result.inlier_count = l.matched;
    result.trace.push_back({it, result.mean_residual, l.matched, l.objective});
  };
  record(0, lin);

  for (int it = 1; it <= params.max_iterations; ++it) {
    result.iterations = it;
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(lin.hessian);
    const Vec6 lambda = eig.eigenvalues();
    const double lmax = lambda(5);
    result.condition_number = lambda(0) > 0.0 ? lmax / lambda(0) : std::numeric_limits<double>::infinity();
    result.ambiguous = !(result.condition_number <= params.condition_limit);
    if (!(lmax > 0.0)) {
      result.status = RegistrationStatus::DivergedRegistration;
      return result;
    }
    // Minimum-norm Gauss-Newton step restricted to well-constrained directions.
    Vec6 delta = Vec6::Zero();
    const Vec6 g = eig.eigenvectors().transpose() * lin.gradient;
    for (int i = 0; i < 6; ++i) {
      if (lambda(i) > lmax / params.condition_limit) delta -= (g(i) / lambda(i)) * eig.eigenvectors().col(i);
    }

    bool accepted = false;
    Linearization next;
    RigidTransform candidate;
    double scale = 1.0;
    for (int h = 0; h <= params.max_step_halvings; ++h, scale *= 0.5) {
      candidate = apply_update(result.pose, scale * delta, center);
      next = linearize(surface, points, candidate, params, centroid(points, candidate));
      if (next.matched > 0 && next.objective <= lin.objective) {
        accepted = true;
        break;
      }
    }
    const double step = scale * delta.norm();
    if (!accepted) {
      result.converged = true;
      result.status = RegistrationStatus::Converged;
      return result;
    }
    result.pose = candidate;
    lin = next;
    center = lin.center;
    record(it, lin);
    if (step < params.convergence_eps) {
      result.converged = true;
      result.status = RegistrationStatus::Converged;
      return result;
    }
  }
  result.status = RegistrationStatus::MaxIterations;
  return result;
}

KeyframeRegistration register_object_keyframe(const SurfaceQuery& object_mesh, const SweepView& view,
                                              const BodyTrajectory& ego, const BodyTrajectory& object,
                                              const IcpParams& params, bool actor_deskew) {
  CanonicalizeOptions options;
  options.actor_deskew = actor_deskew;
  const CanonicalPoints canonical =
      canonicalize_object_points(view.points, view.times, view.start_time, view.period, ego, object, options);
  KeyframeRegistration out;
  out.icp = icp_point_to_plane(object_mesh, canonical.points, RigidTransform::identity(), params);
  out.correction = out.icp.pose;
  out.keyframe_pose = object.pose_at(view.end_time()) * out.correction.inverse();
  return out;
}

KeyframeRegistration register_ego_keyframe(const SurfaceQuery& background, const SweepView& view,
                                           const BodyTrajectory& ego, const IcpParams& params) {
  Sweep sweep;
  sweep.points = view.points;
  sweep.times = view.times;
  sweep.beam_ids.assign(view.points.size(), 0);
  sweep.start_time = view.start_time;
  sweep.period = view.period;
  const DeskewedSweep deskewed = deskew_ego(sweep, ego);
  const RigidTransform keyframe = ego.pose_at(view.end_time());

  KeyframeRegistration out;
  out.icp = icp_point_to_plane(background, deskewed.points, keyframe, params);
  out.keyframe_pose = out.icp.pose;
  out.correction = out.icp.pose * keyframe.inverse();
  return out;
}

}  // namespace smore
