// Brute-force reference implementations used by the tests. None of these call into the
// library's geometry code; they are deliberately slow and written differently (edge
// projection instead of Voronoi regions, plane-then-barycentric instead of Moller-Trumbore,
// dense least squares instead of closed forms).
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "smore/mesh.hpp"
#include "smore/se3.hpp"

namespace oracle {

using smore::Vec3;

inline Vec3 closest_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + s * ab;
}

// Plane projection when it falls inside, else the best of the three clamped edges.
inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double n2 = n.squaredNorm();
  if (n2 > 0.0) {
    const Vec3 q = p - n * ((p - a).dot(n) / n2);
    // Barycentric coordinates by sub-triangle areas.
    const double u = (c - b).cross(q - b).dot(n) / n2;
    const double v = (a - c).cross(q - c).dot(n) / n2;
    const double w = 1.0 - u - v;
    if (u >= 0.0 && v >= 0.0 && w >= 0.0) return q;
  }
  Vec3 best = closest_on_segment(p, a, b);
  for (const Vec3& cand : {closest_on_segment(p, b, c), closest_on_segment(p, c, a)}) {
    if ((cand - p).squaredNorm() < (best - p).squaredNorm()) best = cand;
  }
  return best;
}

inline double point_mesh_distance(const smore::TriangleMesh& mesh, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles) {
    const Vec3 q = closest_on_triangle(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    best = std::min(best, (q - p).norm());
  }
  return best;
}

inline double nn_distance(const smore::TriangleMesh& mesh, std::span<const Vec3> points) {
  double sum = 0.0;
  for (const Vec3& p : points) sum += point_mesh_distance(mesh, p);
  return sum;
}

// Ray parameter of the plane crossing, accepted when the crossing is inside the triangle.
inline std::optional<double> ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                                          const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-14 * n.norm() * d.norm()) return std::nullopt;
  const double t = n.dot(a - o) / denom;
  if (!(t > 1e-12)) return std::nullopt;
  const Vec3 q = o + t * d;
  const double n2 = n.squaredNorm();
  const double u = (c - b).cross(q - b).dot(n) / n2;
  const double v = (a - c).cross(q - c).dot(n) / n2;
  const double w = 1.0 - u - v;
  const double eps = -1e-12;
  if (u < eps || v < eps || w < eps) return std::nullopt;
  return t;
}

// Nearest hit over every triangle of every posed mesh.
inline std::optional<Vec3> ray_meshes(const std::vector<std::pair<smore::TriangleMesh, smore::RigidTransform>>& meshes,
                                      const Vec3& o, const Vec3& d) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [mesh, pose] : meshes) {
    for (const auto& t : mesh.triangles) {
      const auto hit = ray_triangle(o, d, pose.apply(mesh.vertices[t[0]]), pose.apply(mesh.vertices[t[1]]),
                                    pose.apply(mesh.vertices[t[2]]));
      if (hit && *hit < best) best = *hit;
    }
  }
  if (!std::isfinite(best)) return std::nullopt;
  return Vec3(o + best * d);
}

inline double min_sq(const Vec3& p, std::span<const Vec3> set) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& q : set) best = std::min(best, (p - q).squaredNorm());
  return best;
}

inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  double ab = 0.0;
  double ba = 0.0;
  for (const Vec3& p : a) ab += min_sq(p, b);
  for (const Vec3& p : b) ba += min_sq(p, a);
  return 0.5 * (ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size()));
}

// argmin_c sum_i |R_i c + t_i - y_i|^2 solved as one stacked dense least-squares system.
inline Vec3 body_center(const std::vector<smore::RigidTransform>& poses, const std::vector<Vec3>& centers) {
  Eigen::MatrixXd a(3 * poses.size(), 3);
  Eigen::VectorXd b(3 * poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    a.block<3, 3>(3 * i, 0) = poses[i].rotation;
    b.segment<3>(3 * i) = centers[i] - poses[i].translation;
  }
  return a.colPivHouseholderQr().solve(b);
}

// Rotation matrix from axis-angle via Rodrigues with an explicit skew matrix.
inline smore::Mat3 rodrigues(const Vec3& w) {
  const double angle = w.norm();
  if (angle == 0.0) return smore::Mat3::Identity();
  const Vec3 k = w / angle;
  smore::Mat3 kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return smore::Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * kx * kx;
}

}  // namespace oracle
