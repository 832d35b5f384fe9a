#include "smore/proximity.hpp"

#include <algorithm>
#include <numeric>

#include "smore/errors.hpp"

namespace smore {
namespace {

constexpr std::uint32_t kLeafSize = 4;

double squared_distance(const Aabb& box, const Vec3& p) {
  const Vec3 d = (box.min() - p).cwiseMax(p - box.max()).cwiseMax(0.0);
  return d.squaredNorm();
}

// Slab test; returns entry parameter or nullopt.
std::optional<double> ray_box(const Aabb& box, const Vec3& origin, const Vec3& inv_dir, double t_max) {
  double t0 = 0.0;
  double t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double near = (box.min()[a] - origin[a]) * inv_dir[a];
    double far = (box.max()[a] - origin[a]) * inv_dir[a];
    if (std::isnan(near) || std::isnan(far)) {
      // Direction component is zero and origin lies on a slab plane.
      if (origin[a] < box.min()[a] || origin[a] > box.max()[a]) return std::nullopt;
      continue;
    }
    if (near > far) std::swap(near, far);
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c, double t_min) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = ray.direction.cross(e2);
  const double det = e1.dot(pvec);
  const double scale = e1.norm() * e2.norm() * ray.direction.norm();
  if (std::abs(det) <= 1e-14 * scale) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = ray.origin - a;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = ray.direction.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qvec) * inv_det;
  if (t <= t_min) return std::nullopt;
  return t;
}

MeshProximityIndex::MeshProximityIndex(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  const auto n = static_cast<std::uint32_t>(mesh_.size());
  normals_.reserve(n);
  std::vector<Vec3> centroids;
  centroids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    normals_.push_back(mesh_.normal(i));
    const Triangle& f = mesh_.triangles[i];
    centroids.push_back((mesh_.vertices[f[0]] + mesh_.vertices[f[1]] + mesh_.vertices[f[2]]) / 3.0);
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0u);
  if (n > 0) {
    nodes_.reserve(2 * (n / kLeafSize + 1));
    build(0, n, centroids);
  }
}

std::uint32_t MeshProximityIndex::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids) {
  const auto node_id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb centroid_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    const Triangle& f = mesh_.triangles[order_[i]];
    for (auto v : f) box.extend(mesh_.vertices[v]);
    centroid_box.extend(centroids[order_[i]]);
  }
  nodes_[node_id].box = box;
  if (end - begin <= kLeafSize) {
    nodes_[node_id].first = begin;
    nodes_[node_id].count = end - begin;
    return node_id;
  }
  int axis = 0;
  centroid_box.sizes().maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t l, std::uint32_t r) {
                     if (centroids[l][axis] != centroids[r][axis]) return centroids[l][axis] < centroids[r][axis];
                     return l < r;
                   });
  build(begin, mid, centroids);
  const std::uint32_t right = build(mid, end, centroids);
  nodes_[node_id].first = right;
  nodes_[node_id].count = 0;
  return node_id;
}

std::optional<SurfacePoint> MeshProximityIndex::closest(const Vec3& query, double max_distance) const {
  if (nodes_.empty()) return std::nullopt;
  double best_sq = std::isfinite(max_distance) ? max_distance * max_distance : std::numeric_limits<double>::infinity();
  bool found = false;
  SurfacePoint best;

  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (squared_distance(node.box, query) > best_sq) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = order_[i];
        const Triangle& f = mesh_.triangles[tri];
        const Vec3 c = closest_point_on_triangle(query, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]);
        const double d2 = (c - query).squaredNorm();
        if (d2 < best_sq || (d2 == best_sq && found && tri < best.triangle) || (d2 == best_sq && !found)) {
          best_sq = d2;
          best.point = c;
          best.triangle = tri;
          found = true;
        }
      }
      continue;
    }
    const std::uint32_t left = static_cast<std::uint32_t>(&node - nodes_.data()) + 1;
    const std::uint32_t right = node.first;
    const double dl = squared_distance(nodes_[left].box, query);
    const double dr = squared_distance(nodes_[right].box, query);
    // Push the farther child first so the nearer one is explored first.
    if (dl <= dr) {
      if (dr <= best_sq) stack[top++] = right;
      if (dl <= best_sq) stack[top++] = left;
    } else {
      if (dl <= best_sq) stack[top++] = left;
      if (dr <= best_sq) stack[top++] = right;
    }
  }
  if (!found) return std::nullopt;
  best.distance = std::sqrt(best_sq);
  best.normal = normals_[best.triangle];
  return best;
}

std::optional<RayHit> MeshProximityIndex::intersect(const Ray& ray, double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv_dir = ray.direction.cwiseInverse();
  double best_t = t_max;
  std::optional<RayHit> best;

  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const std::uint32_t id = stack[--top];
    const Node& node = nodes_[id];
    const auto entry = ray_box(node.box, ray.origin, inv_dir, best_t);
    if (!entry) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = order_[i];
        const Triangle& f = mesh_.triangles[tri];
        const auto t = intersect_triangle(ray, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]);
        if (t && (*t < best_t || (*t == best_t && best && tri < best->triangle))) {
          best_t = *t;
          RayHit hit;
          hit.t = *t;
          hit.triangle = tri;
          best = hit;
        }
      }
      continue;
    }
    stack[top++] = node.first;
    stack[top++] = id + 1;
  }
  if (best) {
    best->point = ray.origin + best->t * ray.direction;
    best->distance = best->t * ray.direction.norm();
  }
  return best;
}

double nn_distance(const SurfaceQuery& surface, std::span<const Vec3> points) {
  double total = 0.0;
  for (const double d : nn_distances(surface, points)) total += d;
  return total;
}

std::vector<double> nn_distances(const SurfaceQuery& surface, std::span<const Vec3> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    const auto hit = surface.closest(p);
    if (!hit) throw GeometryError("nn_distance: empty mesh");
    out.push_back(hit->distance);
  }
  return out;
}

std::optional<RayHit> ray_mesh_intersect(std::span<const PosedIndex> meshes, const Ray& ray) {
  if (ray.direction.squaredNorm() == 0.0) throw GeometryError("ray_mesh_intersect: zero direction");
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    const PosedIndex& posed = meshes[i];
    if (posed.index == nullptr || posed.index->empty()) continue;
    const RigidTransform frame_to_mesh = posed.mesh_to_frame.inverse();
    const Ray local{frame_to_mesh.apply(ray.origin), frame_to_mesh.apply_direction(ray.direction)};
    const double t_max = best ? best->t : std::numeric_limits<double>::infinity();
    auto hit = posed.index->intersect(local, t_max);
    if (hit && (!best || hit->t < best->t)) {
      hit->point = ray.origin + hit->t * ray.direction;
      hit->surface = static_cast<int>(i);
      best = hit;
    }
  }
  return best;
}

}  // namespace smore
