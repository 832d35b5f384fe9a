#include "smore/mesh.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <string>

#include "smore/errors.hpp"

namespace smore {

Vec3 TriangleMesh::normal(std::size_t tri) const {
  const Triangle& f = triangles[tri];
  const Vec3 n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double TriangleMesh::area(std::size_t tri) const {
  const Triangle& f = triangles[tri];
  return 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
}

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const Triangle& f : triangles) {
    for (auto v : f) box.extend(vertices[v]);
  }
  return box;
}

TriangleMesh TriangleMesh::transformed(const RigidTransform& t) const {
  TriangleMesh out;
  out.triangles = triangles;
  out.vertices.reserve(vertices.size());
  for (const Vec3& v : vertices) out.vertices.push_back(t.apply(v));
  return out;
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto offset = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const Triangle& f : other.triangles) triangles.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
}

std::size_t TriangleMesh::remove_degenerate() {
  const std::size_t before = triangles.size();
  std::vector<Triangle> kept;
  kept.reserve(triangles.size());
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const Triangle& f = triangles[i];
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
    if (area(i) <= kDegenerateArea) continue;
    kept.push_back(f);
  }
  triangles = std::move(kept);
  return before - triangles.size();
}

void TriangleMesh::validate() const {
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    for (auto v : triangles[i]) {
      if (v >= vertices.size()) throw GeometryError("mesh: triangle " + std::to_string(i) + " index out of range");
    }
    if (area(i) <= kDegenerateArea) throw GeometryError("mesh: triangle " + std::to_string(i) + " is degenerate");
  }
}

TriangleMesh make_quad_mesh(const Vec3& corner, const Vec3& u, const Vec3& v) {
  TriangleMesh m;
  m.vertices = {corner, corner + u, corner + u + v, corner + v};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

TriangleMesh make_box_mesh(const Vec3& extent, const Vec3& center) {
  const Vec3 h = 0.5 * extent;
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(center.x() + ((i & 1) ? h.x() : -h.x()), center.y() + ((i & 2) ? h.y() : -h.y()),
                            center.z() + ((i & 4) ? h.z() : -h.z()));
  }
  // Outward winding per face.
  m.triangles = {
      {0, 2, 1}, {1, 2, 3},  // -z
      {4, 5, 6}, {5, 7, 6},  // +z
      {0, 1, 4}, {1, 5, 4},  // -y
      {2, 6, 3}, {3, 6, 7},  // +y
      {0, 4, 2}, {2, 4, 6},  // -x
      {1, 3, 5}, {3, 7, 5},  // +x
  };
  return m;
}

TriangleMesh make_sphere_mesh(double radius, int level, const Vec3& center) {
  TriangleMesh m;
  m.vertices = {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()};
  m.triangles = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoints;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const auto idx = static_cast<std::uint32_t>(m.vertices.size() - 1);
      midpoints.emplace(key, idx);
      return idx;
    };
    std::vector<Triangle> next;
    next.reserve(m.triangles.size() * 4);
    for (const Triangle& f : m.triangles) {
      const auto a = mid(f[0], f[1]);
      const auto b = mid(f[1], f[2]);
      const auto c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
  }
  for (Vec3& v : m.vertices) v = center + radius * v;
  return m;
}

PointSet sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) throw GeometryError("sample_surface: empty mesh");
  std::vector<double> cumulative(mesh.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    total += mesh.area(i);
    cumulative[i] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointSet out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double pick = unit(rng) * total;
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t tri = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), mesh.size() - 1);
    double a = unit(rng);
    double b = unit(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Triangle& f = mesh.triangles[tri];
    const Vec3& p0 = mesh.vertices[f[0]];
    out.push_back(p0 + a * (mesh.vertices[f[1]] - p0) + b * (mesh.vertices[f[2]] - p0));
  }
  return out;
}

}  // namespace smore
