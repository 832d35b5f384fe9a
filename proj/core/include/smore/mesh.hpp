#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Geometry>

#include "smore/se3.hpp"
#include "smore/types.hpp"

namespace smore {

using Triangle = std::array<std::uint32_t, 3>;
using Aabb = Eigen::AlignedBox3d;

inline constexpr double kDegenerateArea = 1e-12;

struct TriangleMesh {
  PointSet vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }
  std::size_t size() const { return triangles.size(); }

  Vec3 normal(std::size_t tri) const;  // unit normal, right-handed winding
  double area(std::size_t tri) const;
  Aabb bounds() const;

  TriangleMesh transformed(const RigidTransform& t) const;
  void append(const TriangleMesh& other);
  /// Drops triangles below kDegenerateArea (and unreferenced vertices are kept).
  std::size_t remove_degenerate();
  /// Out-of-range indices or degenerate triangles throw GeometryError.
  void validate() const;
};

/// Closed axis-aligned box with outward-facing triangles, centered at `center`.
TriangleMesh make_box_mesh(const Vec3& extent, const Vec3& center = Vec3::Zero());
/// Rectangle spanned by `corner`, `corner + u`, `corner + v`, `corner + u + v`.
TriangleMesh make_quad_mesh(const Vec3& corner, const Vec3& u, const Vec3& v);
/// Icosphere-style sphere (subdivided octahedron, `level` subdivisions).
TriangleMesh make_sphere_mesh(double radius, int level, const Vec3& center = Vec3::Zero());

/// Uniform area-weighted samples on the surface (deterministic for a given seed).
PointSet sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

}  // namespace smore
