#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "smore/mesh.hpp"

namespace smore {

struct SurfacePoint {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();  // normal of the owning triangle
  double distance = 0.0;
  std::uint32_t triangle = 0;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();  // need not be unit length
};

struct RayHit {
  double t = 0.0;         // parameter along `direction`
  double distance = 0.0;  // metric distance from the origin
  Vec3 point = Vec3::Zero();
  std::uint32_t triangle = 0;
  int surface = -1;  // index into the posed-mesh list, when applicable
};

/// Nearest-surface oracle consumed by registration and metrics.
class SurfaceQuery {
 public:
  virtual ~SurfaceQuery() = default;
  /// Closest point on the surface no farther than `max_distance`.
  virtual std::optional<SurfacePoint> closest(const Vec3& query,
                                              double max_distance = std::numeric_limits<double>::infinity()) const = 0;
};

/// Exact closest point on triangle (a, b, c) by Voronoi-region classification.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Moller-Trumbore; returns the ray parameter of a hit with t > t_min.
std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c,
                                         double t_min = 1e-12);

/// Bounding-volume hierarchy over a triangle mesh. Owns a copy of the mesh; queries
/// are read-only and may run concurrently.
class MeshProximityIndex : public SurfaceQuery {
 public:
  MeshProximityIndex() = default;
  explicit MeshProximityIndex(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  bool empty() const { return mesh_.empty(); }

  std::optional<SurfacePoint> closest(const Vec3& query,
                                      double max_distance = std::numeric_limits<double>::infinity()) const override;
  std::optional<RayHit> intersect(const Ray& ray, double t_max = std::numeric_limits<double>::infinity()) const;

 private:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: first index into order_; inner: right child
    std::uint32_t count = 0;  // 0 for inner nodes
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids);

  TriangleMesh mesh_;
  std::vector<Vec3> normals_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// D(M, X): sum over points of the exact point-to-surface distance. Throws GeometryError
/// on an empty mesh.
double nn_distance(const SurfaceQuery& surface, std::span<const Vec3> points);
/// Per-point distances (same definition as nn_distance).
std::vector<double> nn_distances(const SurfaceQuery& surface, std::span<const Vec3> points);

/// A mesh placed into a common frame by `mesh_to_frame`.
struct PosedIndex {
  const MeshProximityIndex* index = nullptr;
  RigidTransform mesh_to_frame;
};

/// Closest positive-t intersection across all posed meshes; nullopt on a miss.
/// Throws GeometryError on a zero direction.
std::optional<RayHit> ray_mesh_intersect(std::span<const PosedIndex> meshes, const Ray& ray);

}  // namespace smore
