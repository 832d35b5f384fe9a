#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "smore/mesh.hpp"
#include "smore/types.hpp"

namespace smore {

struct TsdfParams {
  double voxel_size = 0.05;
  double truncation = 0.2;
  /// Neighbours used for normal estimation and the local sampling radius.
  int normal_neighbors = 10;
  /// Cell size, in voxels, of the downsampled cloud used when a neighbourhood is a line.
  double normal_coarse_voxels = 3.0;
  /// Lateral splat radius = clamp(splat_scale * k-NN radius, min, max) in voxels.
  double splat_scale = 1.0;
  double splat_min_voxels = 1.5;
  double splat_max_voxels = 6.0;
  /// Weight of one free-space sample relative to a head-on surface hit.
  double free_space_weight = 0.5;
  /// Larger volumes are fused tile by tile on a shared lattice.
  std::int64_t max_tile_voxels = std::int64_t{1} << 22;
  /// Minimum input size; below it reconstruction reports TooFewPoints.
  std::size_t min_points = 50;

  /// Defaults with the truncation band at four voxels.
  static TsdfParams with_voxel(double voxel) {
    TsdfParams p;
    p.voxel_size = voxel;
    p.truncation = 4.0 * voxel;
    return p;
  }
};

/// Dense truncated signed distance volume on the global lattice `voxel_size * index`.
/// Sample (i, j, k) sits at origin + voxel_size * (i, j, k).
struct SdfGrid {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.05;
  double truncation = 0.2;
  Eigen::Vector3i dims = Eigen::Vector3i::Zero();
  Eigen::Vector3i lattice = Eigen::Vector3i::Zero();  // global index of sample (0, 0, 0)
  std::vector<double> values;
  std::vector<double> weights;

  /// Grid snapped to the global lattice and covering `box`.
  static SdfGrid covering(const Aabb& box, double voxel_size, double truncation);
  /// Grid holding lattice samples lo..hi inclusive.
  static SdfGrid from_lattice(const Eigen::Vector3i& lo, const Eigen::Vector3i& hi, double voxel_size,
                              double truncation);

  std::size_t voxel_count() const { return values.size(); }
  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims.y() + j) * dims.x() + i;
  }
  /// Computed from the global index so tiles sharing a lattice agree bit for bit.
  Vec3 position(int i, int j, int k) const {
    return voxel_size * Vec3(lattice.x() + i, lattice.y() + j, lattice.z() + k);
  }
  bool observed(int i, int j, int k) const { return weights[linear(i, j, k)] > 0.0; }
};

/// Per-point unit normals facing the sensor plus a local sampling radius.
struct OrientedPoints {
  PointSet normals;
  std::vector<double> radii;
  std::vector<double> confidence;  // fusion weight factor per point
};

/// PCA normals over k nearest neighbours; the sign is chosen so each normal faces its ray
/// origin. A linear neighbourhood (a single scan line) is retried on the cloud averaged
/// into cells of `coarse_cell` (when positive) with 3k neighbours. If that is still linear,
/// the normal is the reversed ray direction with its component along the line removed, at
/// confidence 0.1.
OrientedPoints estimate_normals(std::span<const Vec3> points, std::span<const Vec3> origins, int neighbors,
                                double coarse_cell = 0.0);

/// Accumulate a weighted running average of signed distances from each point's tangent
/// plane into every voxel within the truncation band and the point's lateral radius.
/// Positive values lie on the sensor side of the hit. Voxels traversed by the ray from its
/// origin up to one truncation short of the hit are carved as free space with weight
/// `free_weight`. Points coinciding with their ray origin are skipped.
void integrate(SdfGrid& grid, std::span<const Vec3> points, std::span<const Vec3> origins,
               const OrientedPoints& oriented, double free_weight = 0.5);

/// Single-volume fusion (no tiling).
SdfGrid fuse_tsdf(std::span<const Vec3> points, std::span<const Vec3> origins, const TsdfParams& params);

struct MeshExtraction {
  TriangleMesh mesh;
  bool has_surface = false;  // false when no observed sign change exists
};

/// Zero level set by marching tetrahedra (six tetrahedra per cell around the main
/// diagonal). Only cells whose eight samples are observed produce geometry. Triangles
/// face the positive side.
MeshExtraction extract_mesh(const SdfGrid& grid);

enum class ReconstructionStatus { Ok, TooFewPoints, NoSurface };

struct ReconstructionResult {
  TriangleMesh mesh;
  ReconstructionStatus status = ReconstructionStatus::Ok;
  std::size_t point_count = 0;
  double nn_mean = 0.0;  // mean point-to-mesh distance of the inputs
  std::size_t tiles = 0;
};

/// Pluggable mesh-step backend.
class SurfaceBackend {
 public:
  virtual ~SurfaceBackend() = default;
  virtual ReconstructionResult reconstruct(std::span<const Vec3> points, std::span<const Vec3> origins) const = 0;
};

class TsdfBackend : public SurfaceBackend {
 public:
  explicit TsdfBackend(TsdfParams params) : params_(params) {}
  ReconstructionResult reconstruct(std::span<const Vec3> points, std::span<const Vec3> origins) const override;
  const TsdfParams& params() const { return params_; }

 private:
  TsdfParams params_;
};

/// fuse_tsdf followed by extract_mesh, tiled when the volume exceeds max_tile_voxels.
ReconstructionResult reconstruct_surface(std::span<const Vec3> points, std::span<const Vec3> origins,
                                         const TsdfParams& params);

}  // namespace smore
