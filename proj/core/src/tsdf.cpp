#include "smore/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "smore/errors.hpp"
#include "smore/kdtree.hpp"
#include "smore/proximity.hpp"

namespace smore {
namespace {

// Kuhn subdivision of the unit cell; all tetrahedra share the 0-7 diagonal so
// neighbouring cells agree on face diagonals.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 3, 2, 7}, {0, 2, 6, 7}, {0, 6, 4, 7}, {0, 4, 5, 7}, {0, 5, 1, 7}};

struct LatticeEdge {
  std::int64_t a;
  std::int64_t b;
  bool operator==(const LatticeEdge&) const = default;
};

struct LatticeEdgeHash {
  std::size_t operator()(const LatticeEdge& e) const {
    const std::uint64_t h = static_cast<std::uint64_t>(e.a) * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(e.b);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

std::int64_t pack(const Eigen::Vector3i& g) {
  constexpr std::int64_t kBias = std::int64_t{1} << 20;
  return ((g.x() + kBias) << 42) | ((g.y() + kBias) << 21) | (g.z() + kBias);
}

class IsoSurfaceBuilder {
 public:
  std::uint32_t vertex(const Eigen::Vector3i& ga, const Eigen::Vector3i& gb, const Vec3& pa, const Vec3& pb, double va,
                       double vb) {
    std::int64_t ka = pack(ga);
    std::int64_t kb = pack(gb);
    if (kb < ka) std::swap(ka, kb);
    auto [it, inserted] = edges_.try_emplace(LatticeEdge{ka, kb}, 0u);
    if (inserted) {
      // Interpolate from the canonical (lower key) end so both sides produce one position.
      const bool a_first = pack(ga) == ka;
      const Vec3& p0 = a_first ? pa : pb;
      const Vec3& p1 = a_first ? pb : pa;
      const double v0 = a_first ? va : vb;
      const double v1 = a_first ? vb : va;
      const double s = v0 / (v0 - v1);
      mesh_.vertices.push_back(p0 + s * (p1 - p0));
      it->second = static_cast<std::uint32_t>(mesh_.vertices.size() - 1);
    }
    return it->second;
  }

  void triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& outward) {
    if (a == b || b == c || a == c) return;
    const Vec3 n = (mesh_.vertices[b] - mesh_.vertices[a]).cross(mesh_.vertices[c] - mesh_.vertices[a]);
    if (0.5 * n.norm() <= kDegenerateArea) return;
    if (n.dot(outward) < 0.0) std::swap(b, c);
    mesh_.triangles.push_back({a, b, c});
  }

  TriangleMesh take() { return std::move(mesh_); }

 private:
  std::unordered_map<LatticeEdge, std::uint32_t, LatticeEdgeHash> edges_;
  TriangleMesh mesh_;
};

// Marches cells whose lower corner lies in [lo, hi) (local indices).
bool march_cells(const SdfGrid& grid, const Eigen::Vector3i& lo, const Eigen::Vector3i& hi, IsoSurfaceBuilder& out) {
  bool any = false;
  double v[8];
  Vec3 p[8];
  Eigen::Vector3i g[8];
  for (int k = lo.z(); k < hi.z(); ++k) {
    for (int j = lo.y(); j < hi.y(); ++j) {
      for (int i = lo.x(); i < hi.x(); ++i) {
        bool observed = true;
        bool pos = false;
        bool neg = false;
        for (int c = 0; c < 8 && observed; ++c) {
          const int ci = i + (c & 1);
          const int cj = j + ((c >> 1) & 1);
          const int ck = k + ((c >> 2) & 1);
          const std::size_t idx = grid.linear(ci, cj, ck);
          if (grid.weights[idx] <= 0.0) {
            observed = false;
            break;
          }
          v[c] = grid.values[idx];
          (v[c] < 0.0 ? neg : pos) = true;
        }
        if (!observed || !pos || !neg) continue;
        any = true;
        for (int c = 0; c < 8; ++c) {
          const Eigen::Vector3i local(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          p[c] = grid.position(local.x(), local.y(), local.z());
          g[c] = local + grid.lattice;
        }
        for (const auto& tet : kTets) {
          int inside[4];
          int outside[4];
          int ni = 0;
          int no = 0;
          Vec3 pos_centroid = Vec3::Zero();
          Vec3 neg_centroid = Vec3::Zero();
          for (int q = 0; q < 4; ++q) {
            const int c = tet[q];
            if (v[c] < 0.0) {
              inside[ni++] = c;
              neg_centroid += p[c];
            } else {
              outside[no++] = c;
              pos_centroid += p[c];
            }
          }
          if (ni == 0 || no == 0) continue;
          const Vec3 outward = pos_centroid / no - neg_centroid / ni;
          auto vert = [&](int a, int b) { return out.vertex(g[a], g[b], p[a], p[b], v[a], v[b]); };
          if (ni == 1 || no == 1) {
            const int lone = ni == 1 ? inside[0] : outside[0];
            const int* others = ni == 1 ? outside : inside;
            out.triangle(vert(lone, others[0]), vert(lone, others[1]), vert(lone, others[2]), outward);
          } else {
            const std::uint32_t a = vert(inside[0], outside[0]);
            const std::uint32_t b = vert(inside[0], outside[1]);
            const std::uint32_t c = vert(inside[1], outside[1]);
            const std::uint32_t d = vert(inside[1], outside[0]);
            out.triangle(a, b, c, outward);
            out.triangle(a, c, d, outward);
          }
        }
      }
    }
  }
  return any;
}

OrientedPoints clamp_radii(OrientedPoints oriented, const TsdfParams& params) {
  const double lo = params.splat_min_voxels * params.voxel_size;
  const double hi = params.splat_max_voxels * params.voxel_size;
  for (double& r : oriented.radii) r = std::clamp(params.splat_scale * r, lo, hi);
  return oriented;
}

Aabb padded_bounds(std::span<const Vec3> points, double pad) {
  Aabb box;
  for (const Vec3& p : points) box.extend(p);
  box.min().array() -= pad;
  box.max().array() += pad;
  return box;
}

double influence(const TsdfParams& params) {
  return std::max(params.truncation, params.splat_max_voxels * params.voxel_size) + params.voxel_size;
}

}  // namespace

SdfGrid SdfGrid::covering(const Aabb& box, double voxel_size, double truncation) {
  if (!(voxel_size > 0.0)) throw Error("SdfGrid: voxel_size must be positive");
  const Eigen::Vector3i lo = (box.min() / voxel_size).array().floor().cast<int>();
  const Eigen::Vector3i hi = (box.max() / voxel_size).array().ceil().cast<int>();
  return from_lattice(lo, hi, voxel_size, truncation);
}

SdfGrid SdfGrid::from_lattice(const Eigen::Vector3i& lo, const Eigen::Vector3i& hi, double voxel_size,
                              double truncation) {
  SdfGrid g;
  g.voxel_size = voxel_size;
  g.truncation = truncation;
  g.lattice = lo;
  g.dims = (hi - lo).array() + 1;
  g.origin = voxel_size * lo.cast<double>();
  const std::size_t n = static_cast<std::size_t>(g.dims.x()) * g.dims.y() * g.dims.z();
  g.values.assign(n, 0.0);
  g.weights.assign(n, 0.0);
  return g;
}

namespace {

// Unit normal of the smallest-variance direction, or nullopt for a linear neighbourhood.
// `line` receives the dominant direction.
std::optional<Vec3> plane_normal(std::span<const Vec3> cloud, const std::vector<std::pair<std::size_t, double>>& nn,
                                 Vec3& line) {
  if (nn.size() < 3) return std::nullopt;
  Vec3 mean = Vec3::Zero();
  for (const auto& [idx, d2] : nn) mean += cloud[idx];
  mean /= static_cast<double>(nn.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& [idx, d2] : nn) {
    const Vec3 d = cloud[idx] - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Eigen::Vector3d lambda = eig.eigenvalues();
  if (!(lambda(2) > 0.0)) return std::nullopt;
  line = eig.eigenvectors().col(2);
  if (lambda(1) < 0.05 * lambda(2)) return std::nullopt;
  return Vec3(eig.eigenvectors().col(0));
}

PointSet cell_means(std::span<const Vec3> points, double cell) {
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, std::pair<Vec3, int>> cells;
  for (const Vec3& p : points) {
    const auto key = std::make_tuple(static_cast<std::int64_t>(std::floor(p.x() / cell)),
                                     static_cast<std::int64_t>(std::floor(p.y() / cell)),
                                     static_cast<std::int64_t>(std::floor(p.z() / cell)));
    auto& [sum, n] = cells[key];
    if (n == 0) sum = Vec3::Zero();
    sum += p;
    ++n;
  }
  PointSet out;
  out.reserve(cells.size());
  for (const auto& [key, acc] : cells) out.push_back(acc.first / acc.second);
  return out;
}

}  // namespace

OrientedPoints estimate_normals(std::span<const Vec3> points, std::span<const Vec3> origins, int neighbors,
                                double coarse_cell) {
  if (points.size() != origins.size()) throw Error("estimate_normals: points/origins size mismatch");
  OrientedPoints out;
  out.normals.resize(points.size(), Vec3::Zero());
  out.radii.resize(points.size(), 0.0);
  out.confidence.assign(points.size(), 1.0);
  if (points.empty()) return out;
  const PointKdTree tree(points);
  const auto k = static_cast<std::size_t>(std::max(neighbors, 1) + 1);
  PointSet coarse;
  std::unique_ptr<PointKdTree> coarse_tree;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 to_origin = origins[i] - points[i];
    const double ray_len = to_origin.norm();
    const Vec3 view = ray_len > 0.0 ? Vec3(to_origin / ray_len) : Vec3::UnitZ();
    const auto nn = tree.knn(points[i], k);
    out.radii[i] = std::sqrt(nn.back().second);
    Vec3 line = Vec3::Zero();
    std::optional<Vec3> normal = plane_normal(points, nn, line);
    if (!normal && coarse_cell > 0.0 && nn.size() >= 3) {
      if (!coarse_tree) {
        coarse = cell_means(points, coarse_cell);
        coarse_tree = std::make_unique<PointKdTree>(coarse);
      }
      Vec3 coarse_line = Vec3::Zero();
      normal = plane_normal(coarse, coarse_tree->knn(points[i], 3 * k), coarse_line);
    }
    if (!normal) {
      Vec3 n = view;
      if (line.squaredNorm() > 0.0) {
        n = view - view.dot(line) * line;
        n = n.norm() > 1e-6 ? Vec3(n.normalized()) : view;
      }
      normal = n;
      out.confidence[i] = 0.1;
    }
    if (normal->dot(view) < 0.0) *normal = -*normal;
    out.normals[i] = *normal;
  }
  return out;
}

namespace {

// Parameter interval of the segment a + s (b - a), s in [0, 1], inside `box`.
std::optional<std::pair<double, double>> clip_segment(const Vec3& a, const Vec3& b, const Aabb& box) {
  double s0 = 0.0;
  double s1 = 1.0;
  const Vec3 d = b - a;
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d(axis)) < 1e-15) {
      if (a(axis) < box.min()(axis) || a(axis) > box.max()(axis)) return std::nullopt;
      continue;
    }
    double lo = (box.min()(axis) - a(axis)) / d(axis);
    double hi = (box.max()(axis) - a(axis)) / d(axis);
    if (lo > hi) std::swap(lo, hi);
    s0 = std::max(s0, lo);
    s1 = std::min(s1, hi);
    if (s0 > s1) return std::nullopt;
  }
  return std::make_pair(s0, s1);
}

// End of the carved part of a ray: one truncation band short of the hit.
std::optional<Vec3> carve_end(const Vec3& origin, const Vec3& hit, double trunc) {
  const Vec3 ray = hit - origin;
  const double len = ray.norm();
  if (!(len > trunc)) return std::nullopt;
  return Vec3(hit - ray * (trunc / len));
}

void carve(SdfGrid& grid, const Vec3& origin, const Vec3& hit, const Vec3& normal, double weight) {
  const double voxel = grid.voxel_size;
  const double trunc = grid.truncation;
  const auto end = carve_end(origin, hit, trunc);
  if (!end) return;
  // Samples rounding onto the grid lie within half a voxel of its sample box.
  const Vec3 lo = grid.origin.array() - 0.5 * voxel;
  const Vec3 hi = grid.origin + voxel * (grid.dims.array() - 1).cast<double>().matrix() + Vec3::Constant(0.5 * voxel);
  const auto span = clip_segment(origin, *end, Aabb(lo, hi));
  if (!span) return;
  const Vec3 seg = *end - origin;
  const double len = seg.norm();
  // Samples sit at fixed arc lengths along the whole ray, so tiles see the same samples.
  const double step = 0.5 * voxel;
  const auto k0 = static_cast<std::int64_t>(std::ceil(span->first * len / step));
  const auto k1 = static_cast<std::int64_t>(std::floor(span->second * len / step));
  std::size_t last = static_cast<std::size_t>(-1);
  for (std::int64_t k = k0; k <= k1; ++k) {
    const Vec3 q = origin + seg * (static_cast<double>(k) * step / len);
    const Eigen::Vector3i v = (q / voxel).array().round().cast<int>().matrix() - grid.lattice;
    if ((v.array() < 0).any() || (v.array() >= grid.dims.array()).any()) continue;
    const std::size_t idx = grid.linear(v.x(), v.y(), v.z());
    if (idx == last) continue;
    last = idx;
    // Distance from the hit's tangent plane stays small for rays grazing a surface.
    const double sdf = std::clamp((grid.position(v.x(), v.y(), v.z()) - hit).dot(normal), 0.0, trunc);
    const double total = grid.weights[idx] + weight;
    grid.values[idx] = (grid.values[idx] * grid.weights[idx] + sdf * weight) / total;
    grid.weights[idx] = total;
  }
}

}  // namespace

void integrate(SdfGrid& grid, std::span<const Vec3> points, std::span<const Vec3> origins,
               const OrientedPoints& oriented, double free_weight) {
  const double voxel = grid.voxel_size;
  const double trunc = grid.truncation;
  if (free_weight > 0.0) {
    for (std::size_t n = 0; n < points.size(); ++n) {
      if (!((origins[n] - points[n]).norm() > 1e-12)) continue;
      carve(grid, origins[n], points[n], oriented.normals[n], free_weight);
    }
  }
  for (std::size_t n = 0; n < points.size(); ++n) {
    const Vec3& p = points[n];
    const Vec3 to_origin = origins[n] - p;
    const double ray_len = to_origin.norm();
    if (!(ray_len > 1e-12)) continue;
    const Vec3& normal = oriented.normals[n];
    const double radius = oriented.radii[n];
    const double confidence = oriented.confidence.empty() ? 1.0 : oriented.confidence[n];
    // Oblique hits constrain the surface less.
    const double incidence = std::max(0.1, std::abs(normal.dot(to_origin / ray_len)));
    const double reach = std::max(trunc, radius);
    const Eigen::Vector3i lo = ((p.array() - reach - grid.origin.array()) / voxel).floor().cast<int>().cwiseMax(0);
    const Eigen::Vector3i hi =
        ((p.array() + reach - grid.origin.array()) / voxel).ceil().cast<int>().cwiseMin(grid.dims.array() - 1);
    const double r2 = radius * radius;
    for (int k = lo.z(); k <= hi.z(); ++k) {
      for (int j = lo.y(); j <= hi.y(); ++j) {
        for (int i = lo.x(); i <= hi.x(); ++i) {
          const Vec3 rel = grid.position(i, j, k) - p;
          const double sdf = rel.dot(normal);
          if (std::abs(sdf) > trunc) continue;
          const double lateral2 = std::max(0.0, rel.squaredNorm() - sdf * sdf);
          if (lateral2 > r2) continue;
          const double w = confidence * incidence * (1.0 - 0.9 * lateral2 / r2);
          const std::size_t idx = grid.linear(i, j, k);
          const double total = grid.weights[idx] + w;
          grid.values[idx] = (grid.values[idx] * grid.weights[idx] + sdf * w) / total;
          grid.weights[idx] = total;
        }
      }
    }
  }
}

SdfGrid fuse_tsdf(std::span<const Vec3> points, std::span<const Vec3> origins, const TsdfParams& params) {
  if (points.size() != origins.size()) throw Error("fuse_tsdf: points/origins size mismatch");
  const OrientedPoints oriented = clamp_radii(estimate_normals(points, origins, params.normal_neighbors, params.normal_coarse_voxels * params.voxel_size), params);
  SdfGrid grid = SdfGrid::covering(padded_bounds(points, influence(params)), params.voxel_size, params.truncation);
  integrate(grid, points, origins, oriented, params.free_space_weight);
  return grid;
}

MeshExtraction extract_mesh(const SdfGrid& grid) {
  MeshExtraction out;
  if ((grid.dims.array() < 2).any()) return out;
  IsoSurfaceBuilder builder;
  out.has_surface = march_cells(grid, Eigen::Vector3i::Zero(), grid.dims.array() - 1, builder);
  out.mesh = builder.take();
  out.has_surface = out.has_surface && !out.mesh.empty();
  return out;
}

ReconstructionResult reconstruct_surface(std::span<const Vec3> points, std::span<const Vec3> origins,
                                         const TsdfParams& params) {
  if (points.size() != origins.size()) throw Error("reconstruct_surface: points/origins size mismatch");
  ReconstructionResult result;
  result.point_count = points.size();
  if (points.size() < params.min_points) {
    result.status = ReconstructionStatus::TooFewPoints;
    return result;
  }
  const OrientedPoints oriented = clamp_radii(estimate_normals(points, origins, params.normal_neighbors, params.normal_coarse_voxels * params.voxel_size), params);
  const double reach = influence(params);
  const Aabb box = padded_bounds(points, reach);
  const double voxel = params.voxel_size;
  const Eigen::Vector3i lo = (box.min() / voxel).array().floor().cast<int>();
  const Eigen::Vector3i hi = (box.max() / voxel).array().ceil().cast<int>();
  const Eigen::Vector3i dims = (hi - lo).array() + 1;

  // Tile over x/y; every tile spans the full z range of the lattice.
  const std::int64_t column = static_cast<std::int64_t>(dims.z());
  int tile = std::max(dims.x(), dims.y());
  while (tile > 8 && static_cast<std::int64_t>(tile + 1) * (tile + 1) * column > params.max_tile_voxels) tile /= 2;
  const int tiles_x = (dims.x() - 1 + tile - 1) / tile;
  const int tiles_y = (dims.y() - 1 + tile - 1) / tile;

  IsoSurfaceBuilder builder;
  bool any = false;
  std::vector<Vec3> tile_points;
  std::vector<Vec3> tile_origins;
  OrientedPoints tile_oriented;
  for (int ty = 0; ty < std::max(tiles_y, 1); ++ty) {
    for (int tx = 0; tx < std::max(tiles_x, 1); ++tx) {
      // Cells [c0, c1) need samples [c0, c1].
      const Eigen::Vector3i c0(lo.x() + tx * tile, lo.y() + ty * tile, lo.z());
      const Eigen::Vector3i c1(std::min(c0.x() + tile, hi.x()), std::min(c0.y() + tile, hi.y()), hi.z());
      if (c1.x() <= c0.x() || c1.y() <= c0.y()) continue;
      Aabb reach_box(voxel * c0.cast<double>(), voxel * c1.cast<double>());
      reach_box.min().array() -= reach;
      reach_box.max().array() += reach;

      tile_points.clear();
      tile_origins.clear();
      tile_oriented.normals.clear();
      tile_oriented.radii.clear();
      tile_oriented.confidence.clear();
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (!reach_box.contains(points[i])) {
          // Rays ending elsewhere may still carve free space through this tile.
          if (!(params.free_space_weight > 0.0)) continue;
          const auto end = carve_end(origins[i], points[i], params.truncation);
          if (!end || !clip_segment(origins[i], *end, reach_box)) continue;
        }
        tile_points.push_back(points[i]);
        tile_origins.push_back(origins[i]);
        tile_oriented.normals.push_back(oriented.normals[i]);
        tile_oriented.radii.push_back(oriented.radii[i]);
        tile_oriented.confidence.push_back(oriented.confidence[i]);
      }
      if (tile_points.empty()) continue;
      SdfGrid grid = SdfGrid::from_lattice(c0, c1, voxel, params.truncation);
      integrate(grid, tile_points, tile_origins, tile_oriented, params.free_space_weight);
      any = march_cells(grid, Eigen::Vector3i::Zero(), grid.dims.array() - 1, builder) || any;
      ++result.tiles;
    }
  }
  result.mesh = builder.take();
  if (!any || result.mesh.empty()) {
    result.status = ReconstructionStatus::NoSurface;
    return result;
  }
  const MeshProximityIndex index(result.mesh);
  result.nn_mean = nn_distance(index, points) / static_cast<double>(points.size());
  return result;
}

ReconstructionResult TsdfBackend::reconstruct(std::span<const Vec3> points, std::span<const Vec3> origins) const {
  return reconstruct_surface(points, origins, params_);
}

}  // namespace smore
