#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "scenes.hpp"
#include "smore/proximity.hpp"
#include "smore/simulator.hpp"
#include "smore/sweep.hpp"
#include "smore/tsdf.hpp"

using namespace smore;

namespace {

SdfGrid analytic_grid(double half, double voxel, double trunc, const std::function<double(const Vec3&)>& sdf) {
  SdfGrid g = SdfGrid::covering(Aabb(Vec3::Constant(-half), Vec3::Constant(half)), voxel, trunc);
  for (int k = 0; k < g.dims.z(); ++k) {
    for (int j = 0; j < g.dims.y(); ++j) {
      for (int i = 0; i < g.dims.x(); ++i) {
        const std::size_t idx = g.linear(i, j, k);
        g.values[idx] = std::clamp(sdf(g.position(i, j, k)), -trunc, trunc);
        g.weights[idx] = 1.0;
      }
    }
  }
  return g;
}

// Uniform samples on the unit cube, each seen from one of the eight corner viewpoints
// facing its face. Returns points and ray origins.
std::pair<PointSet, PointSet> cube_observations(std::size_t count, double noise, std::uint64_t seed) {
  const TriangleMesh cube = make_box_mesh(Vec3::Ones());
  const PointSet samples = sample_surface(cube, count, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, noise > 0.0 ? noise : 1.0);
  PointSet points;
  PointSet origins;
  std::size_t turn = 0;
  for (const Vec3& p : samples) {
    int axis = 0;
    p.cwiseAbs().maxCoeff(&axis);
    const double side = p(axis) > 0 ? 1.0 : -1.0;
    std::vector<Vec3> views;
    for (int c = 0; c < 8; ++c) {
      const Vec3 corner(c & 1 ? 2.5 : -2.5, c & 2 ? 2.5 : -2.5, c & 4 ? 2.5 : -2.5);
      if (side * corner(axis) > 0) views.push_back(corner);
    }
    const Vec3 origin = views[turn++ % views.size()];
    Vec3 q = p;
    if (noise > 0.0) q = p + n(rng) * (p - origin).normalized();
    points.push_back(q);
    origins.push_back(origin);
  }
  return {points, origins};
}

bool away_from_cube_edges(const Vec3& surface_point, double margin) {
  int axis = 0;
  surface_point.cwiseAbs().maxCoeff(&axis);
  for (int a = 0; a < 3; ++a) {
    if (a != axis && std::abs(surface_point(a)) > 0.5 - margin) return false;
  }
  return true;
}

// Two-sided Hausdorff distance to the unit cube over the parts away from its edges.
double cube_hausdorff(const TriangleMesh& mesh, double margin) {
  const TriangleMesh cube = make_box_mesh(Vec3::Ones());
  const MeshProximityIndex cube_index(cube);
  const MeshProximityIndex mesh_index(mesh);
  double worst = 0.0;
  for (const Vec3& v : mesh.vertices) {
    const auto c = cube_index.closest(v);
    if (away_from_cube_edges(c->point, margin)) worst = std::max(worst, c->distance);
  }
  for (const Vec3& s : sample_surface(cube, 4000, 99)) {
    if (away_from_cube_edges(s, margin)) worst = std::max(worst, mesh_index.closest(s)->distance);
  }
  return worst;
}

}  // namespace

TEST(FuseTsdf, SingleRayZeroCrossingAtHit) {
  const double voxel = 0.1;
  TsdfParams params = TsdfParams::with_voxel(voxel);
  params.min_points = 1;
  const PointSet pts{Vec3(2.03, 0, 0)};
  const PointSet origins{Vec3::Zero()};
  const SdfGrid g = fuse_tsdf(pts, origins, params);
  // Walk the lattice line y = z = 0 toward +x.
  const int j = static_cast<int>(std::lround(-g.origin.y() / voxel));
  const int k = static_cast<int>(std::lround(-g.origin.z() / voxel));
  std::optional<double> crossing;
  for (int i = 0; i + 1 < g.dims.x(); ++i) {
    if (!g.observed(i, j, k) || !g.observed(i + 1, j, k)) continue;
    const double a = g.values[g.linear(i, j, k)];
    const double b = g.values[g.linear(i + 1, j, k)];
    if (a > 0.0 && b <= 0.0) {
      const double x = g.position(i, j, k).x();
      crossing = x + voxel * a / (a - b);
      break;
    }
  }
  ASSERT_TRUE(crossing.has_value());
  EXPECT_NEAR(*crossing, 2.03, voxel / 2);
}

TEST(FuseTsdf, ValuesBoundedAndWeightsMarkObservation) {
  const auto [pts, origins] = cube_observations(3000, 0.0, 3);
  const TsdfParams params = TsdfParams::with_voxel(0.05);
  const SdfGrid g = fuse_tsdf(pts, origins, params);
  std::size_t observed = 0;
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    EXPECT_LE(std::abs(g.values[i]), g.truncation + 1e-12);
    EXPECT_GE(g.weights[i], 0.0);
    if (g.weights[i] == 0.0) {
      EXPECT_EQ(g.values[i], 0.0);
    } else {
      ++observed;
    }
  }
  EXPECT_GT(observed, 0u);
  EXPECT_LT(observed, g.voxel_count());
}

TEST(FuseTsdf, FreeSpaceIsCarvedAlongRays) {
  // A flat wall seen head-on: voxels on the sensor side, well before the band, are observed
  // as free space. A small patch off to the side stretches the grid toward the sensor.
  PointSet pts;
  PointSet origins;
  for (int a = -10; a <= 10; ++a) {
    for (int b = -10; b <= 10; ++b) {
      pts.emplace_back(5.0, 0.05 * a, 0.05 * b);
      origins.emplace_back(0.0, 0.0, 0.0);
    }
  }
  for (int a = 0; a < 3; ++a) {
    pts.emplace_back(2.0, 1.5 + 0.05 * a, 0.0);
    origins.emplace_back(0.0, 1.5, -1.0);
  }
  const SdfGrid g = fuse_tsdf(pts, origins, TsdfParams::with_voxel(0.05));
  const Eigen::Vector3i idx = ((Vec3(3.0, 0, 0) - g.origin) / g.voxel_size).array().round().cast<int>();
  ASSERT_TRUE((idx.array() >= 0).all() && (idx.array() < g.dims.array()).all());
  EXPECT_TRUE(g.observed(idx.x(), idx.y(), idx.z()));
  EXPECT_NEAR(g.values[g.linear(idx.x(), idx.y(), idx.z())], g.truncation, 1e-12);

  // Without carving that voxel stays unobserved.
  TsdfParams no_free = TsdfParams::with_voxel(0.05);
  no_free.free_space_weight = 0.0;
  const SdfGrid h = fuse_tsdf(pts, origins, no_free);
  EXPECT_FALSE(h.observed(idx.x(), idx.y(), idx.z()));
}

TEST(FuseTsdf, CarvingRemovesTransientSurface) {
  // A patch observed once, then many rays pass through where it was to a wall behind it.
  PointSet pts;
  PointSet origins;
  for (int a = -4; a <= 4; ++a) {
    for (int b = -4; b <= 4; ++b) {
      pts.emplace_back(3.0, 0.05 * a, 0.05 * b);
      origins.emplace_back(0.0, 0.0, 0.0);
    }
  }
  for (int rep = 0; rep < 4; ++rep) {
    // At twice the range the rays cover +-0.5 m at the patch, past the reach of its splats.
    for (int a = -40; a <= 40; ++a) {
      for (int b = -40; b <= 40; ++b) {
        pts.emplace_back(6.0, 0.025 * a, 0.025 * b);
        origins.emplace_back(0.0, 0.01 * rep, 0.0);
      }
    }
  }
  TsdfParams params = TsdfParams::with_voxel(0.05);
  const auto with_carving = reconstruct_surface(pts, origins, params);
  params.free_space_weight = 0.0;
  const auto without = reconstruct_surface(pts, origins, params);
  auto near_ghost = [](const TriangleMesh& m) {
    std::size_t n = 0;
    for (const Vec3& v : m.vertices) n += std::abs(v.x() - 3.0) < 0.3;
    return n;
  };
  EXPECT_GT(near_ghost(without.mesh), 0u);
  EXPECT_EQ(near_ghost(with_carving.mesh), 0u);
}

TEST(Integrate, ConflictingObservationsAverageByWeight) {
  // Two head-on hits 1 cm either side of x = 1 with fusion weights 1 and 0.5.
  SdfGrid g = SdfGrid::covering(Aabb(Vec3(0.8, -0.2, -0.2), Vec3(1.2, 0.2, 0.2)), 0.1, 0.4);
  const PointSet pts{Vec3(1.01, 0, 0), Vec3(0.99, 0, 0)};
  const PointSet origins{Vec3(-5, 0, 0), Vec3(-5, 0, 0)};
  OrientedPoints o;
  o.normals = {Vec3(-1, 0, 0), Vec3(-1, 0, 0)};
  o.radii = {0.5, 0.5};
  o.confidence = {1.0, 0.5};
  integrate(g, pts, origins, o, 0.0);
  const Eigen::Vector3i idx = ((Vec3(1, 0, 0) - g.origin) / g.voxel_size).array().round().cast<int>();
  const std::size_t v = g.linear(idx.x(), idx.y(), idx.z());
  // Hand computation: (0.01 * 1 + (-0.01) * 0.5) / 1.5
  EXPECT_NEAR(g.values[v], 0.005 / 1.5, 1e-15);
  EXPECT_NEAR(g.weights[v], 1.5, 1e-15);
}

TEST(Integrate, DegenerateRayIsSkipped) {
  SdfGrid g = SdfGrid::covering(Aabb(Vec3::Constant(-1), Vec3::Constant(1)), 0.1, 0.4);
  const PointSet pts{Vec3(0.2, 0.1, 0)};
  OrientedPoints o;
  o.normals = {Vec3::UnitX()};
  o.radii = {0.3};
  integrate(g, pts, pts, o);
  for (double w : g.weights) EXPECT_EQ(w, 0.0);
}

TEST(ExtractMesh, AnalyticSphere) {
  const double voxel = 0.02;
  const SdfGrid g = analytic_grid(1.2, voxel, 4 * voxel, [](const Vec3& p) { return p.norm() - 1.0; });
  const MeshExtraction m = extract_mesh(g);
  ASSERT_TRUE(m.has_surface);
  ASSERT_GT(m.mesh.size(), 1000u);
  for (const Vec3& v : m.mesh.vertices) EXPECT_NEAR(v.norm(), 1.0, voxel);
  m.mesh.validate();
  // Triangles face the positive (outside) side.
  std::size_t outward = 0;
  for (std::size_t t = 0; t < m.mesh.size(); ++t) {
    const auto& tri = m.mesh.triangles[t];
    const Vec3 c = (m.mesh.vertices[tri[0]] + m.mesh.vertices[tri[1]] + m.mesh.vertices[tri[2]]) / 3.0;
    outward += m.mesh.normal(t).dot(c) > 0.0;
  }
  EXPECT_EQ(outward, m.mesh.size());
}

TEST(ExtractMesh, AllPositiveGridIsEmpty) {
  const SdfGrid g = analytic_grid(0.5, 0.1, 0.4, [](const Vec3&) { return 0.3; });
  const MeshExtraction m = extract_mesh(g);
  EXPECT_FALSE(m.has_surface);
  EXPECT_TRUE(m.mesh.empty());
}

TEST(ExtractMesh, TiltedPlaneNormals) {
  const Vec3 n = Vec3(0.3, 0.2, 0.93).normalized();
  const SdfGrid g = analytic_grid(0.6, 0.02, 0.08, [&](const Vec3& p) { return n.dot(p) - 0.05; });
  const MeshExtraction m = extract_mesh(g);
  ASSERT_TRUE(m.has_surface);
  const double limit = std::cos(0.5 * std::numbers::pi / 180.0);
  for (std::size_t t = 0; t < m.mesh.size(); ++t) EXPECT_GE(m.mesh.normal(t).dot(n), limit);
}

TEST(ExtractMesh, UnobservedVoxelsProduceNoGeometry) {
  SdfGrid g = analytic_grid(1.2, 0.05, 0.2, [](const Vec3& p) { return p.norm() - 1.0; });
  for (int k = 0; k < g.dims.z(); ++k) {
    for (int j = 0; j < g.dims.y(); ++j) {
      for (int i = 0; i < g.dims.x(); ++i) {
        if (g.position(i, j, k).x() < 0.0) {
          g.weights[g.linear(i, j, k)] = 0.0;
          g.values[g.linear(i, j, k)] = 0.0;
        }
      }
    }
  }
  const MeshExtraction m = extract_mesh(g);
  ASSERT_TRUE(m.has_surface);
  for (const Vec3& v : m.mesh.vertices) EXPECT_GE(v.x(), -1e-12);
}

TEST(ReconstructSurface, CubeFromTenThousandRays) {
  const auto [pts, origins] = cube_observations(10000, 0.0, 5);
  const ReconstructionResult r = reconstruct_surface(pts, origins, TsdfParams::with_voxel(0.02));
  ASSERT_EQ(r.status, ReconstructionStatus::Ok);
  EXPECT_LE(cube_hausdorff(r.mesh, 0.1), 0.01);
}

TEST(ReconstructSurface, NoiselessSimulatorCube) {
  scenes::CubeSceneOptions o;
  o.sweeps = 8;
  o.actor_speed = 5.0;
  const SimDataset sim = simulate(scenes::cube_scene(o));
  const SceneObject& cube = sim.scene.objects.at(1);
  PointSet pts;
  PointSet origins;
  for (std::size_t s = 0; s < sim.sweeps.size(); ++s) {
    const auto& sw = sim.sweeps[s];
    PointSet p;
    std::vector<double> t;
    for (std::size_t i = 0; i < sw.size(); ++i) {
      if (sim.labels[s][i] != 1) continue;
      p.push_back(sw.points[i]);
      t.push_back(sw.times[i]);
    }
    const auto c = canonicalize_object_points(p, t, sw.start_time, sw.period, sim.ego, cube.trajectory);
    pts.insert(pts.end(), c.points.begin(), c.points.end());
    origins.insert(origins.end(), c.origins.begin(), c.origins.end());
  }
  const double voxel = 0.05;
  const ReconstructionResult r = reconstruct_surface(pts, origins, TsdfParams::with_voxel(voxel));
  ASSERT_EQ(r.status, ReconstructionStatus::Ok);
  EXPECT_LT(r.nn_mean, voxel);
}

TEST(ReconstructSurface, NoisyCubeWithinThreeCentimetres) {
  const auto [pts, origins] = cube_observations(10000, 0.02, 6);
  const ReconstructionResult r = reconstruct_surface(pts, origins, TsdfParams::with_voxel(0.05));
  ASSERT_EQ(r.status, ReconstructionStatus::Ok);
  // Mean distance of the clean cube surface to the reconstruction.
  const MeshProximityIndex index(r.mesh);
  const PointSet truth = sample_surface(make_box_mesh(Vec3::Ones()), 3000, 7);
  EXPECT_LT(nn_distance(index, truth) / truth.size(), 0.03);
  EXPECT_LT(r.nn_mean, 0.03);
}

TEST(ReconstructSurface, MinimalInputBoundary) {
  const auto [pts, origins] = cube_observations(50, 0.0, 8);
  const ReconstructionResult r = reconstruct_surface(pts, origins, TsdfParams::with_voxel(0.1));
  EXPECT_NE(r.status, ReconstructionStatus::TooFewPoints);
  const std::span<const Vec3> fewer(pts.data(), 49);
  const std::span<const Vec3> fewer_origins(origins.data(), 49);
  EXPECT_EQ(reconstruct_surface(fewer, fewer_origins, TsdfParams::with_voxel(0.1)).status,
            ReconstructionStatus::TooFewPoints);
}

TEST(ReconstructSurface, MoreConsistentViewsDoNotDegrade) {
  const auto [pts, origins] = cube_observations(12000, 0.0, 9);
  const TsdfParams params = TsdfParams::with_voxel(0.04);
  const std::size_t half = pts.size() / 2;
  const auto first = reconstruct_surface(std::span(pts.data(), half), std::span(origins.data(), half), params);
  const auto all = reconstruct_surface(pts, origins, params);
  EXPECT_LE(cube_hausdorff(all.mesh, 0.12), cube_hausdorff(first.mesh, 0.12) + params.voxel_size);
}

TEST(ReconstructSurface, TiledMatchesSingleVolume) {
  const auto [pts, origins] = cube_observations(4000, 0.0, 10);
  TsdfParams params = TsdfParams::with_voxel(0.05);
  const auto whole = reconstruct_surface(pts, origins, params);
  params.max_tile_voxels = 2000;
  const auto tiled = reconstruct_surface(pts, origins, params);
  EXPECT_GT(tiled.tiles, 1u);
  EXPECT_NEAR(tiled.nn_mean, whole.nn_mean, 1e-9);
}
