#include <gtest/gtest.h>

#include <numbers>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "scenes.hpp"
#include "smore/errors.hpp"
#include "smore/simulator.hpp"
#include "smore/sweep.hpp"

using namespace smore;

namespace {

Sweep manual_sweep(const PointSet& pts, const std::vector<double>& times) {
  Sweep s;
  s.points = pts;
  s.times = times;
  s.beam_ids.assign(pts.size(), 0);
  s.period = 0.1;
  return s;
}

BodyTrajectory translating_ego(const Vec3& per_sweep) {
  return BodyTrajectory({0.0, 0.1}, {RigidTransform::identity(), RigidTransform::from_translation(per_sweep)});
}

// Object points of every sweep from the simulator labels.
struct ObjectViews {
  std::vector<PointSet> points;
  std::vector<std::vector<double>> times;
};

ObjectViews object_views(const SimDataset& sim, int id) {
  ObjectViews v;
  for (std::size_t s = 0; s < sim.sweeps.size(); ++s) {
    PointSet p;
    std::vector<double> t;
    for (std::size_t i = 0; i < sim.sweeps[s].size(); ++i) {
      if (sim.labels[s][i] != id) continue;
      p.push_back(sim.sweeps[s].points[i]);
      t.push_back(sim.sweeps[s].times[i]);
    }
    v.points.push_back(std::move(p));
    v.times.push_back(std::move(t));
  }
  return v;
}

double max_distance_to(const TriangleMesh& mesh, const PointSet& pts) {
  double worst = 0.0;
  for (const Vec3& p : pts) worst = std::max(worst, oracle::point_mesh_distance(mesh, p));
  return worst;
}

}  // namespace

TEST(AssignPoints, NoBoxesMeansBackground) {
  const Sweep s = manual_sweep({Vec3(1, 2, 3), Vec3(-4, 0, 1)}, {0.1, 0.9});
  const auto labels = assign_points(s, BodyTrajectory::constant(RigidTransform::identity(), 0.0, 0.1), {});
  EXPECT_EQ(labels, (std::vector<int>{0, 0}));
}

TEST(AssignPoints, PointAtBoxCenter) {
  const Sweep s = manual_sweep({Vec3(5, 0, 0), Vec3(0, 5, 0)}, {0.5, 0.5});
  BoxTrajectory box{7, BodyTrajectory::constant(RigidTransform::from_yaw(0.4, Vec3(5, 0, 0)), 0.0, 0.1),
                    Vec3(1, 1, 1)};
  const auto labels =
      assign_points(s, BodyTrajectory::constant(RigidTransform::identity(), 0.0, 0.1), std::vector{box});
  EXPECT_EQ(labels, (std::vector<int>{7, 0}));
}

TEST(AssignPoints, UsesBoxPoseAtPointTime) {
  // Box moves 1 m along x during the sweep; a point at x=1 is inside only late in the sweep.
  BoxTrajectory box{1,
                    BodyTrajectory({0.0, 0.1}, {RigidTransform::identity(),
                                                RigidTransform::from_translation(Vec3(1, 0, 0))}),
                    Vec3(0.5, 0.5, 0.5)};
  const Sweep s = manual_sweep({Vec3(1, 0, 0), Vec3(1, 0, 0)}, {0.0, 1.0});
  const auto labels =
      assign_points(s, BodyTrajectory::constant(RigidTransform::identity(), 0.0, 0.1), std::vector{box});
  EXPECT_EQ(labels, (std::vector<int>{0, 1}));
}

TEST(AssignPoints, OverlapGoesToNearestCenter) {
  BoxTrajectory a{1, BodyTrajectory::constant(RigidTransform::from_translation(Vec3(0, 0, 0)), 0.0, 0.1),
                  Vec3(4, 4, 4)};
  BoxTrajectory b{2, BodyTrajectory::constant(RigidTransform::from_translation(Vec3(1, 0, 0)), 0.0, 0.1),
                  Vec3(4, 4, 4)};
  const Sweep s = manual_sweep({Vec3(0.2, 0, 0), Vec3(0.9, 0, 0)}, {0.5, 0.5});
  const auto labels =
      assign_points(s, BodyTrajectory::constant(RigidTransform::identity(), 0.0, 0.1), std::vector{a, b});
  EXPECT_EQ(labels, (std::vector<int>{1, 2}));
}

TEST(AssignPoints, MovingCubeMatchesSimulatorLabels) {
  scenes::CubeSceneOptions o;
  o.sweeps = 3;
  o.ego_speed = 4.0;
  o.ego_yaw_rate = 0.3;
  const SimDataset sim = simulate(scenes::cube_scene(o));
  const BoxTrajectory box{1, sim.scene.objects.at(1).trajectory, o.actor_extent};
  std::size_t agree = 0;
  std::size_t total = 0;
  for (std::size_t s = 0; s < sim.sweeps.size(); ++s) {
    const auto labels = assign_points(sim.sweeps[s], sim.ego, std::vector{box}, 0.05);
    ASSERT_EQ(labels.size(), sim.sweeps[s].size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      // A partition: one label per point, drawn from {background, box id}.
      ASSERT_TRUE(labels[i] == 0 || labels[i] == 1);
      agree += labels[i] == sim.labels[s][i];
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(agree) / total, 0.99);
}

TEST(DeskewEgo, StationaryIsIdentity) {
  const Sweep s = manual_sweep({Vec3(1, 2, 3), Vec3(-4, 0, 1), Vec3(0, 0, 9)}, {0.0, 0.5, 1.0});
  const auto d = deskew_ego(s, BodyTrajectory::constant(RigidTransform::from_yaw(0.3, Vec3(1, 1, 0)), 0.0, 0.1));
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LE((d.points[i] - s.points[i]).norm(), 1e-12);
}

TEST(DeskewEgo, TenMetrePerSweepShiftsFirstPoint) {
  const Sweep s = manual_sweep({Vec3(3, 1, 0), Vec3(3, 1, 0)}, {0.0, 1.0});
  const auto d = deskew_ego(s, translating_ego(Vec3(10, 0, 0)));
  EXPECT_LE((d.points[0] - Vec3(-7, 1, 0)).norm(), 1e-12);
  EXPECT_LE((d.points[1] - Vec3(3, 1, 0)).norm(), 1e-12);
  // Ray origins in e_1: the sensor was 10 m behind at t = 0.
  EXPECT_LE((d.origins[0] - Vec3(-10, 0, 0)).norm(), 1e-12);
  EXPECT_LE(d.origins[1].norm(), 1e-12);
}

TEST(DeskewEgo, MovingEgoFlattensStaticWall) {
  const SimDataset sim = simulate(scenes::wall_scene(10.0, 10.0));
  const auto d = deskew_ego(sim.sweeps[0], sim.ego);
  ASSERT_GT(d.points.size(), 100u);
  double raw_spread = 0.0;
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    // The ego ends the sweep 1 m closer: the wall sits at x = 9 in e_1.
    EXPECT_NEAR(d.points[i].x(), 9.0, 1e-6);
    raw_spread = std::max(raw_spread, std::abs(sim.sweeps[0].points[i].x() - 9.0));
  }
  EXPECT_GT(raw_spread, 0.9);
}

TEST(DeskewEgo, CoverageErrorOutsideTrajectory) {
  Sweep s = manual_sweep({Vec3(1, 0, 0)}, {0.5});
  s.start_time = 1.0;
  EXPECT_THROW(deskew_ego(s, translating_ego(Vec3(1, 0, 0))), CoverageError);
}

TEST(PointRayOrigin, StationaryAtOrigin) {
  const Sweep s = manual_sweep({Vec3(1, 2, 3), Vec3(4, 5, 6)}, {0.0, 0.7});
  const auto ego = BodyTrajectory::constant(RigidTransform::identity(), 0.0, 0.1);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(point_ray_origin(i, s, ego), Vec3::Zero());
}

TEST(PointRayOrigin, HalfwayThroughTranslation) {
  const Sweep s = manual_sweep({Vec3(1, 2, 3)}, {0.5});
  EXPECT_LE((point_ray_origin(0, s, translating_ego(Vec3(10, 0, 0))) - Vec3(5, 0, 0)).norm(), 1e-12);
}

TEST(PointRayOrigin, MatchesSimulatorEmission) {
  scenes::CubeSceneOptions o;
  o.sweeps = 2;
  o.ego_speed = 8.0;
  o.ego_yaw_rate = 0.5;
  const SimDataset sim = simulate(scenes::cube_scene(o));
  for (std::size_t s = 0; s < sim.sweeps.size(); ++s) {
    for (std::size_t i = 0; i < sim.sweeps[s].size(); i += 37) {
      EXPECT_LE((point_ray_origin(i, sim.sweeps[s], sim.ego) - sim.origins[s][i]).norm(), 1e-9);
    }
  }
}

TEST(Canonicalize, StaticIdentityIsNoOp) {
  const PointSet pts{Vec3(1, 2, 3), Vec3(-1, 0, 2)};
  const std::vector<double> times{0.2, 0.8};
  const auto id = BodyTrajectory::constant(RigidTransform::identity(), 0.0, 0.1);
  const auto c = canonicalize_object_points(pts, times, 0.0, 0.1, id, id);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LE((c.points[i] - pts[i]).norm(), 1e-15);
}

TEST(Canonicalize, TranslatingCubeCollapsesToOneSurface) {
  scenes::CubeSceneOptions o;
  o.sweeps = 10;
  o.actor_speed = 5.0;
  // Ahead and to the left, so it is swept early and moves a good part of a period afterwards.
  o.actor_start = Vec3(6.0, 4.0, 1.0);
  o.actor_yaw = -std::numbers::pi / 2;
  const SimDataset sim = simulate(scenes::cube_scene(o));
  const SceneObject& cube = sim.scene.objects.at(1);
  const ObjectViews views = object_views(sim, 1);

  double with = 0.0;
  double without = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < sim.sweeps.size(); ++s) {
    const auto& sw = sim.sweeps[s];
    const auto a = canonicalize_object_points(views.points[s], views.times[s], sw.start_time, sw.period, sim.ego,
                                              cube.trajectory);
    CanonicalizeOptions rigid;
    rigid.actor_deskew = false;
    const auto b = canonicalize_object_points(views.points[s], views.times[s], sw.start_time, sw.period, sim.ego,
                                              cube.trajectory, rigid);
    with = std::max(with, max_distance_to(cube.mesh, a.points));
    without = std::max(without, max_distance_to(cube.mesh, b.points));
    count += a.points.size();
  }
  ASSERT_GT(count, 500u);
  EXPECT_LE(with, 1e-6);
  EXPECT_GT(without, 5.0 * 0.1 / 2.0);
}

TEST(Canonicalize, MovingEgoAndTurningCarCollapse) {
  scenes::CubeSceneOptions o;
  o.sweeps = 6;
  o.ego_speed = 5.0;
  o.ego_yaw_rate = 0.5236;
  o.actor_speed = 10.0;
  o.actor_yaw_rate = 0.6;
  o.car = true;
  o.actor_extent = Vec3(4.5, 1.8, 1.5);
  o.actor_start = Vec3(4.0, -8.0, 0.75);
  const SimDataset sim = simulate(scenes::cube_scene(o));
  const SceneObject& car = sim.scene.objects.at(1);
  const ObjectViews views = object_views(sim, 1);
  std::size_t count = 0;
  for (std::size_t s = 0; s < sim.sweeps.size(); ++s) {
    const auto& sw = sim.sweeps[s];
    const auto a = canonicalize_object_points(views.points[s], views.times[s], sw.start_time, sw.period, sim.ego,
                                              car.trajectory);
    EXPECT_LE(max_distance_to(car.mesh, a.points), 1e-6);
    count += a.points.size();

    // Same result from points that were ego-deskewed first.
    const DeskewedSweep d = deskew_ego(sw, sim.ego);
    PointSet deskewed;
    for (std::size_t i = 0; i < sw.size(); ++i) {
      if (sim.labels[s][i] == 1) deskewed.push_back(d.points[i]);
    }
    CanonicalizeOptions pre;
    pre.already_ego_deskewed = true;
    const auto b =
        canonicalize_object_points(deskewed, views.times[s], sw.start_time, sw.period, sim.ego, car.trajectory, pre);
    for (std::size_t i = 0; i < b.points.size(); ++i) EXPECT_LE((b.points[i] - a.points[i]).norm(), 1e-9);
  }
  EXPECT_GT(count, 200u);
}

TEST(Canonicalize, BackgroundOriginsAreEmissionPositions) {
  scenes::CubeSceneOptions o;
  o.sweeps = 2;
  o.ego_speed = 6.0;
  o.ego_yaw_rate = 0.4;
  const SimDataset sim = simulate(scenes::cube_scene(o));
  const auto& sw = sim.sweeps[1];
  const auto c = canonicalize_background_points(sw.points, sw.times, sw.start_time, sw.period, sim.ego);
  for (std::size_t i = 0; i < sw.size(); i += 23) {
    EXPECT_LE((c.origins[i] - sim.origins[1][i]).norm(), 1e-9);
    // Noiseless: every background return lies on the world-frame background.
    if (sim.labels[1][i] == 0) {
      EXPECT_LE(oracle::point_mesh_distance(sim.scene.background, c.points[i]), 1e-9);
    }
  }
}

TEST(SweepValidate, RejectsBadInput) {
  Sweep s = manual_sweep({Vec3(1, 0, 0)}, {1.5});
  EXPECT_THROW(s.validate(), Error);
  s.times = {0.5};
  s.period = 0.0;
  EXPECT_THROW(s.validate(), Error);
  s.period = 0.1;
  EXPECT_NO_THROW(s.validate());
  s.beam_ids.clear();
  EXPECT_THROW(s.validate(), Error);
}
