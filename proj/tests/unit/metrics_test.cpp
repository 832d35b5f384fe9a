#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "scenes.hpp"
#include "smore/errors.hpp"
#include "smore/metrics.hpp"
#include "smore/simulator.hpp"

using namespace smore;

namespace {

PointSet cloud(std::size_t n, std::uint64_t seed, double half = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  PointSet p;
  for (std::size_t i = 0; i < n; ++i) p.emplace_back(u(rng), u(rng), u(rng));
  return p;
}

std::vector<std::vector<int>> int_labels(const SimDataset& sim) {
  std::vector<std::vector<int>> out;
  for (const auto& l : sim.labels) out.emplace_back(l.begin(), l.end());
  return out;
}

const SimDataset& moving_scene() {
  static const SimDataset sim = [] {
    scenes::CubeSceneOptions o;
    o.sweeps = 3;
    o.ego_speed = 4.0;
    o.ego_yaw_rate = 0.3;
    o.actor_speed = 8.0;
    o.actor_yaw_rate = 0.5;
    return simulate(scenes::cube_scene(o));
  }();
  return sim;
}

}  // namespace

TEST(Chamfer, IdentityAndSymmetry) {
  const PointSet a = cloud(200, 1);
  const PointSet b = cloud(150, 2);
  EXPECT_EQ(chamfer_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), chamfer_distance(b, a));
  EXPECT_THROW(chamfer_distance(a, PointSet{}), Error);
}

TEST(Chamfer, TwoSinglePoints) {
  const PointSet a{Vec3(0, 0, 0)};
  const PointSet b{Vec3(0, 2, 0)};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 4.0);
  EXPECT_DOUBLE_EQ(chamfer_distance_unsquared(a, b), 2.0);
}

TEST(Chamfer, MatchesBruteForceOracle) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const PointSet a = cloud(400, seed);
    const PointSet b = cloud(300, seed + 100, 2.5);
    EXPECT_NEAR(chamfer_distance(a, b), oracle::chamfer(a, b), 1e-12);
  }
}

TEST(MedianDepth, IdenticalAndShifted) {
  std::vector<RaySample> gt;
  for (int a = 0; a < 9; ++a) gt.push_back({0, a % 3, a, 5.0 + a});
  EXPECT_EQ(median_depth_error(gt, gt).median_sq, 0.0);
  std::vector<RaySample> shifted = gt;
  for (RaySample& r : shifted) r.range += 0.01;
  EXPECT_NEAR(median_depth_error(shifted, gt).median_sq, 1e-4, 1e-15);
}

TEST(MedianDepth, HandEnumeratedTenRays) {
  // azimuth: predicted, measured (-1 = miss)
  //  0: 10.0 10.0   1: 10.1 10.0   2: 5.0 5.3   3: 7.0 miss   4: miss 6.0
  //  5:  3.0  3.2   6:  8.0  8.0   7: miss miss  8: 2.0 2.5   9: 4.0 4.0
  // matched squared differences: 0, 0.01, 0.09, 0.04, 0, 0.25, 0 -> median 0.01
  const double pred[10] = {10.0, 10.1, 5.0, 7.0, -1, 3.0, 8.0, -1, 2.0, 4.0};
  const double meas[10] = {10.0, 10.0, 5.3, -1, 6.0, 3.2, 8.0, -1, 2.5, 4.0};
  std::vector<RaySample> p;
  std::vector<RaySample> m;
  for (int a = 0; a < 10; ++a) {
    if (pred[a] > 0) p.push_back({0, 0, a, pred[a]});
    if (meas[a] > 0) m.push_back({0, 0, a, meas[a]});
  }
  const DepthError e = median_depth_error(p, m);
  EXPECT_EQ(e.matched, 7u);
  EXPECT_EQ(e.predicted_only, 1u);
  EXPECT_EQ(e.measured_only, 1u);
  EXPECT_NEAR(e.median_sq, 0.01, 1e-12);
  EXPECT_NEAR(e.median_abs, 0.1, 1e-12);
}

TEST(MedianDepth, NoCommonRayThrows) {
  const std::vector<RaySample> p{{0, 0, 1, 2.0}};
  const std::vector<RaySample> m{{0, 0, 2, 2.0}};
  EXPECT_THROW(median_depth_error(p, m), Error);
}

TEST(SweepRays, AzimuthFromPointTime) {
  EXPECT_EQ(azimuth_index(0.5, 360), 180);
  EXPECT_EQ(azimuth_index(179.0 / 360.0, 360), 179);
  const SimDataset& sim = moving_scene();
  const auto rays = sweep_rays(sim.sweeps[0], sim.sensor.azimuth_steps_per_rev);
  ASSERT_EQ(rays.size(), sim.sweeps[0].size());
  for (std::size_t i = 0; i < rays.size(); i += 13) {
    EXPECT_EQ(rays[i].azimuth, sim.azimuths[0][i]);
    EXPECT_EQ(rays[i].beam, sim.sweeps[0].beam_ids[i]);
    EXPECT_NEAR(rays[i].range, sim.sweeps[0].points[i].norm(), 1e-12);
  }
}

TEST(Ate, BodyCentreMatchesStackedLeastSquares) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> times;
  std::vector<RigidTransform> poses;
  std::vector<BoxAnnotation> boxes;
  std::vector<Vec3> centers;
  for (int k = 0; k < 12; ++k) {
    times.push_back(0.1 * k);
    poses.push_back({oracle::rodrigues(Vec3(u(rng), u(rng), u(rng))), 10.0 * Vec3(u(rng), u(rng), u(rng))});
    BoxAnnotation b;
    b.timestamp = times.back();
    b.center = 10.0 * Vec3(u(rng), u(rng), u(rng));
    boxes.push_back(b);
    centers.push_back(b.center);
  }
  const BodyTrajectory tr(times, poses);
  const Vec3 got = fit_body_center(tr, boxes);
  const Vec3 want = oracle::body_center(poses, centers);
  EXPECT_LE((got - want).norm(), 1e-9);
}

TEST(Ate, PerfectAndOffsetPredictions) {
  const SimDataset& sim = moving_scene();
  std::map<int, BodyTrajectory> predicted{{1, sim.scene.objects.at(1).trajectory}};
  EXPECT_NEAR(average_translation_error(predicted, sim.tracks, sim.tracks).ate, 0.0, 1e-12);

  std::vector<BoundingBoxTrack> offset = sim.tracks;
  for (BoxAnnotation& e : offset[0].entries) e.center += Vec3(0.06, 0.08, 0.0);
  const AteResult r = average_translation_error(predicted, sim.tracks, offset);
  EXPECT_NEAR(r.ate, 0.1, 1e-12);
  EXPECT_EQ(r.samples, offset[0].entries.size());
}

TEST(Ate, CentreIsFittedOnTheFitTracksOnly) {
  // A body frame offset from the box centre is absorbed by the fit.
  const SimDataset& sim = moving_scene();
  const BodyTrajectory& truth = sim.scene.objects.at(1).trajectory;
  std::vector<RigidTransform> shifted;
  for (const RigidTransform& p : truth.poses()) shifted.push_back(p * RigidTransform::from_translation(Vec3(1, 2, 0)));
  std::map<int, BodyTrajectory> predicted{{1, BodyTrajectory(truth.times(), shifted)}};
  EXPECT_NEAR(average_translation_error(predicted, sim.tracks, sim.tracks).ate, 0.0, 1e-9);
}

TEST(Ate, NothingEvaluableThrows) {
  const SimDataset& sim = moving_scene();
  std::map<int, BodyTrajectory> predicted{{1, sim.scene.objects.at(1).trajectory}};
  EXPECT_THROW(average_translation_error(predicted, sim.tracks, sim.tracks, {1}), Error);
  EXPECT_THROW(average_translation_error({}, sim.tracks, sim.tracks), Error);
}

TEST(NnAccuracy, GroundTruthSceneIsPerfect) {
  const SimDataset& sim = moving_scene();
  const SceneIndex index(sim.scene);
  const auto labels = int_labels(sim);
  for (NnTarget target : {NnTarget::Nearest, NnTarget::Assigned}) {
    const NnAccuracy a = nn_accuracy(sim.scene, index, sim.sweeps, labels, target);
    EXPECT_LE(a.nn_mean, 1e-9);
    EXPECT_EQ(a.acc_relaxed, 1.0);
    EXPECT_EQ(a.acc_strict, 1.0);
  }
  const NnAccuracy actor = nn_accuracy(sim.scene, index, sim.sweeps, labels, NnTarget::Assigned, 1);
  EXPECT_GT(actor.count, 0u);
  EXPECT_LT(actor.count, sim.sweeps[0].size());
}

TEST(NnAccuracy, HalfDisplacedSevenCentimetres) {
  SceneModel scene;
  scene.background = make_quad_mesh(Vec3(-20, -20, 0), Vec3(40, 0, 0), Vec3(0, 40, 0));
  scene.ego = BodyTrajectory::constant(RigidTransform::identity(), 0.0, 0.1);
  Sweep sweep;
  for (int i = 0; i < 100; ++i) {
    sweep.points.emplace_back(0.1 * i - 5.0, 1.0, i % 2 == 0 ? 0.0 : 0.07);
    sweep.times.push_back(0.01 * i);
    sweep.beam_ids.push_back(0);
  }
  const SceneIndex index(scene);
  const std::vector<Sweep> sweeps{sweep};
  const std::vector<std::vector<int>> labels{std::vector<int>(100, 0)};
  const NnAccuracy a = nn_accuracy(scene, index, sweeps, labels);
  EXPECT_EQ(a.acc_relaxed, 1.0);
  EXPECT_EQ(a.acc_strict, 0.5);
  EXPECT_NEAR(a.nn_mean, 0.035, 1e-12);

  const std::vector<double> d{0.0, 0.07, 0.0, 0.07};
  const NnAccuracy s = summarize_distances(d);
  EXPECT_EQ(s.acc_relaxed, 1.0);
  EXPECT_EQ(s.acc_strict, 0.5);
}

TEST(HoldoutSplit, TenPercentOfAHundred) {
  const HoldoutSplit h = holdout_split(100, 0.1, 3);
  EXPECT_EQ(h.test.size(), 10u);
  EXPECT_EQ(h.train.size(), 90u);
  std::set<std::size_t> all(h.train.begin(), h.train.end());
  for (std::size_t t : h.test) EXPECT_TRUE(all.insert(t).second);
  EXPECT_EQ(all.size(), 100u);
  for (std::size_t k = 1; k < h.test.size(); ++k) EXPECT_EQ(h.test[k] - h.test[k - 1], 10u);
}

TEST(HoldoutSplit, AtLeastOneAndReproducible) {
  EXPECT_EQ(holdout_split(5, 0.05, 0).test.size(), 1u);
  const HoldoutSplit a = holdout_split(37, 0.2, 11);
  const HoldoutSplit b = holdout_split(37, 0.2, 11);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train, b.train);
  EXPECT_THROW(holdout_split(10, 1.0, 0), Error);
}

TEST(SynthesizeSweep, GroundTruthSceneReproducesMeasuredRays) {
  const SimDataset& sim = moving_scene();
  const SceneIndex index(sim.scene);
  const Sweep& measured = sim.sweeps[1];
  const SynthesizedSweep synth = synthesize_sweep(sim.scene, index, sim.sensor, 1, measured.start_time, sim.ego);
  const auto rays = sweep_rays(measured, sim.sensor.azimuth_steps_per_rev);
  const DepthError e = median_depth_error(synth.rays, rays);
  EXPECT_LE(e.median_sq, 1e-18);
  EXPECT_GE(static_cast<double>(e.matched), 0.999 * static_cast<double>(rays.size()));
  EXPECT_EQ(synth.sweep.size(), synth.rays.size());
}

TEST(RefineTestPose, MovesBothKeyframesBackOntoTheBackground) {
  const SimDataset& sim = moving_scene();
  const SceneIndex index(sim.scene);
  // Background returns only, so the box assignment under the shifted pose cannot leak actor
  // points into the registration.
  Sweep sw = sim.sweeps[1];
  sw.points.clear();
  sw.times.clear();
  sw.beam_ids.clear();
  for (std::size_t i = 0; i < sim.sweeps[1].size(); ++i) {
    if (sim.labels[1][i] != kBackgroundId) continue;
    sw.points.push_back(sim.sweeps[1].points[i]);
    sw.times.push_back(sim.sweeps[1].times[i]);
    sw.beam_ids.push_back(sim.sweeps[1].beam_ids[i]);
  }
  const RigidTransform shift{oracle::rodrigues(Vec3(0, 0, 0.01)), Vec3(0.1, -0.05, 0.02)};
  std::vector<RigidTransform> poses = sim.ego.poses();
  poses[1] = shift * poses[1];
  poses[2] = shift * poses[2];
  const BodyTrajectory noisy(sim.ego.times(), poses);
  const BodyTrajectory refined = refine_test_pose(sim.scene, index, sw, noisy, IcpParams{});
  EXPECT_LE(max_abs_difference(refined.keyframe(1), sim.ego.keyframe(1)), 1e-6);
  EXPECT_LE(max_abs_difference(refined.keyframe(2), sim.ego.keyframe(2)), 1e-6);
  EXPECT_EQ(max_abs_difference(refined.keyframe(0), noisy.keyframe(0)), 0.0);
}
