// smore: simulate, reconstruct, evaluate and deskew LiDAR datasets.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "smore/errors.hpp"
#include "smore/io.hpp"
#include "smore/metrics.hpp"
#include "smore/optimizer.hpp"
#include "smore/parallel.hpp"
#include "smore/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitConvergence = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_dir(const std::string& path, const char* flag) {
  if (!fs::is_directory(path)) throw UsageError(std::string(flag) + ": no such directory: " + path);
}

std::vector<std::size_t> parse_indices(const std::string& text) {
  const json j = json::parse(text);
  std::vector<std::size_t> out;
  for (const json& v : j) out.push_back(v.get<std::size_t>());
  return out;
}

std::vector<std::size_t> manifest_holdout(const smore::Dataset& ds) {
  std::vector<std::size_t> out;
  for (int i : ds.holdout) {
    if (i >= 0 && static_cast<std::size_t>(i) < ds.sweeps.size()) out.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out;
};

int run_simulate(const SimulateArgs& args) {
  if (!fs::is_regular_file(args.config)) throw UsageError("--config: no such file: " + args.config);
  const smore::SimulationRequest req = smore::parse_simulation_request(smore::read_file(args.config), args.config);
  const smore::SimDataset sim = smore::simulate(req.scene);
  const smore::Dataset ds = smore::dataset_from_simulation(sim, req);
  smore::save_dataset(args.out, ds);
  smore::save_scene(fs::path(args.out) / "gt_scene", sim.scene);
  std::size_t points = 0;
  for (const auto& s : sim.sweeps) points += s.size();
  std::cout << "simulated " << sim.sweeps.size() << " sweeps, " << points << " points -> " << args.out << "\n";
  return kExitOk;
}

// --- reconstruct ------------------------------------------------------------

struct ReconstructArgs {
  std::string dataset;
  std::string out;
  int max_iters = 100;
  double huber_k = 0.2;
  double icp_threshold = 1.5;
  std::size_t min_points = 50;
  bool no_deskew_actors = false;
  bool no_refine = false;
  bool no_refine_ego = false;
  std::uint64_t seed = 0;
  bool deterministic = false;
  double holdout = 0.0;
  double object_voxel = 0.05;
  double background_voxel = 0.15;
  std::size_t icp_max_points = 0;
  double box_margin = smore::OptimizerConfig{}.box_margin;
};

int run_reconstruct(const ReconstructArgs& args) {
  require_dir(args.dataset, "--dataset");
  if (args.deterministic) smore::set_thread_count(1);
  const smore::Dataset ds = smore::load_dataset(args.dataset);

  std::vector<std::size_t> test;
  if (args.holdout > 0.0) {
    test = smore::holdout_split(ds.sweeps.size(), args.holdout, args.seed).test;
  } else {
    test = manifest_holdout(ds);
  }
  const std::set<std::size_t> held(test.begin(), test.end());
  std::vector<smore::Sweep> train;
  for (std::size_t i = 0; i < ds.sweeps.size(); ++i) {
    if (!held.count(i)) train.push_back(ds.sweeps[i]);
  }

  smore::OptimizerConfig config;
  config.max_outer_iterations = args.max_iters;
  config.icp.huber_k = args.huber_k;
  config.icp.match_threshold = args.icp_threshold;
  config.icp.min_points = args.min_points;
  config.min_points_per_view = args.min_points;
  config.actor_deskew = !args.no_deskew_actors;
  config.refine = !args.no_refine;
  config.refine_ego = !args.no_refine_ego;
  config.object_recon = smore::TsdfParams::with_voxel(args.object_voxel);
  config.background_recon = smore::TsdfParams::with_voxel(args.background_voxel);
  config.icp_max_points = args.icp_max_points;
  config.box_margin = args.box_margin;

  const auto tracks = smore::interpolate_tracks(ds.tracks, ds.ego.times(), ds.sensor.period_seconds);
  std::vector<smore::BoxTrajectory> boxes;
  std::vector<int> single;
  for (const auto& t : tracks) {
    if (t.box.trajectory.empty()) continue;
    boxes.push_back(t.box);
    if (t.single_entry) single.push_back(t.box.object_id);
  }
  smore::OptimizerResult result = smore::optimize_scene(train, ds.ego, boxes, config);
  result.report.single_entry_tracks = single;

  const fs::path out(args.out);
  smore::save_scene(out, result.scene);
  smore::write_file_atomic(out / "convergence.json", smore::convergence_report_json(result.report));
  smore::write_file_atomic(out / "holdout.json", json(test).dump() + "\n");
  std::cout << "objective " << result.report.initial_objective << " -> " << result.report.final_objective << " after "
            << result.report.iterations.size() << " iterations\n";
  for (const auto& w : result.report.warnings) std::cerr << "warning: " << w << "\n";
  if (result.report.failed) {
    std::cerr << "error: reconstruction failed (no surface or non-finite objective)\n";
    return kExitConvergence;
  }
  return kExitOk;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string dataset;
  std::string scene;
  double holdout = 0.0;
  std::uint64_t seed = 0;
  std::string metrics = "chamfer,depth,ate,nn";
  std::string out;
  std::string csv;
  bool no_test_pose = false;
};

int run_evaluate(const EvaluateArgs& args) {
  require_dir(args.dataset, "--dataset");
  require_dir(args.scene, "--scene");
  std::set<std::string> wanted;
  {
    std::stringstream ss(args.metrics);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (m != "chamfer" && m != "depth" && m != "ate" && m != "nn") throw UsageError("--metrics: unknown metric " + m);
      wanted.insert(m);
    }
  }
  const smore::Dataset ds = smore::load_dataset(args.dataset);
  const smore::SceneModel scene = smore::load_scene(args.scene);
  const smore::SceneIndex index(scene);

  std::vector<std::size_t> test;
  const fs::path holdout_file = fs::path(args.scene) / "holdout.json";
  if (args.holdout > 0.0) {
    test = smore::holdout_split(ds.sweeps.size(), args.holdout, args.seed).test;
  } else if (fs::exists(holdout_file)) {
    test = parse_indices(smore::read_file(holdout_file));
  }
  if (test.empty()) test = manifest_holdout(ds);
  const std::set<std::size_t> held(test.begin(), test.end());

  smore::EvalReport report;
  report.metrics = wanted;
  for (std::size_t t : test) report.test_sweeps.push_back(static_cast<int>(t));

  if (wanted.count("chamfer") || wanted.count("depth")) {
    if (test.empty()) throw UsageError("chamfer/depth need held-out sweeps (--holdout)");
    double chamfer_sq = 0.0;
    double chamfer = 0.0;
    std::vector<smore::RaySample> predicted;
    std::vector<smore::RaySample> measured;
    for (std::size_t t : test) {
      const smore::Sweep& sweep = ds.sweeps.at(t);
      smore::BodyTrajectory ego = scene.ego;
      if (!args.no_test_pose) ego = smore::refine_test_pose(scene, index, sweep, ego, smore::IcpParams{});
      const auto synth = smore::synthesize_sweep(scene, index, ds.sensor, sweep.sweep_index, sweep.start_time, ego);
      if (synth.sweep.points.empty()) throw smore::Error("evaluate: synthesized sweep " + std::to_string(t) + " is empty");
      chamfer_sq += smore::chamfer_distance(synth.sweep.points, sweep.points);
      chamfer += smore::chamfer_distance_unsquared(synth.sweep.points, sweep.points);
      predicted.insert(predicted.end(), synth.rays.begin(), synth.rays.end());
      const auto rays = smore::sweep_rays(sweep, ds.sensor.azimuth_steps_per_rev);
      measured.insert(measured.end(), rays.begin(), rays.end());
    }
    report.chamfer_sq = chamfer_sq / static_cast<double>(test.size());
    report.chamfer = chamfer / static_cast<double>(test.size());
    if (wanted.count("depth")) {
      const auto depth = smore::median_depth_error(predicted, measured);
      report.median_depth_sq = depth.median_sq;
      report.median_depth = depth.median_abs;
      report.matched_rays = depth.matched;
      report.predicted_only_rays = depth.predicted_only;
      report.measured_only_rays = depth.measured_only;
    }
  }

  std::vector<smore::Sweep> train;
  for (std::size_t i = 0; i < ds.sweeps.size(); ++i) {
    if (!held.count(i)) train.push_back(ds.sweeps[i]);
  }
  std::vector<smore::BoxTrajectory> boxes;
  for (const auto& [id, obj] : scene.objects) boxes.push_back({id, obj.trajectory, obj.extent});
  std::vector<std::vector<int>> labels;
  for (const auto& s : train) labels.push_back(smore::assign_points(s, scene.ego, boxes, 0.0));

  if (wanted.count("ate")) {
    if (!ds.ground_truth) throw smore::Error("evaluate: ate needs ground-truth tracks in the dataset");
    std::map<int, std::size_t> best_view;
    for (const auto& l : labels) {
      std::map<int, std::size_t> counts;
      for (int v : l) ++counts[v];
      for (const auto& [id, n] : counts) best_view[id] = std::max(best_view[id], n);
    }
    std::set<int> excluded;
    std::map<int, smore::BodyTrajectory> predicted;
    for (const auto& [id, obj] : scene.objects) {
      predicted[id] = obj.trajectory;
      if (best_view[id] < 50) excluded.insert(id);
    }
    const auto ate = smore::average_translation_error(predicted, ds.tracks, ds.ground_truth->tracks, excluded);
    report.ate = ate.ate;
    report.ate_samples = ate.samples;
  }
  if (wanted.count("nn")) {
    const auto acc = smore::nn_accuracy(scene, index, train, labels, smore::NnTarget::Nearest);
    report.nn_mean = acc.nn_mean;
    report.acc_relaxed = acc.acc_relaxed;
    report.acc_strict = acc.acc_strict;
    report.nn_points = acc.count;
  }

  smore::write_file_atomic(args.out, smore::eval_report_json(report));
  if (!args.csv.empty()) {
    smore::write_file_atomic(args.csv, smore::eval_report_csv_header() + smore::eval_report_csv_row(report));
  }
  std::cout << smore::eval_report_json(report);
  return kExitOk;
}

// --- deskew -----------------------------------------------------------------

struct DeskewArgs {
  std::string dataset;
  std::string out;
};

int run_deskew(const DeskewArgs& args) {
  require_dir(args.dataset, "--dataset");
  smore::Dataset ds = smore::load_dataset(args.dataset);
  for (smore::Sweep& s : ds.sweeps) s.points = smore::deskew_ego(s, ds.ego).points;
  smore::save_dataset(args.out, ds);
  std::cout << "deskewed " << ds.sweeps.size() << " sweeps into their end keyframes -> " << args.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional LiDAR surface reconstruction with continuous-time deskewing"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run the LiDAR simulator and write a dataset with ground truth");
  simulate->add_option("--config", sim.config, "Simulation config (JSON)")->required();
  simulate->add_option("--out", sim.out, "Output dataset directory")->required();

  ReconstructArgs rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "Alternate surface and pose steps; write the scene");
  reconstruct->add_option("--dataset", rec.dataset, "Dataset directory")->required();
  reconstruct->add_option("--out", rec.out, "Output scene directory")->required();
  reconstruct->add_option("--max-iters", rec.max_iters, "Outer iteration cap")->capture_default_str()->check(CLI::NonNegativeNumber);
  reconstruct->add_option("--huber-k", rec.huber_k, "Huber kernel width (m)")->capture_default_str()->check(CLI::PositiveNumber);
  reconstruct->add_option("--icp-threshold", rec.icp_threshold, "ICP matching threshold (m)")->capture_default_str()->check(CLI::PositiveNumber);
  reconstruct->add_option("--min-points", rec.min_points, "Minimum points per object view")->capture_default_str()->check(CLI::PositiveNumber);
  reconstruct->add_flag("--no-deskew-actors", rec.no_deskew_actors, "Use the keyframe object pose for every point");
  reconstruct->add_flag("--no-refine", rec.no_refine, "Skip pose steps (single mesh step)");
  reconstruct->add_flag("--no-refine-ego", rec.no_refine_ego, "Keep the input ego poses");
  reconstruct->add_option("--seed", rec.seed, "Seed for the held-out split")->capture_default_str();
  reconstruct->add_flag("--deterministic", rec.deterministic, "Single worker thread");
  reconstruct->add_option("--holdout", rec.holdout, "Withhold this fraction of sweeps")->check(CLI::Range(0.0, 1.0));
  reconstruct->add_option("--object-voxel", rec.object_voxel, "Object voxel size (m)")->capture_default_str()->check(CLI::PositiveNumber);
  reconstruct->add_option("--background-voxel", rec.background_voxel, "Background voxel size (m)")->capture_default_str()->check(CLI::PositiveNumber);
  reconstruct->add_option("--icp-max-points", rec.icp_max_points, "Stride views above this size for ICP (0: all)")->capture_default_str();
  reconstruct->add_option("--box-margin", rec.box_margin, "Box inflation for point assignment (m)")->capture_default_str()->check(CLI::NonNegativeNumber);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a reconstructed scene against a dataset");
  evaluate->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  evaluate->add_option("--scene", ev.scene, "Scene directory written by reconstruct")->required();
  evaluate->add_option("--holdout", ev.holdout, "Held-out fraction (default: the split used by reconstruct)")->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--seed", ev.seed, "Seed for --holdout")->capture_default_str();
  evaluate->add_option("--metrics", ev.metrics, "Comma-separated subset of chamfer,depth,ate,nn")->capture_default_str();
  evaluate->add_option("--out", ev.out, "Report JSON path")->required();
  evaluate->add_option("--csv", ev.csv, "Also write a one-row CSV");
  evaluate->add_flag("--no-test-pose", ev.no_test_pose, "Skip the pose step on held-out sweeps");

  DeskewArgs dk;
  auto* deskew = app.add_subcommand("deskew", "Write ego-deskewed sweeps");
  deskew->add_option("--dataset", dk.dataset, "Dataset directory")->required();
  deskew->add_option("--out", dk.out, "Output dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (reconstruct->parsed()) return run_reconstruct(rec);
    if (evaluate->parsed()) return run_evaluate(ev);
    if (deskew->parsed()) return run_deskew(dk);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const smore::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const smore::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
