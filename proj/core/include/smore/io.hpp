#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smore/metrics.hpp"
#include "smore/optimizer.hpp"
#include "smore/scene.hpp"
#include "smore/simulator.hpp"
#include "smore/sweep.hpp"
#include "smore/tsdf.hpp"

namespace smore {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kSweepFormatVersion = 1;
inline constexpr std::size_t kSweepHeaderBytes = 20;
inline constexpr std::size_t kSweepRecordBytes = 20;

/// Write `bytes` to a sibling temporary file and rename it over `path`.
void write_file_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

/// Binary sweep: "SMSW", u32 version, u32 count, f64 period, then per point
/// f32 x, y, z, t, u16 beam, u16 pad (little-endian). start_time and sweep_index live in the
/// dataset manifest.
std::string encode_sweep(const Sweep& sweep);
Sweep decode_sweep(const std::string& bytes, const std::string& name);
void write_sweep_file(const fs::path& path, const Sweep& sweep);
Sweep read_sweep_file(const fs::path& path);

/// One JSON object per line: {"time", "rotation" (row-major 3x3), "translation"}.
std::string encode_trajectory_jsonl(const BodyTrajectory& trajectory);
BodyTrajectory decode_trajectory_jsonl(const std::string& text, const std::string& name);

/// One JSON object per annotation: {"object_id", "timestamp", "center", "extent", "yaw"}.
std::string encode_tracks_jsonl(const std::vector<BoundingBoxTrack>& tracks);
std::vector<BoundingBoxTrack> decode_tracks_jsonl(const std::string& text, const std::string& name);

struct GroundTruth {
  std::vector<std::vector<std::uint16_t>> labels;
  std::vector<PointSet> origins;  // world frame
  std::vector<BoundingBoxTrack> tracks;
  BodyTrajectory ego;
};

struct Dataset {
  std::vector<Sweep> sweeps;
  std::vector<BoundingBoxTrack> tracks;  // input annotations
  BodyTrajectory ego;                    // initial ego keyframes
  SensorSpec sensor;
  std::optional<GroundTruth> ground_truth;
  std::vector<int> holdout;  // sweeps withheld from reconstruction (informational)
};

/// Directory layout: manifest.json, sweeps/NNNNNN.smsw, tracks.jsonl, ego_poses.jsonl and,
/// when present, gt_labels.bin (u16 per point), gt_origins.bin (3 x f32 per point),
/// gt_tracks.jsonl and gt_ego_poses.jsonl. Ground-truth arrays follow manifest sweep order.
void save_dataset(const fs::path& dir, const Dataset& dataset);
/// Validates every file; malformed input raises DataError naming file and byte offset.
Dataset load_dataset(const fs::path& dir);

std::string encode_stl(const TriangleMesh& mesh);
TriangleMesh decode_stl(const std::string& bytes, const std::string& name);
void write_stl(const fs::path& path, const TriangleMesh& mesh);
TriangleMesh read_stl(const fs::path& path);
void write_obj(const fs::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const fs::path& path);

/// background.stl, objects/<id>.stl, trajectories.jsonl (object_id 0 is the ego) and
/// manifest.json with ids, extents, time span and units.
void save_scene(const fs::path& dir, const SceneModel& scene);
SceneModel load_scene(const fs::path& dir);

/// Raw little-endian f32 values (x fastest) plus a JSON sidecar at `<path>.json`.
void write_sdf_grid(const fs::path& path, const SdfGrid& grid);

std::string convergence_report_json(const ConvergenceReport& report);
std::string eval_report_json(const EvalReport& report);
std::string eval_report_csv_header();
std::string eval_report_csv_row(const EvalReport& report);

std::string sensor_json(const SensorSpec& sensor);
SensorSpec parse_sensor_json(const std::string& text, const std::string& name);

/// A simulation request: the scene plus how the input annotations and ego poses are degraded.
struct SimulationRequest {
  SimSceneConfig scene;
  AnnotationNoise annotation_noise;
  double annotation_subsample_hz = 0.0;
  std::uint64_t annotation_seed = 0;
  double ego_translation_sigma = 0.0;
  double ego_rotation_sigma = 0.0;
  std::uint64_t ego_seed = 0;
  double holdout_fraction = 0.0;
  std::uint64_t holdout_seed = 0;
};

/// JSON configuration; see configs/ in the repository for the schema.
SimulationRequest parse_simulation_request(const std::string& text, const std::string& name);

/// Simulator output packaged as a dataset with degraded inputs and full ground truth.
Dataset dataset_from_simulation(const SimDataset& sim, const SimulationRequest& request);

}  // namespace smore
