#include "smore/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "smore/errors.hpp"

namespace smore {
namespace {

using json = nlohmann::ordered_json;

constexpr double kDeg = std::numbers::pi / 180.0;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& name() const { return name_; }

  std::uint64_t uint(int width, const std::string& what) {
    if (remaining() < static_cast<std::size_t>(width)) {
      throw DataError(name_, pos_, "expected " + what + " (" + std::to_string(width) + " bytes), file ends after " +
                                       std::to_string(remaining()));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }
  std::uint16_t u16(const std::string& what) { return static_cast<std::uint16_t>(uint(2, what)); }
  std::uint32_t u32(const std::string& what) { return static_cast<std::uint32_t>(uint(4, what)); }
  float f32(const std::string& what) { return std::bit_cast<float>(u32(what)); }
  double f64(const std::string& what) { return std::bit_cast<double>(uint(8, what)); }
  std::string raw(std::size_t n, const std::string& what) {
    if (remaining() < n) throw DataError(name_, pos_, "expected " + what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json pose_json(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.push_back(t.rotation(i, j));
  }
  return json{{"rotation", r}, {"translation", vec_json(t.translation)}};
}

json parse_json(const std::string& text, const std::string& name, std::size_t base_offset = 0) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw DataError(name, base_offset + byte, std::string("valid JSON (") + e.what() + ")");
  }
}

// Field access that reports the record's byte offset on failure.
class Record {
 public:
  Record(const json& j, std::string name, std::size_t offset) : j_(j), name_(std::move(name)), offset_(offset) {}

  [[noreturn]] void fail(const std::string& expectation) const { throw DataError(name_, offset_, expectation); }

  const json& field(const std::string& key) const {
    if (!j_.is_object() || !j_.contains(key)) fail("field '" + key + "'");
    return j_.at(key);
  }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  double number(const std::string& key) const {
    const json& v = field(key);
    if (!v.is_number()) fail("number in field '" + key + "'");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail("finite number in field '" + key + "'");
    return d;
  }
  double number_or(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  std::int64_t integer(const std::string& key) const {
    const json& v = field(key);
    if (!v.is_number_integer()) fail("integer in field '" + key + "'");
    return v.get<std::int64_t>();
  }
  std::int64_t integer_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
  }
  std::string string(const std::string& key) const {
    const json& v = field(key);
    if (!v.is_string()) fail("string in field '" + key + "'");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key, std::size_t count) const {
    const json& v = field(key);
    if (!v.is_array() || (count != 0 && v.size() != count)) {
      fail("array of " + (count == 0 ? std::string("numbers") : std::to_string(count) + " numbers") +
           " in field '" + key + "'");
    }
    std::vector<double> out;
    for (const json& x : v) {
      if (!x.is_number() || !std::isfinite(x.get<double>())) fail("finite numbers in field '" + key + "'");
      out.push_back(x.get<double>());
    }
    return out;
  }
  Vec3 vec(const std::string& key) const {
    const auto v = numbers(key, 3);
    return Vec3(v[0], v[1], v[2]);
  }
  Vec3 vec_or(const std::string& key, const Vec3& fallback) const { return has(key) ? vec(key) : fallback; }
  RigidTransform pose() const {
    const auto r = numbers("rotation", 9);
    Mat3 rot;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) rot(i, j) = r[3 * i + j];
    }
    if (!is_rotation(rot, 1e-6)) fail("orthonormal rotation with determinant +1");
    if (!is_rotation(rot, 1e-12)) rot = orthonormalize(rot);
    RigidTransform t;
    t.rotation = rot;
    t.translation = vec("translation");
    return t;
  }
  Record child(const std::string& key) const { return Record(field(key), name_, offset_); }
  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string name_;
  std::size_t offset_;
};

// Calls body(record) for each non-empty line of a JSON-lines document.
template <typename Body>
void for_each_line(const std::string& text, const std::string& name, Body body) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      const json j = parse_json(line, name, start);
      body(Record(j, name, start));
    }
    start = end + 1;
  }
}

std::string sweep_file_name(std::size_t i) {
  std::ostringstream s;
  s << "sweeps/" << std::setw(6) << std::setfill('0') << i << ".smsw";
  return s.str();
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string(), 0, "readable file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_sweep(const Sweep& sweep) {
  sweep.validate();
  std::string out;
  out.reserve(kSweepHeaderBytes + kSweepRecordBytes * sweep.size());
  out += "SMSW";
  put_u32(out, kSweepFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(sweep.size()));
  put_f64(out, sweep.period);
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    put_f32(out, static_cast<float>(sweep.points[i].x()));
    put_f32(out, static_cast<float>(sweep.points[i].y()));
    put_f32(out, static_cast<float>(sweep.points[i].z()));
    put_f32(out, static_cast<float>(sweep.times[i]));
    put_u16(out, sweep.beam_ids[i]);
    put_u16(out, 0);
  }
  return out;
}

Sweep decode_sweep(const std::string& bytes, const std::string& name) {
  Reader r(bytes, name);
  if (r.raw(4, "magic \"SMSW\"") != "SMSW") throw DataError(name, 0, "magic \"SMSW\"");
  const std::uint32_t version = r.u32("u32 version");
  if (version != kSweepFormatVersion) throw UnsupportedVersion(name, version);
  const std::uint32_t count = r.u32("u32 point count");
  const std::size_t period_offset = r.offset();
  Sweep sweep;
  sweep.period = r.f64("f64 period");
  if (!(sweep.period > 0.0) || !std::isfinite(sweep.period)) throw DataError(name, period_offset, "positive period");
  sweep.points.reserve(count);
  sweep.times.reserve(count);
  sweep.beam_ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string rec = "record " + std::to_string(i) + " ";
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      const std::size_t at = r.offset();
      const float v = r.f32(rec + "f32 " + std::string(1, "xyz"[a]));
      if (!std::isfinite(v)) throw DataError(name, at, rec + "finite coordinate");
      p[a] = v;
    }
    const std::size_t t_at = r.offset();
    const float t = r.f32(rec + "f32 t");
    if (!(t >= 0.0f && t <= 1.0f)) throw DataError(name, t_at, rec + "time in [0, 1]");
    const std::uint16_t beam = r.u16(rec + "u16 beam");
    r.u16(rec + "u16 pad");
    sweep.points.push_back(p);
    sweep.times.push_back(t);
    sweep.beam_ids.push_back(beam);
  }
  if (r.remaining() != 0) throw DataError(name, r.offset(), "end of file after " + std::to_string(count) + " records");
  return sweep;
}

void write_sweep_file(const fs::path& path, const Sweep& sweep) { write_file_atomic(path, encode_sweep(sweep)); }

Sweep read_sweep_file(const fs::path& path) { return decode_sweep(read_file(path), path.string()); }

std::string encode_trajectory_jsonl(const BodyTrajectory& trajectory) {
  std::string out;
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    json j{{"time", trajectory.times()[k]}};
    j.update(pose_json(trajectory.keyframe(k)));
    out += j.dump() + "\n";
  }
  return out;
}

BodyTrajectory decode_trajectory_jsonl(const std::string& text, const std::string& name) {
  std::vector<double> times;
  std::vector<RigidTransform> poses;
  for_each_line(text, name, [&](const Record& rec) {
    const double t = rec.number("time");
    if (!times.empty() && !(t > times.back())) rec.fail("strictly increasing time");
    times.push_back(t);
    poses.push_back(rec.pose());
  });
  return BodyTrajectory(std::move(times), std::move(poses));
}

std::string encode_tracks_jsonl(const std::vector<BoundingBoxTrack>& tracks) {
  std::string out;
  for (const BoundingBoxTrack& track : tracks) {
    for (const BoxAnnotation& e : track.entries) {
      json j{{"object_id", track.object_id},
             {"timestamp", e.timestamp},
             {"center", vec_json(e.center)},
             {"extent", vec_json(e.extent)},
             {"yaw", e.yaw}};
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::vector<BoundingBoxTrack> decode_tracks_jsonl(const std::string& text, const std::string& name) {
  std::vector<BoundingBoxTrack> tracks;
  std::map<int, std::size_t> slot;
  for_each_line(text, name, [&](const Record& rec) {
    const std::int64_t id = rec.integer("object_id");
    if (id <= 0 || id > 65535) rec.fail("object_id in [1, 65535]");
    BoxAnnotation e;
    e.timestamp = rec.number("timestamp");
    e.center = rec.vec("center");
    e.extent = rec.vec("extent");
    e.yaw = rec.number("yaw");
    if ((e.extent.array() <= 0.0).any()) rec.fail("positive extent");
    auto it = slot.find(static_cast<int>(id));
    if (it == slot.end()) {
      it = slot.emplace(static_cast<int>(id), tracks.size()).first;
      tracks.push_back({static_cast<int>(id), {}});
    }
    auto& entries = tracks[it->second].entries;
    if (!entries.empty() && !(e.timestamp > entries.back().timestamp)) {
      rec.fail("strictly increasing timestamp for object " + std::to_string(id));
    }
    entries.push_back(e);
  });
  return tracks;
}

std::string sensor_json(const SensorSpec& sensor) {
  json elev = json::array();
  for (double e : sensor.elevation_angles) elev.push_back(e);
  json j{{"elevation_angles", elev},
         {"azimuth_steps_per_rev", sensor.azimuth_steps_per_rev},
         {"period_seconds", sensor.period_seconds},
         {"max_range", sensor.max_range},
         {"min_range", sensor.min_range},
         {"range_noise_sigma", sensor.range_noise_sigma}};
  return j.dump(2);
}

namespace {

SensorSpec parse_sensor(const Record& rec) {
  SensorSpec s;
  s.elevation_angles = rec.numbers("elevation_angles", 0);
  s.azimuth_steps_per_rev = static_cast<int>(rec.integer("azimuth_steps_per_rev"));
  s.period_seconds = rec.number("period_seconds");
  s.max_range = rec.number("max_range");
  s.min_range = rec.number_or("min_range", 0.0);
  s.range_noise_sigma = rec.number_or("range_noise_sigma", 0.0);
  try {
    s.validate();
  } catch (const Error& e) {
    rec.fail(std::string("valid sensor (") + e.what() + ")");
  }
  return s;
}

json units_json() { return json{{"length", "meters"}, {"time", "seconds"}}; }

void check_units(const Record& rec) {
  if (!rec.has("units")) return;
  const Record u = rec.child("units");
  if (u.string("length") != "meters" || u.string("time") != "seconds") rec.fail("units meters and seconds");
}

}  // namespace

SensorSpec parse_sensor_json(const std::string& text, const std::string& name) {
  const json j = parse_json(text, name);
  return parse_sensor(Record(j, name, 0));
}

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir / "sweeps");
  json sweeps = json::array();
  for (std::size_t i = 0; i < dataset.sweeps.size(); ++i) {
    const std::string file = sweep_file_name(i);
    write_sweep_file(dir / file, dataset.sweeps[i]);
    sweeps.push_back(
        json{{"file", file}, {"index", dataset.sweeps[i].sweep_index}, {"start_time", dataset.sweeps[i].start_time}});
  }
  write_file_atomic(dir / "tracks.jsonl", encode_tracks_jsonl(dataset.tracks));
  write_file_atomic(dir / "ego_poses.jsonl", encode_trajectory_jsonl(dataset.ego));

  json manifest{{"format", "smore-dataset"},
                {"version", 1},
                {"units", units_json()},
                {"sensor", json::parse(sensor_json(dataset.sensor))},
                {"sweeps", sweeps},
                {"tracks", "tracks.jsonl"},
                {"ego_poses", "ego_poses.jsonl"}};
  if (!dataset.holdout.empty()) manifest["holdout"] = dataset.holdout;

  if (dataset.ground_truth) {
    const GroundTruth& gt = *dataset.ground_truth;
    if (gt.labels.size() != dataset.sweeps.size() || gt.origins.size() != dataset.sweeps.size()) {
      throw Error("save_dataset: ground truth needs one label and origin array per sweep");
    }
    std::string labels;
    std::string origins;
    for (std::size_t s = 0; s < dataset.sweeps.size(); ++s) {
      if (gt.labels[s].size() != dataset.sweeps[s].size() || gt.origins[s].size() != dataset.sweeps[s].size()) {
        throw Error("save_dataset: ground truth size mismatch in sweep " + std::to_string(s));
      }
      for (std::uint16_t l : gt.labels[s]) put_u16(labels, l);
      for (const Vec3& o : gt.origins[s]) {
        for (int a = 0; a < 3; ++a) put_f32(origins, static_cast<float>(o[a]));
      }
    }
    write_file_atomic(dir / "gt_labels.bin", labels);
    write_file_atomic(dir / "gt_origins.bin", origins);
    write_file_atomic(dir / "gt_tracks.jsonl", encode_tracks_jsonl(gt.tracks));
    write_file_atomic(dir / "gt_ego_poses.jsonl", encode_trajectory_jsonl(gt.ego));
    manifest["ground_truth"] = json{{"labels", "gt_labels.bin"},
                                    {"origins", "gt_origins.bin"},
                                    {"tracks", "gt_tracks.jsonl"},
                                    {"ego_poses", "gt_ego_poses.jsonl"}};
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw DataError(manifest_path.string(), 0, "existing dataset manifest");
  const std::string mname = manifest_path.string();
  const json mj = parse_json(read_file(manifest_path), mname);
  const Record m(mj, mname, 0);
  if (m.string("format") != "smore-dataset") m.fail("format \"smore-dataset\"");
  const std::int64_t version = m.integer("version");
  if (version != 1) throw UnsupportedVersion(mname, static_cast<std::uint32_t>(version));
  check_units(m);

  Dataset ds;
  ds.sensor = parse_sensor(m.child("sensor"));
  const json& sweeps = m.field("sweeps");
  if (!sweeps.is_array()) m.fail("array in field 'sweeps'");
  for (const json& entry : sweeps) {
    const Record rec(entry, mname, 0);
    const fs::path file = dir / rec.string("file");
    if (!fs::exists(file)) rec.fail("existing sweep file " + file.string());
    Sweep sweep = read_sweep_file(file);
    sweep.sweep_index = static_cast<int>(rec.integer("index"));
    sweep.start_time = rec.number("start_time");
    if (!ds.sweeps.empty() && !(sweep.start_time > ds.sweeps.back().start_time)) {
      rec.fail("strictly increasing sweep start_time");
    }
    ds.sweeps.push_back(std::move(sweep));
  }

  auto load_text = [&](const std::string& key) {
    const fs::path p = dir / m.string(key);
    if (!fs::exists(p)) m.fail("existing file for '" + key + "': " + p.string());
    return std::make_pair(read_file(p), p.string());
  };
  {
    auto [text, name] = load_text("tracks");
    ds.tracks = decode_tracks_jsonl(text, name);
  }
  {
    auto [text, name] = load_text("ego_poses");
    ds.ego = decode_trajectory_jsonl(text, name);
    if (ds.ego.empty()) throw DataError(name, 0, "at least one ego pose");
  }
  if (m.has("holdout")) {
    for (const json& h : m.field("holdout")) {
      if (!h.is_number_integer()) m.fail("integer sweep indices in 'holdout'");
      ds.holdout.push_back(h.get<int>());
    }
  }

  if (m.has("ground_truth")) {
    const Record g = m.child("ground_truth");
    GroundTruth gt;
    std::size_t total = 0;
    for (const Sweep& s : ds.sweeps) total += s.size();
    const fs::path lpath = dir / g.string("labels");
    const std::string lbytes = read_file(lpath);
    if (lbytes.size() != 2 * total) {
      throw DataError(lpath.string(), std::min(lbytes.size(), 2 * total),
                      std::to_string(2 * total) + " bytes (u16 label per point)");
    }
    const fs::path opath = dir / g.string("origins");
    const std::string obytes = read_file(opath);
    if (obytes.size() != 12 * total) {
      throw DataError(opath.string(), std::min(obytes.size(), 12 * total),
                      std::to_string(12 * total) + " bytes (3 x f32 origin per point)");
    }
    Reader lr(lbytes, lpath.string());
    Reader orr(obytes, opath.string());
    for (const Sweep& s : ds.sweeps) {
      std::vector<std::uint16_t> labels(s.size());
      PointSet origins(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        labels[i] = lr.u16("u16 label");
        for (int a = 0; a < 3; ++a) origins[i][a] = orr.f32("f32 origin");
      }
      gt.labels.push_back(std::move(labels));
      gt.origins.push_back(std::move(origins));
    }
    const fs::path tpath = dir / g.string("tracks");
    gt.tracks = decode_tracks_jsonl(read_file(tpath), tpath.string());
    const fs::path epath = dir / g.string("ego_poses");
    gt.ego = decode_trajectory_jsonl(read_file(epath), epath.string());
    ds.ground_truth = std::move(gt);
  }
  return ds;
}

std::string encode_stl(const TriangleMesh& mesh) {
  std::string out(80, '\0');
  const std::string header = "smore mesh";
  std::memcpy(out.data(), header.data(), header.size());
  put_u32(out, static_cast<std::uint32_t>(mesh.triangles.size()));
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const Vec3 n = mesh.area(f) > 0.0 ? mesh.normal(f) : Vec3::Zero();
    for (int a = 0; a < 3; ++a) put_f32(out, static_cast<float>(n[a]));
    for (std::uint32_t v : mesh.triangles[f]) {
      for (int a = 0; a < 3; ++a) put_f32(out, static_cast<float>(mesh.vertices[v][a]));
    }
    put_u16(out, 0);
  }
  return out;
}

TriangleMesh decode_stl(const std::string& bytes, const std::string& name) {
  Reader r(bytes, name);
  r.raw(80, "80-byte STL header");
  const std::uint32_t count = r.u32("u32 triangle count");
  if (r.remaining() != static_cast<std::size_t>(count) * 50) {
    throw DataError(name, 84, std::to_string(count) + " triangles of 50 bytes, found " +
                                  std::to_string(r.remaining()) + " bytes");
  }
  TriangleMesh mesh;
  std::map<std::tuple<float, float, float>, std::uint32_t> weld;
  for (std::uint32_t f = 0; f < count; ++f) {
    for (int a = 0; a < 3; ++a) r.f32("normal");
    Triangle tri{};
    for (int c = 0; c < 3; ++c) {
      const float x = r.f32("vertex x");
      const float y = r.f32("vertex y");
      const float z = r.f32("vertex z");
      auto key = std::make_tuple(x, y, z);
      auto it = weld.find(key);
      if (it == weld.end()) {
        it = weld.emplace(key, static_cast<std::uint32_t>(mesh.vertices.size())).first;
        mesh.vertices.emplace_back(x, y, z);
      }
      tri[c] = it->second;
    }
    r.u16("attribute");
    mesh.triangles.push_back(tri);
  }
  return mesh;
}

void write_stl(const fs::path& path, const TriangleMesh& mesh) { write_file_atomic(path, encode_stl(mesh)); }

TriangleMesh read_stl(const fs::path& path) { return decode_stl(read_file(path), path.string()); }

void write_obj(const fs::path& path, const TriangleMesh& mesh) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Triangle& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  write_file_atomic(path, out.str());
}

TriangleMesh read_obj(const fs::path& path) {
  const std::string text = read_file(path);
  TriangleMesh mesh;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::istringstream line(text.substr(start, end - start));
    std::string tag;
    line >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(line >> v.x() >> v.y() >> v.z())) throw DataError(path.string(), start, "three vertex coordinates");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (line >> tok) {
        const long i = std::stol(tok.substr(0, tok.find('/')));
        const long resolved = i < 0 ? static_cast<long>(mesh.vertices.size()) + i : i - 1;
        if (resolved < 0 || resolved >= static_cast<long>(mesh.vertices.size())) {
          throw DataError(path.string(), start, "face index within the vertex list");
        }
        idx.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (idx.size() < 3) throw DataError(path.string(), start, "face with at least three vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    start = end + 1;
  }
  return mesh;
}

void save_scene(const fs::path& dir, const SceneModel& scene) {
  fs::create_directories(dir / "objects");
  write_stl(dir / "background.stl", scene.background);
  std::string traj;
  auto add_trajectory = [&](int id, const BodyTrajectory& t) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      json j{{"object_id", id}, {"time", t.times()[k]}};
      j.update(pose_json(t.keyframe(k)));
      traj += j.dump() + "\n";
    }
  };
  add_trajectory(kBackgroundId, scene.ego);
  json objects = json::array();
  double first = scene.ego.empty() ? 0.0 : scene.ego.first_time();
  double last = scene.ego.empty() ? 0.0 : scene.ego.last_time();
  for (const auto& [id, obj] : scene.objects) {
    const std::string file = "objects/" + std::to_string(id) + ".stl";
    write_stl(dir / file, obj.mesh);
    add_trajectory(id, obj.trajectory);
    json o{{"id", id}, {"mesh", file}, {"extent", vec_json(obj.extent)}};
    if (!obj.trajectory.empty()) {
      o["first_time"] = obj.trajectory.first_time();
      o["last_time"] = obj.trajectory.last_time();
    }
    objects.push_back(o);
  }
  write_file_atomic(dir / "trajectories.jsonl", traj);
  json manifest{{"format", "smore-scene"},
                {"version", 1},
                {"units", units_json()},
                {"background", "background.stl"},
                {"trajectories", "trajectories.jsonl"},
                {"time_span", json::array({first, last})},
                {"objects", objects}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

SceneModel load_scene(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw DataError(manifest_path.string(), 0, "existing scene manifest");
  const std::string mname = manifest_path.string();
  const json mj = parse_json(read_file(manifest_path), mname);
  const Record m(mj, mname, 0);
  if (m.string("format") != "smore-scene") m.fail("format \"smore-scene\"");
  const std::int64_t version = m.integer("version");
  if (version != 1) throw UnsupportedVersion(mname, static_cast<std::uint32_t>(version));
  check_units(m);

  SceneModel scene;
  scene.background = read_stl(dir / m.string("background"));

  const fs::path tpath = dir / m.string("trajectories");
  std::map<int, std::pair<std::vector<double>, std::vector<RigidTransform>>> keyframes;
  for_each_line(read_file(tpath), tpath.string(), [&](const Record& rec) {
    const int id = static_cast<int>(rec.integer("object_id"));
    auto& [times, poses] = keyframes[id];
    const double t = rec.number("time");
    if (!times.empty() && !(t > times.back())) rec.fail("strictly increasing time for object " + std::to_string(id));
    times.push_back(t);
    poses.push_back(rec.pose());
  });
  auto take = [&](int id) {
    auto it = keyframes.find(id);
    if (it == keyframes.end()) return BodyTrajectory();
    return BodyTrajectory(it->second.first, it->second.second);
  };
  scene.ego = take(kBackgroundId);
  if (scene.ego.empty()) throw DataError(tpath.string(), 0, "ego keyframes (object_id 0)");

  const json& objects = m.field("objects");
  if (!objects.is_array()) m.fail("array in field 'objects'");
  for (const json& o : objects) {
    const Record rec(o, mname, 0);
    const int id = static_cast<int>(rec.integer("id"));
    if (id <= 0) rec.fail("positive object id");
    SceneObject obj;
    obj.mesh = read_stl(dir / rec.string("mesh"));
    obj.extent = rec.vec("extent");
    obj.trajectory = take(id);
    if (!scene.objects.emplace(id, std::move(obj)).second) rec.fail("unique object id " + std::to_string(id));
  }
  return scene;
}

void write_sdf_grid(const fs::path& path, const SdfGrid& grid) {
  std::string raw;
  raw.reserve(grid.values.size() * 4);
  for (double v : grid.values) put_f32(raw, static_cast<float>(v));
  write_file_atomic(path, raw);
  json side{{"origin", vec_json(grid.origin)},
            {"voxel_size", grid.voxel_size},
            {"truncation", grid.truncation},
            {"dims", json::array({grid.dims.x(), grid.dims.y(), grid.dims.z()})},
            {"lattice", json::array({grid.lattice.x(), grid.lattice.y(), grid.lattice.z()})},
            {"layout", "f32 little-endian, x fastest; unobserved samples hold +truncation"}};
  fs::path sidecar = path;
  sidecar += ".json";
  write_file_atomic(sidecar, side.dump(2) + "\n");
}

std::string convergence_report_json(const ConvergenceReport& report) {
  json iterations = json::array();
  for (const IterationReport& it : report.iterations) {
    json comps = json::array();
    for (const ComponentIterate& c : it.components) {
      comps.push_back(json{{"id", c.id},
                           {"views", c.views},
                           {"points", c.points},
                           {"residual", c.residual},
                           {"inliers", c.inliers},
                           {"objective", c.objective},
                           {"mesh_before", c.mesh_before},
                           {"mesh_after", c.mesh_after},
                           {"mesh_step_violation", c.mesh_step_violation},
                           {"stopped", c.stopped}});
    }
    iterations.push_back(json{{"iteration", it.iteration}, {"objective", it.objective}, {"components", comps}});
  }
  json terms = json::array();
  for (const auto& [id, v] : report.final_terms) {
    terms.push_back(json{{"id", id}, {"objective", v}, {"points", report.final_points.at(id)}});
  }
  json j{{"initial_objective", report.initial_objective},
         {"objective_trace", report.objective_trace},
         {"final_objective", report.final_objective},
         {"final_terms", terms},
         {"iterations", iterations},
         {"unusable_objects", report.unusable_objects},
         {"single_entry_tracks", report.single_entry_tracks},
         {"warnings", report.warnings},
         {"all_stopped", report.all_stopped},
         {"failed", report.failed}};
  return j.dump(2) + "\n";
}

std::string eval_report_json(const EvalReport& report) {
  json j{{"metrics", report.metrics}, {"test_sweeps", report.test_sweeps}};
  if (report.metrics.count("chamfer")) {
    j["chamfer_sq"] = report.chamfer_sq;
    j["chamfer"] = report.chamfer;
  }
  if (report.metrics.count("depth")) {
    j["median_depth_sq"] = report.median_depth_sq;
    j["median_depth"] = report.median_depth;
    j["matched_rays"] = report.matched_rays;
    j["predicted_only_rays"] = report.predicted_only_rays;
    j["measured_only_rays"] = report.measured_only_rays;
  }
  if (report.metrics.count("ate")) {
    j["ate"] = report.ate;
    j["ate_samples"] = report.ate_samples;
  }
  if (report.metrics.count("nn")) {
    j["nn_mean"] = report.nn_mean;
    j["acc_relaxed"] = report.acc_relaxed;
    j["acc_strict"] = report.acc_strict;
    j["nn_points"] = report.nn_points;
  }
  return j.dump(2) + "\n";
}

std::string eval_report_csv_header() {
  return "chamfer_sq,median_depth_sq,ate,nn_mean,acc_relaxed,acc_strict\n";
}

std::string eval_report_csv_row(const EvalReport& report) {
  std::ostringstream out;
  out << std::setprecision(17);
  auto field = [&](const char* metric, double v) {
    if (report.metrics.count(metric)) out << v;
  };
  field("chamfer", report.chamfer_sq);
  out << ',';
  field("depth", report.median_depth_sq);
  out << ',';
  field("ate", report.ate);
  out << ',';
  field("nn", report.nn_mean);
  out << ',';
  field("nn", report.acc_relaxed);
  out << ',';
  field("nn", report.acc_strict);
  out << '\n';
  return out.str();
}

SimulationRequest parse_simulation_request(const std::string& text, const std::string& name) {
  const json j = parse_json(text, name);
  const Record root(j, name, 0);
  SimulationRequest req;
  const int sweeps = static_cast<int>(root.integer_or("sweep_count", 10));
  const std::uint64_t seed = static_cast<std::uint64_t>(root.integer_or("seed", 0));

  if (root.has("preset")) {
    if (root.string("preset") != "fast_mover") root.fail("preset \"fast_mover\"");
    FastMoverOptions opt;
    opt.sweep_count = sweeps;
    opt.seed = seed;
    if (root.has("fast_mover")) {
      const Record f = root.child("fast_mover");
      opt.ego_speed = f.number_or("ego_speed", opt.ego_speed);
      opt.ego_yaw_rate = f.number_or("ego_yaw_rate_deg", opt.ego_yaw_rate / kDeg) * kDeg;
      opt.actor_speed = f.number_or("actor_speed", opt.actor_speed);
      opt.actor_yaw_rate = f.number_or("actor_yaw_rate_deg", opt.actor_yaw_rate / kDeg) * kDeg;
      opt.range_noise_sigma = f.number_or("range_noise_sigma", 0.0);
      if (f.has("actor_start")) opt.actor_start = f.vec("actor_start");
      opt.actor_yaw = f.number_or("actor_yaw_deg", opt.actor_yaw / kDeg) * kDeg;
    }
    req.scene = make_fast_mover_scene(opt);
  } else {
    SimSceneConfig& c = req.scene;
    c.sweep_count = sweeps;
    c.seed = seed;
    c.start_time = root.number_or("start_time", 0.0);
    if (root.has("sensor")) {
      const Record s = root.child("sensor");
      SensorSpec spec = SensorSpec::default_spec();
      if (s.has("elevations_deg")) {
        spec.elevation_angles.clear();
        for (double e : s.numbers("elevations_deg", 0)) spec.elevation_angles.push_back(e * kDeg);
      } else if (s.has("beam_count")) {
        const int n = static_cast<int>(s.integer("beam_count"));
        if (n <= 0) s.fail("positive beam_count");
        const double lo = s.number_or("min_elevation_deg", -15.0);
        const double hi = s.number_or("max_elevation_deg", 15.0);
        spec.elevation_angles.clear();
        for (int b = 0; b < n; ++b) spec.elevation_angles.push_back((n == 1 ? lo : lo + (hi - lo) * b / (n - 1)) * kDeg);
      }
      spec.azimuth_steps_per_rev = static_cast<int>(s.integer_or("azimuth_steps", spec.azimuth_steps_per_rev));
      spec.period_seconds = s.number_or("period", spec.period_seconds);
      spec.max_range = s.number_or("max_range", spec.max_range);
      spec.min_range = s.number_or("min_range", spec.min_range);
      spec.range_noise_sigma = s.number_or("range_noise_sigma", spec.range_noise_sigma);
      c.sensor = spec;
    }
    std::vector<double> times;
    for (int k = 0; k <= sweeps; ++k) times.push_back(c.start_time + k * c.sensor.period_seconds);
    auto motion = [&](const Record& r) {
      return arc_trajectory(r.vec("start"), r.number_or("yaw_deg", 0.0) * kDeg, r.number_or("speed", 0.0),
                            r.number_or("yaw_rate_deg", 0.0) * kDeg, times);
    };
    c.ego = motion(root.child("ego"));
    if (root.has("background")) {
      const Record bg = root.child("background");
      if (bg.has("planes")) {
        for (const json& p : bg.field("planes")) {
          const Record r(p, name, 0);
          const auto size = r.numbers("size", 2);
          c.planes.push_back({RigidTransform::from_yaw(r.number_or("yaw_deg", 0.0) * kDeg, r.vec("center")),
                              Eigen::Vector2d(0.5 * size[0], 0.5 * size[1])});
        }
      }
      if (bg.has("boxes")) {
        for (const json& b : bg.field("boxes")) {
          const Record r(b, name, 0);
          c.boxes.push_back({RigidTransform::from_yaw(r.number_or("yaw_deg", 0.0) * kDeg, r.vec("center")),
                             r.vec("extent")});
        }
      }
    }
    if (root.has("actors")) {
      for (const json& a : root.field("actors")) {
        const Record r(a, name, 0);
        SimActor actor;
        actor.object_id = static_cast<int>(r.integer("id"));
        const std::string shape = r.has("shape") ? r.string("shape") : "box";
        if (shape == "car") {
          actor.extent = r.vec_or("extent", Vec3(4.5, 1.8, 1.5));
          actor.mesh = make_car_mesh(actor.extent);
        } else if (shape == "box") {
          actor.extent = r.vec_or("extent", Vec3::Ones());
          actor.mesh = make_box_mesh(actor.extent);
        } else {
          r.fail("shape \"car\" or \"box\"");
        }
        actor.trajectory = motion(r);
        c.actors.push_back(std::move(actor));
      }
    }
  }
  if (root.has("annotations")) {
    const Record a = root.child("annotations");
    req.annotation_noise.translation_sigma = a.number_or("translation_sigma", 0.0);
    req.annotation_noise.vertical_sigma = a.number_or("vertical_sigma", 0.0);
    req.annotation_noise.yaw_sigma = a.number_or("yaw_sigma_deg", 0.0) * kDeg;
    req.annotation_subsample_hz = a.number_or("subsample_hz", 0.0);
    req.annotation_seed = static_cast<std::uint64_t>(a.integer_or("seed", 0));
  }
  if (root.has("ego_noise")) {
    const Record e = root.child("ego_noise");
    req.ego_translation_sigma = e.number_or("translation_sigma", 0.0);
    req.ego_rotation_sigma = e.number_or("rotation_sigma_deg", 0.0) * kDeg;
    req.ego_seed = static_cast<std::uint64_t>(e.integer_or("seed", 0));
  }
  if (root.has("holdout")) {
    const Record h = root.child("holdout");
    req.holdout_fraction = h.number_or("fraction", 0.0);
    req.holdout_seed = static_cast<std::uint64_t>(h.integer_or("seed", 0));
  }
  try {
    req.scene.validate();
  } catch (const Error& e) {
    root.fail(std::string("valid simulation config (") + e.what() + ")");
  }
  return req;
}

Dataset dataset_from_simulation(const SimDataset& sim, const SimulationRequest& request) {
  Dataset ds;
  ds.sweeps = sim.sweeps;
  ds.sensor = sim.sensor;
  ds.tracks =
      perturb_annotations(sim.tracks, request.annotation_noise, request.annotation_subsample_hz, request.annotation_seed);
  ds.ego = (request.ego_translation_sigma > 0.0 || request.ego_rotation_sigma > 0.0)
               ? perturb_trajectory(sim.ego, request.ego_translation_sigma, request.ego_rotation_sigma, request.ego_seed)
               : sim.ego;
  GroundTruth gt;
  gt.labels = sim.labels;
  gt.origins = sim.origins;
  gt.tracks = sim.tracks;
  gt.ego = sim.ego;
  ds.ground_truth = std::move(gt);
  if (request.holdout_fraction > 0.0) {
    for (std::size_t i : holdout_split(sim.sweeps.size(), request.holdout_fraction, request.holdout_seed).test) {
      ds.holdout.push_back(static_cast<int>(i));
    }
  }
  return ds;
}

}  // namespace smore
