/* Copyright 2026 The EAE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eae/event_io.hpp"

namespace eae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kEventMagic[4] = {'E', 'V', 'T', '1'};
constexpr std::size_t kEventHeaderSize = 12;
constexpr std::size_t kEventRecordSize = 14;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return static_cast<T>(u);
}

}  // namespace

std::vector<std::uint8_t> encode_events(const EventStream& stream) {
  std::vector<std::uint8_t> out;
  out.reserve(kEventHeaderSize + kEventRecordSize * stream.events.size());
  out.insert(out.end(), kEventMagic, kEventMagic + 4);
  put_le<std::uint16_t>(out, stream.width);
  put_le<std::uint16_t>(out, stream.height);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.events.size()));
  for (const auto& e : stream.events) {
    put_le<std::uint16_t>(out, e.x);
    put_le<std::uint16_t>(out, e.y);
    put_le<std::int8_t>(out, e.p);
    out.push_back(0);
    put_le<std::uint64_t>(out, e.t);
  }
  return out;
}

EventStream decode_events(const std::vector<std::uint8_t>& bytes) {
  using K = ParseError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEventMagic, 4) != 0)
    throw ParseError(K::kMagic, 0, "event file: bad magic");
  if (bytes.size() < kEventHeaderSize) throw ParseError(K::kTruncated, bytes.size(), "event file: truncated header");
  EventStream s;
  s.width = get_le<std::uint16_t>(bytes.data() + 4);
  s.height = get_le<std::uint16_t>(bytes.data() + 6);
  const std::uint32_t count = get_le<std::uint32_t>(bytes.data() + 8);
  s.events.reserve(count);
  std::size_t off = kEventHeaderSize;
  for (std::uint32_t i = 0; i < count; ++i, off += kEventRecordSize) {
    if (off + kEventRecordSize > bytes.size())
      throw ParseError(K::kTruncated, off, "event file: truncated record " + std::to_string(i));
    const std::uint8_t* p = bytes.data() + off;
    Event e{get_le<std::uint16_t>(p), get_le<std::uint16_t>(p + 2), get_le<std::int8_t>(p + 4),
            get_le<std::uint64_t>(p + 6)};
    if (e.x >= s.width || e.y >= s.height)
      throw ParseError(K::kOutOfBounds, off, "event file: coordinate out of bounds in record " + std::to_string(i));
    if (e.p != 1 && e.p != -1)
      throw ParseError(K::kFormat, off + 4, "event file: polarity must be -1 or +1");
    if (!s.events.empty() && e.t < s.events.back().t)
      throw ParseError(K::kNonMonotone, off + 6, "event file: timestamps decrease at record " + std::to_string(i));
    s.events.push_back(e);
  }
  if (off != bytes.size()) throw ParseError(K::kFormat, off, "event file: trailing bytes after last record");
  return s;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw InvalidInput("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_events(const EventStream& stream, const fs::path& path) {
  const auto bytes = encode_events(stream);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

EventStream read_events(const fs::path& path) {
  const std::string raw = read_file(path);
  return decode_events(std::vector<std::uint8_t>(raw.begin(), raw.end()));
}

// ---------------------------------------------------------------------------

void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  write_file_atomic(path, out);
}

Frame read_pgm(const fs::path& path, int* width, int* height) {
  using K = ParseError::Kind;
  const std::string raw = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < raw.size()) {
      if (raw[pos] == '#') {
        while (pos < raw.size() && raw[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(raw[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < raw.size() && !std::isspace(static_cast<unsigned char>(raw[pos]))) ++pos;
    return raw.substr(start, pos - start);
  };
  if (next_token() != "P5") throw ParseError(K::kMagic, 0, path.string() + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ParseError(K::kFormat, pos, path.string() + ": malformed PGM header");
  }
  if (maxval != 255 || w <= 0 || h <= 0) throw ParseError(K::kFormat, pos, path.string() + ": unsupported PGM");
  ++pos;  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (raw.size() < pos + n) throw ParseError(K::kTruncated, raw.size(), path.string() + ": truncated raster");
  Frame f;
  f.pixels.assign(raw.begin() + static_cast<std::ptrdiff_t>(pos), raw.begin() + static_cast<std::ptrdiff_t>(pos + n));
  *width = w;
  *height = h;
  return f;
}

void write_frames(const FrameSequence& frames, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  std::string manifest;
  char name[32];
  for (std::size_t k = 0; k < frames.frames.size(); ++k) {
    std::snprintf(name, sizeof(name), "frame_%05zu.pgm", k);
    const std::string rel = std::string("frames/") + name;
    write_pgm(dir / rel, frames.width, frames.height, frames.frames[k].pixels);
    manifest += json{{"path", rel}, {"t_us", frames.frames[k].t_us}}.dump() + "\n";
  }
  write_file_atomic(dir / "frames.jsonl", manifest);
}

FrameSequence read_frames(const fs::path& manifest, double fps) {
  FrameSequence seq;
  seq.fps = fps;
  std::istringstream in(read_file(manifest));
  std::string line;
  std::uint64_t off = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(ParseError::Kind::kFormat, off, "frame manifest: " + std::string(e.what()));
    }
    int w = 0, h = 0;
    Frame f = read_pgm(manifest.parent_path() / j.at("path").get<std::string>(), &w, &h);
    f.t_us = j.at("t_us").get<std::uint64_t>();
    if (seq.frames.empty()) {
      seq.width = w;
      seq.height = h;
    }
    seq.frames.push_back(std::move(f));
    off += line.size() + 1;
  }
  seq.validate();
  return seq;
}

// ---------------------------------------------------------------------------

void write_bboxes(const BBoxTracks& boxes, const fs::path& path) {
  std::string out = "frame_idx,object_id,x_min,y_min,x_max,y_max\n";
  for (const auto& b : boxes) {
    out += std::to_string(b.frame_idx) + "," + std::to_string(b.object_id) + "," + std::to_string(b.x_min) + "," +
           std::to_string(b.y_min) + "," + std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "\n";
  }
  write_file_atomic(path, out);
}

BBoxTracks read_bboxes(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::uint64_t off = 0;
  if (!std::getline(in, line) || line != "frame_idx,object_id,x_min,y_min,x_max,y_max")
    throw ParseError(ParseError::Kind::kFormat, 0, path.string() + ": unexpected CSV header");
  off += line.size() + 1;
  BBoxTracks boxes;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    BBox b;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%d,%d", &b.frame_idx, &b.object_id, &b.x_min, &b.y_min, &b.x_max,
                    &b.y_max) != 6)
      throw ParseError(ParseError::Kind::kFormat, off, path.string() + ": malformed row");
    if (b.x_max <= b.x_min || b.y_max <= b.y_min)
      throw ParseError(ParseError::Kind::kFormat, off, path.string() + ": empty rectangle");
    boxes.push_back(b);
    off += line.size() + 1;
  }
  return boxes;
}

void write_labels(const LabelSet& labels, const fs::path& path) {
  json j;
  j["onset_us"] = labels.onset_us ? json(*labels.onset_us) : json(nullptr);
  j["collision_us"] = labels.collision_us ? json(*labels.collision_us) : json(nullptr);
  j["risky_object"] = labels.risky_object ? json(*labels.risky_object) : json(nullptr);
  j["frame_labels"] = labels.frame_labels;
  json obj = json::object();
  for (const auto& [id, v] : labels.object_labels) obj[std::to_string(id)] = v;
  j["object_labels"] = obj;
  write_file_atomic(path, j.dump() + "\n");
}

LabelSet read_labels(const fs::path& path) {
  try {
    const json j = json::parse(read_file(path));
    LabelSet l;
    if (!j.at("onset_us").is_null()) l.onset_us = j["onset_us"].get<std::uint64_t>();
    if (j.contains("collision_us") && !j["collision_us"].is_null())
      l.collision_us = j["collision_us"].get<std::uint64_t>();
    if (j.contains("risky_object") && !j["risky_object"].is_null()) l.risky_object = j["risky_object"].get<int>();
    l.frame_labels = j.at("frame_labels").get<std::vector<int>>();
    for (const auto& [k, v] : j.at("object_labels").items()) l.object_labels[std::stoi(k)] = v.get<std::vector<int>>();
    return l;
  } catch (const json::exception& e) {
    throw ParseError(ParseError::Kind::kFormat, 0, path.string() + ": " + e.what());
  }
}

void write_scenario_spec(const ScenarioSpec& spec, const fs::path& path) {
  json j;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["background"] = spec.background;
  j["duration_us"] = spec.duration_us;
  j["fps"] = spec.fps;
  j["seed"] = spec.seed;
  j["sensor_noise"] = spec.sensor_noise;
  j["objects"] = json::array();
  for (const auto& o : spec.objects) {
    json path_j = json::array();
    for (const auto& w : o.path) path_j.push_back({{"t_us", w.t_us}, {"cx", w.cx}, {"cy", w.cy}});
    j["objects"].push_back(
        {{"id", o.id}, {"width", o.width}, {"height", o.height}, {"intensity", o.intensity}, {"path", path_j}});
  }
  if (spec.anomaly) {
    j["anomaly"] = {{"object_id", spec.anomaly->object_id},
                    {"onset_us", spec.anomaly->onset_us},
                    {"collision_us", spec.anomaly->collision_us}};
  } else {
    j["anomaly"] = nullptr;
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

ScenarioSpec read_scenario_spec(const fs::path& path) {
  try {
    const json j = json::parse(read_file(path));
    ScenarioSpec s;
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.background = j.value("background", s.background);
    s.duration_us = j.value("duration_us", s.duration_us);
    s.fps = j.value("fps", s.fps);
    s.seed = j.value("seed", s.seed);
    s.sensor_noise = j.value("sensor_noise", s.sensor_noise);
    for (const auto& oj : j.value("objects", json::array())) {
      ObjectTrack o;
      o.id = oj.at("id").get<int>();
      o.width = oj.at("width").get<int>();
      o.height = oj.at("height").get<int>();
      o.intensity = oj.at("intensity").get<std::uint8_t>();
      for (const auto& wj : oj.at("path"))
        o.path.push_back({wj.at("t_us").get<std::uint64_t>(), wj.at("cx").get<double>(), wj.at("cy").get<double>()});
      s.objects.push_back(std::move(o));
    }
    if (j.contains("anomaly") && !j["anomaly"].is_null()) {
      const auto& a = j["anomaly"];
      s.anomaly = AnomalySpec{a.at("object_id").get<int>(), a.at("onset_us").get<std::uint64_t>(),
                              a.at("collision_us").get<std::uint64_t>()};
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(ParseError::Kind::kFormat, 0, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

void write_scenario(const Scenario& sc, const fs::path& dir) {
  fs::create_directories(dir);
  write_scenario_spec(sc.spec, dir / "scenario.json");
  write_frames(sc.frames, dir);
  write_events(sc.events, dir / "events.evt");
  write_bboxes(sc.boxes, dir / "bboxes.csv");
  write_labels(sc.labels, dir / "labels.json");
}

Scenario load_scenario(const fs::path& dir) {
  Scenario sc;
  sc.id = dir.filename().string();
  if (sc.id.empty()) sc.id = dir.parent_path().filename().string();
  sc.spec = read_scenario_spec(dir / "scenario.json");
  sc.frames = read_frames(dir / "frames.jsonl", sc.spec.fps);
  sc.events = read_events(dir / "events.evt");
  sc.boxes = read_bboxes(dir / "bboxes.csv");
  sc.labels = read_labels(dir / "labels.json");
  if (sc.events.width != sc.frames.width || sc.events.height != sc.frames.height)
    throw InvalidInput(dir.string() + ": event and frame dimensions differ");
  return sc;
}

std::vector<fs::path> list_scenarios(const fs::path& root) {
  if (fs::exists(root / "scenario.json")) return {root};
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) throw InvalidInput("not a dataset directory: " + root.string());
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "scenario.json")) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace eae
