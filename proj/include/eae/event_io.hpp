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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eae/common.hpp"

namespace eae {

// A single polarity change at pixel (x, y), timestamp in microseconds.
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;
  std::uint64_t t = 0;

  bool operator==(const Event&) const = default;
};

// Global order of a stream: (t, y, x) lexicographic.
inline bool event_order(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

struct EventStream {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<Event> events;

  bool operator==(const EventStream&) const = default;
  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

struct Frame {
  std::uint64_t t_us = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width * height

  bool operator==(const Frame&) const = default;
};

struct FrameSequence {
  int width = 0;
  int height = 0;
  double fps = 20.0;
  std::vector<Frame> frames;

  // Throws InvalidInput when dimensions, ordering or fps consistency do not hold.
  void validate() const;
  bool operator==(const FrameSequence&) const = default;
};

struct ConverterOptions {
  double threshold = 0.2;            // contrast threshold C
  std::uint64_t refractory_us = 0;   // 0 disables
  bool linear = false;               // compare raw intensity instead of log(1 + L)
};

// Per-pixel threshold-crossing converter. Crossing times are linearly
// interpolated between frame timestamps; output is in event_order.
EventStream frames_to_events(const FrameSequence& frames, const ConverterOptions& opts = {});

// Adds Poisson-timed, random-polarity noise events in [t_begin, t_end).
EventStream add_noise(const EventStream& stream, double rate_hz_per_pixel, std::uint64_t t_begin,
                      std::uint64_t t_end, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic scenarios

struct Waypoint {
  std::uint64_t t_us = 0;
  double cx = 0.0;
  double cy = 0.0;
};

struct ObjectTrack {
  int id = 0;
  int width = 1;
  int height = 1;
  std::uint8_t intensity = 200;
  std::vector<Waypoint> path;  // sorted by t_us; position is piecewise linear

  // Centre at time t (held constant outside the waypoint range).
  std::pair<double, double> center_at(std::uint64_t t_us) const;
};

struct AnomalySpec {
  int object_id = 0;
  std::uint64_t onset_us = 0;
  std::uint64_t collision_us = 0;
};

struct ScenarioSpec {
  int width = 64;
  int height = 48;
  std::uint8_t background = 60;
  std::vector<ObjectTrack> objects;
  std::optional<AnomalySpec> anomaly;
  std::uint64_t duration_us = 3'000'000;
  double fps = 20.0;
  std::uint64_t seed = 0;
  double sensor_noise = 0.0;  // std-dev of additive per-pixel noise; 0 keeps frames exact

  void validate() const;
  std::size_t frame_count() const;
  std::uint64_t frame_time(std::size_t k) const;
};

// Pixel rectangle, half-open on the max side.
struct BBox {
  int frame_idx = 0;
  int object_id = 0;
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  bool operator==(const BBox&) const = default;
  bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
};

using BBoxTracks = std::vector<BBox>;  // sorted by (frame_idx, object_id)

struct LabelSet {
  std::optional<std::uint64_t> onset_us;  // time of the first positive frame
  std::optional<std::uint64_t> collision_us;
  std::optional<int> risky_object;
  std::vector<int> frame_labels;
  std::map<int, std::vector<int>> object_labels;  // object id -> per-frame label

  bool operator==(const LabelSet&) const = default;
};

struct SynthOutput {
  FrameSequence frames;
  BBoxTracks boxes;
  LabelSet labels;
};

SynthOutput synth_scenario(const ScenarioSpec& spec);

// Presets: "normal", "lane-merge", "rush-out", "oncoming".
const std::vector<std::string>& preset_names();
ScenarioSpec make_preset(std::string_view name, std::uint64_t seed);

// ---------------------------------------------------------------------------
// File formats

// EVT1: little-endian header {magic, u16 W, u16 H, u32 count} then 14-byte
// records {u16 x, u16 y, i8 p, u8 pad, u64 t}.
void write_events(const EventStream& stream, const std::filesystem::path& path);
EventStream read_events(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_events(const EventStream& stream);
EventStream decode_events(const std::vector<std::uint8_t>& bytes);

void write_pgm(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& pixels);
Frame read_pgm(const std::filesystem::path& path, int* width, int* height);

// Frames are stored as one PGM per frame plus a JSON-lines manifest {path, t_us}.
void write_frames(const FrameSequence& frames, const std::filesystem::path& dir);
FrameSequence read_frames(const std::filesystem::path& manifest, double fps);

void write_bboxes(const BBoxTracks& boxes, const std::filesystem::path& path);
BBoxTracks read_bboxes(const std::filesystem::path& path);

void write_labels(const LabelSet& labels, const std::filesystem::path& path);
LabelSet read_labels(const std::filesystem::path& path);

void write_scenario_spec(const ScenarioSpec& spec, const std::filesystem::path& path);
ScenarioSpec read_scenario_spec(const std::filesystem::path& path);

// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// On-disk scenario directory: scenario.json, frames.jsonl + frames/, events.evt,
// bboxes.csv, labels.json.
struct Scenario {
  std::string id;
  ScenarioSpec spec;
  FrameSequence frames;
  EventStream events;
  BBoxTracks boxes;
  LabelSet labels;
};

// Preset -> frames -> events in one go. `preset` may be "mix", which cycles the
// preset list by `index`.
Scenario generate_scenario(std::string_view preset, std::uint64_t seed, std::size_t index = 0,
                           const ConverterOptions& opts = {});

void write_scenario(const Scenario& scenario, const std::filesystem::path& dir);
Scenario load_scenario(const std::filesystem::path& dir);
// A dataset is either a scenario directory itself or a directory of them (sorted by name).
std::vector<std::filesystem::path> list_scenarios(const std::filesystem::path& root);

}  // namespace eae
