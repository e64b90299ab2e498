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
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "eae/event_io.hpp"

namespace eae {

std::pair<double, double> ObjectTrack::center_at(std::uint64_t t_us) const {
  if (path.empty()) return {0.0, 0.0};
  if (t_us <= path.front().t_us) return {path.front().cx, path.front().cy};
  if (t_us >= path.back().t_us) return {path.back().cx, path.back().cy};
  for (std::size_t i = 1; i < path.size(); ++i) {
    const auto& a = path[i - 1];
    const auto& b = path[i];
    if (t_us <= b.t_us) {
      const double f = b.t_us == a.t_us ? 1.0
                                        : static_cast<double>(t_us - a.t_us) / static_cast<double>(b.t_us - a.t_us);
      return {a.cx + f * (b.cx - a.cx), a.cy + f * (b.cy - a.cy)};
    }
  }
  return {path.back().cx, path.back().cy};
}

void ScenarioSpec::validate() const {
  if (width <= 0 || height <= 0 || width > 65535 || height > 65535)
    throw InvalidInput("scenario dimensions out of range");
  if (duration_us == 0) throw InvalidInput("scenario duration must be positive");
  if (!(fps > 0.0)) throw InvalidInput("scenario fps must be positive");
  if (sensor_noise < 0.0) throw InvalidInput("sensor noise must be non-negative");
  std::set<int> ids;
  for (const auto& o : objects) {
    if (!ids.insert(o.id).second) throw InvalidInput("duplicate object id " + std::to_string(o.id));
    if (o.width < 1 || o.height < 1) throw InvalidInput("object size must be positive");
    if (o.path.empty()) throw InvalidInput("object " + std::to_string(o.id) + " has no waypoints");
    for (std::size_t i = 1; i < o.path.size(); ++i)
      if (o.path[i].t_us < o.path[i - 1].t_us) throw InvalidInput("waypoints out of order");
  }
  if (anomaly) {
    if (!ids.count(anomaly->object_id)) throw InvalidInput("anomalous object id not in scenario");
    if (!(anomaly->onset_us < anomaly->collision_us && anomaly->collision_us <= duration_us))
      throw InvalidInput("anomaly requires onset < collision <= duration");
  }
}

std::size_t ScenarioSpec::frame_count() const {
  const double n = std::floor(static_cast<double>(duration_us) * fps / 1e6 + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

std::uint64_t ScenarioSpec::frame_time(std::size_t k) const {
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(k) * 1e6 / fps));
}

SynthOutput synth_scenario(const ScenarioSpec& spec) {
  spec.validate();
  SynthOutput out;
  const std::size_t n = spec.frame_count();
  const int w = spec.width;
  const int h = spec.height;
  out.frames.width = w;
  out.frames.height = h;
  out.frames.fps = spec.fps;
  out.frames.frames.resize(n);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.sensor_noise > 0 ? spec.sensor_noise : 1.0);

  LabelSet& labels = out.labels;
  labels.frame_labels.assign(n, 0);
  for (const auto& o : spec.objects) labels.object_labels[o.id].assign(n, 0);
  if (spec.anomaly) {
    labels.risky_object = spec.anomaly->object_id;
    labels.collision_us = spec.anomaly->collision_us;
  }

  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t t = spec.frame_time(k);
    Frame& frame = out.frames.frames[k];
    frame.t_us = t;
    frame.pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), spec.background);
    const bool anomalous_frame = spec.anomaly && t >= spec.anomaly->onset_us;
    if (anomalous_frame) {
      labels.frame_labels[k] = 1;
      if (!labels.onset_us) labels.onset_us = t;
    }
    for (const auto& o : spec.objects) {
      const auto [cx, cy] = o.center_at(t);
      const int x0 = static_cast<int>(std::floor(cx - o.width / 2.0 + 0.5));
      const int y0 = static_cast<int>(std::floor(cy - o.height / 2.0 + 0.5));
      const int xa = std::max(0, x0), xb = std::min(w, x0 + o.width);
      const int ya = std::max(0, y0), yb = std::min(h, y0 + o.height);
      if (xa >= xb || ya >= yb) continue;
      for (int y = ya; y < yb; ++y)
        std::fill_n(frame.pixels.begin() + static_cast<std::ptrdiff_t>(y) * w + xa, xb - xa, o.intensity);
      out.boxes.push_back(BBox{static_cast<int>(k), o.id, xa, ya, xb, yb});
      if (anomalous_frame && o.id == spec.anomaly->object_id) labels.object_labels[o.id][k] = 1;
    }
    if (spec.sensor_noise > 0.0) {
      for (auto& px : frame.pixels) {
        const double v = std::round(static_cast<double>(px) + noise(rng));
        px = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  std::stable_sort(out.boxes.begin(), out.boxes.end(), [](const BBox& a, const BBox& b) {
    return a.frame_idx != b.frame_idx ? a.frame_idx < b.frame_idx : a.object_id < b.object_id;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Presets. Scene layout: 64x48 sensor, ego lane centred at x = 32, side lanes
// at x = 14 and x = 50, sidewalks at the image borders. Approaching objects
// move down the image.

namespace {

constexpr double kEgoLane = 32.0;
constexpr double kLeftLane = 14.0;
constexpr double kRightLane = 50.0;

class PresetBuilder {
 public:
  explicit PresetBuilder(std::uint64_t seed) : rng_(seed) {
    spec_.seed = seed;
  }

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  bool coin() { return std::bernoulli_distribution(0.5)(rng_); }
  std::uint8_t intensity() { return static_cast<std::uint8_t>(std::lround(uniform(140.0, 230.0))); }
  std::uint64_t us(double seconds) const { return static_cast<std::uint64_t>(std::llround(seconds * 1e6)); }
  double duration_s() const { return static_cast<double>(spec_.duration_us) / 1e6; }

  ObjectTrack& add(int w, int h) {
    ObjectTrack o;
    o.id = static_cast<int>(spec_.objects.size()) + 1;
    o.width = w;
    o.height = h;
    o.intensity = intensity();
    spec_.objects.push_back(o);
    return spec_.objects.back();
  }

  // Constant velocity (px/s) over the whole scenario.
  void straight(ObjectTrack& o, double x, double y, double vx, double vy) {
    const double d = duration_s();
    o.path = {{0, x, y}, {spec_.duration_us, x + vx * d, y + vy * d}};
  }

  void lead_car() {
    auto& o = add(10, 8);
    const double x = kEgoLane + uniform(-1.0, 1.0);
    const double y = uniform(10.0, 16.0);
    straight(o, x, y, 0.0, uniform(-2.0, 2.0));
  }

  void side_car(double lane) {
    auto& o = add(8, 6);
    const double x = lane + uniform(-1.0, 1.0);
    const double y = uniform(10.0, 38.0);
    const double vx = uniform(-0.5, 0.5);
    straight(o, x, y, vx, uniform(-8.0, 8.0));
  }

  void oncoming_car() {
    auto& o = add(8, 6);
    const double x = kLeftLane + uniform(-1.0, 1.0);
    const double y = uniform(2.0, 14.0);
    straight(o, x, y, 0.0, uniform(6.0, 12.0));
  }

  void pedestrian() {
    auto& o = add(3, 7);
    const double x = coin() ? uniform(1.5, 3.5) : uniform(60.5, 62.5);
    const double y = uniform(16.0, 36.0);
    straight(o, x, y, 0.0, uniform(-4.0, 4.0));
  }

  void distractors(int count) {
    for (int i = 0; i < count; ++i) {
      switch (std::uniform_int_distribution<int>(0, 3)(rng_)) {
        case 0: side_car(coin() ? kLeftLane : kRightLane); break;
        case 1: oncoming_car(); break;
        case 2: pedestrian(); break;
        default: side_car(kRightLane); break;
      }
    }
  }

  // Object moves with (vx0, vy0) until onset, then heads for the ego lane at
  // lateral speed `lateral` (px/s) with vertical speed vy1; collision when it
  // reaches the ego-lane centre, after which it stays put.
  void cut_in(ObjectTrack& o, double x0, double y0, double vx0, double vy0, double lateral, double vy1) {
    const double onset = uniform(0.8, 1.4);
    const double xo = x0 + vx0 * onset;
    const double yo = y0 + vy0 * onset;
    const double dx = kEgoLane - xo;
    const double latest = duration_s() - 0.1 - onset;
    const double travel = std::min(std::abs(dx) / lateral, latest);
    const double collision = onset + travel;
    const double yc = yo + vy1 * travel;
    o.path = {{0, x0, y0}, {us(onset), xo, yo}, {us(collision), kEgoLane, yc}, {spec_.duration_us, kEgoLane, yc}};
    spec_.anomaly = AnomalySpec{o.id, us(onset), us(collision)};
  }

  ScenarioSpec take() { return std::move(spec_); }

 private:
  std::mt19937_64 rng_;
  ScenarioSpec spec_;
};

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"lane-merge", "rush-out", "oncoming", "normal"};
  return names;
}

ScenarioSpec make_preset(std::string_view name, std::uint64_t seed) {
  PresetBuilder b(seed);
  // Random draws are sequenced explicitly; argument evaluation order is unspecified.
  if (name == "normal") {
    b.lead_car();
    b.distractors(1 + static_cast<int>(b.uniform(0.0, 2.0)));
  } else if (name == "lane-merge") {
    b.lead_car();
    b.distractors(1);
    const double x0 = b.coin() ? kLeftLane : kRightLane;
    const double y0 = b.uniform(22.0, 32.0);
    const double vy0 = b.uniform(-3.0, 3.0);
    const double lateral = b.uniform(13.0, 18.0);
    const double vy1 = b.uniform(2.0, 6.0);
    b.cut_in(b.add(8, 6), x0, y0, 0.0, vy0, lateral, vy1);
  } else if (name == "rush-out") {
    b.lead_car();
    b.distractors(1);
    const double x0 = b.coin() ? b.uniform(1.5, 3.5) : b.uniform(60.5, 62.5);
    const double y0 = b.uniform(24.0, 36.0);
    const double lateral = b.uniform(25.0, 35.0);
    b.cut_in(b.add(3, 7), x0, y0, 0.0, 0.0, lateral, 0.0);
  } else if (name == "oncoming") {
    b.lead_car();
    b.distractors(1);
    const double x0 = kLeftLane + b.uniform(-1.0, 1.0);
    const double y0 = b.uniform(4.0, 12.0);
    const double vy0 = b.uniform(6.0, 12.0);
    const double lateral = b.uniform(12.0, 16.0);
    const double vy1 = b.uniform(6.0, 12.0);
    b.cut_in(b.add(8, 6), x0, y0, 0.0, vy0, lateral, vy1);
  } else {
    throw InvalidInput("unknown preset '" + std::string(name) + "'");
  }
  return b.take();
}

Scenario generate_scenario(std::string_view preset, std::uint64_t seed, std::size_t index,
                           const ConverterOptions& opts) {
  const auto& names = preset_names();
  const std::string name = preset == "mix" ? names[index % names.size()] : std::string(preset);
  Scenario sc;
  char id[96];
  std::snprintf(id, sizeof(id), "%s-%05zu-s%llu", name.c_str(), index, static_cast<unsigned long long>(seed));
  sc.id = id;
  sc.spec = make_preset(name, seed);
  SynthOutput out = synth_scenario(sc.spec);
  sc.frames = std::move(out.frames);
  sc.boxes = std::move(out.boxes);
  sc.labels = std::move(out.labels);
  sc.events = frames_to_events(sc.frames, opts);
  return sc;
}

}  // namespace eae
