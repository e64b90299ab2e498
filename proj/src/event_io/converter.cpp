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
#include <random>

#include "eae/event_io.hpp"

namespace eae {

void FrameSequence::validate() const {
  if (frames.empty()) throw InvalidInput("frame sequence is empty");
  if (width <= 0 || height <= 0 || width > 65535 || height > 65535)
    throw InvalidInput("frame dimensions out of range");
  if (!(fps > 0.0)) throw InvalidInput("fps must be positive");
  const std::size_t npix = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const double period = 1e6 / fps;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].pixels.size() != npix) throw InvalidInput("frame " + std::to_string(k) + " has wrong size");
    if (k == 0) continue;
    if (frames[k].t_us <= frames[k - 1].t_us) throw InvalidInput("frame timestamps not strictly increasing");
    const double dt = static_cast<double>(frames[k].t_us - frames[k - 1].t_us);
    if (std::abs(dt - period) > 0.01 * period) throw InvalidInput("frame interval inconsistent with fps");
  }
}

namespace {

double intensity_value(std::uint8_t v, bool linear) {
  return linear ? static_cast<double>(v) : std::log1p(static_cast<double>(v));
}

// Emits the events of one pixel into `out`.
void convert_pixel(const FrameSequence& seq, std::size_t pix, int x, int y, const ConverterOptions& opts,
                   std::vector<Event>& out) {
  const double c = opts.threshold;
  double ref = intensity_value(seq.frames[0].pixels[pix], opts.linear);
  bool fired = false;
  std::uint64_t last_t = 0;
  for (std::size_t k = 1; k < seq.frames.size(); ++k) {
    const double a = intensity_value(seq.frames[k - 1].pixels[pix], opts.linear);
    const double b = intensity_value(seq.frames[k].pixels[pix], opts.linear);
    const double d = b - ref;
    if (!(std::abs(d) > c)) continue;
    const auto crossings = static_cast<long>(std::floor(std::abs(d) / c));
    const double sign = d > 0 ? 1.0 : -1.0;
    const std::uint64_t ta = seq.frames[k - 1].t_us;
    const std::uint64_t tb = seq.frames[k].t_us;
    const double span = static_cast<double>(tb - ta);
    for (long m = 1; m <= crossings; ++m) {
      const double level = ref + sign * static_cast<double>(m) * c;
      const double frac = std::clamp((level - a) / (b - a), 0.0, 1.0);
      const std::uint64_t t = ta + static_cast<std::uint64_t>(std::llround(frac * span));
      if (opts.refractory_us > 0 && fired && t - last_t < opts.refractory_us) continue;
      out.push_back(Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                          static_cast<std::int8_t>(sign > 0 ? 1 : -1), t});
      fired = true;
      last_t = t;
    }
    ref += sign * static_cast<double>(crossings) * c;
  }
}

}  // namespace

EventStream frames_to_events(const FrameSequence& frames, const ConverterOptions& opts) {
  if (frames.frames.empty()) throw InvalidInput("frames_to_events: empty frame sequence");
  if (frames.frames.size() < 2) throw InvalidInput("frames_to_events: need at least two frames");
  if (!(opts.threshold > 0.0)) throw InvalidInput("frames_to_events: threshold must be positive");
  frames.validate();

  const int w = frames.width;
  const int h = frames.height;
  std::vector<std::vector<Event>> rows(static_cast<std::size_t>(h));

#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < h; ++y) {
    auto& row = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      convert_pixel(frames, pix, x, y, opts, row);
    }
  }

  EventStream out;
  out.width = static_cast<std::uint16_t>(w);
  out.height = static_cast<std::uint16_t>(h);
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  out.events.reserve(total);
  for (auto& r : rows) out.events.insert(out.events.end(), r.begin(), r.end());
  std::stable_sort(out.events.begin(), out.events.end(), event_order);
  return out;
}

EventStream add_noise(const EventStream& stream, double rate_hz_per_pixel, std::uint64_t t_begin,
                      std::uint64_t t_end, std::uint64_t seed) {
  if (rate_hz_per_pixel < 0.0) throw InvalidInput("noise rate must be non-negative");
  EventStream out = stream;
  if (rate_hz_per_pixel == 0.0 || t_end <= t_begin) return out;
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate_hz_per_pixel * 1e-6);
  std::bernoulli_distribution pol(0.5);
  for (int y = 0; y < stream.height; ++y) {
    for (int x = 0; x < stream.width; ++x) {
      double t = static_cast<double>(t_begin) + gap(rng);
      while (t < static_cast<double>(t_end)) {
        out.events.push_back(Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                   static_cast<std::int8_t>(pol(rng) ? 1 : -1), static_cast<std::uint64_t>(t)});
        t += gap(rng);
      }
    }
  }
  std::stable_sort(out.events.begin(), out.events.end(), event_order);
  return out;
}

}  // namespace eae
