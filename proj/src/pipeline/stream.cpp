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
#include <chrono>
#include <sstream>

#include "eae/pipeline.hpp"

namespace eae {

std::string timeline_to_jsonl(const RiskTimeline& timeline) {
  std::string out;
  for (const auto& f : timeline.frames) {
    nlohmann::json objs = nlohmann::json::object();
    for (const auto& [id, s] : f.objects) objs[std::to_string(id)] = s;
    const nlohmann::json line = {{"frame", f.frame},     {"t_us", f.t_us},         {"objects", objs},
                                 {"frame_score", f.frame_score}, {"infer_us", f.infer_us}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

RiskTimeline timeline_from_jsonl(std::string_view text, const std::string& scenario_id) {
  RiskTimeline tl;
  tl.scenario_id = scenario_id;
  std::istringstream in{std::string(text)};
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t here = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TimelineFrame f;
      f.frame = j.at("frame").get<int>();
      f.t_us = j.at("t_us").get<std::uint64_t>();
      for (const auto& [key, score] : j.at("objects").items()) {
        std::size_t used = 0;
        const int id = std::stoi(key, &used);
        if (used != key.size()) throw ParseError(ParseError::Kind::kFormat, here, "object id is not an integer: " + key);
        f.objects.emplace_back(id, score.get<double>());
      }
      std::sort(f.objects.begin(), f.objects.end());
      f.frame_score = j.at("frame_score").get<double>();
      f.infer_us = j.value("infer_us", 0.0);
      tl.frames.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(ParseError::Kind::kFormat, here, std::string("score line: ") + e.what());
    } catch (const std::logic_error& e) {  // stoi
      throw ParseError(ParseError::Kind::kFormat, here, std::string("score line: ") + e.what());
    }
  }
  return tl;
}

namespace {

void check_sensor(const HybridModel& model, const Scenario& s) {
  const auto& g = model.cfg.graph;
  if (s.frames.width != g.width || s.frames.height != g.height)
    throw ConfigError("scenario sensor " + std::to_string(s.frames.width) + "x" + std::to_string(s.frames.height) +
                      " does not match model sensor " + std::to_string(g.width) + "x" + std::to_string(g.height));
}

FeatureMap frame_features(const HybridModel& model, const Scenario& s, std::size_t k, const PacketOptions& opts) {
  const auto& g = model.cfg.graph;
  switch (opts.source) {
    case FeatureSource::kExtractor:
      return extract_features(model.extractor, s.frames.frames[k], g.width, g.height);
    case FeatureSource::kZero: {
      FeatureMap fm((g.height + 3) / 4, (g.width + 3) / 4, model.cfg.feature_c2, 0.0);
      fm.source = "zero";
      return fm;
    }
    case FeatureSource::kExternal:
      if (!opts.external || opts.external->size() != s.frames.frames.size())
        throw InvalidInput("external feature maps must provide one map per frame");
      if ((*opts.external)[k].channels != model.cfg.feature_c2)
        throw InvalidInput("external feature maps have the wrong channel count");
      return (*opts.external)[k];
  }
  throw InvalidInput("unknown feature source");
}

// [begin, end) of the frame-k window: (t_{k-1}, t_k].
std::pair<std::uint64_t, std::uint64_t> frame_window(const FrameSequence& frames, std::size_t k) {
  const std::uint64_t begin = k == 0 ? 0 : frames.frames[k - 1].t_us + 1;
  return {begin, frames.frames[k].t_us + 1};
}

}  // namespace

std::vector<FramePacket> make_packets(const HybridModel& model, const Scenario& scenario, const PacketOptions& opts) {
  check_sensor(model, scenario);
  scenario.frames.validate();
  const auto& g = model.cfg.graph;
  std::vector<FramePacket> packets;
  const auto& ev = scenario.events.events;
  std::size_t cursor = 0;
  std::size_t box_cursor = 0;
  for (std::size_t k = 0; k < scenario.frames.frames.size(); ++k) {
    FramePacket p;
    p.frame_idx = static_cast<int>(k);
    p.t_us = scenario.frames.frames[k].t_us;
    std::tie(p.window_begin, p.window_end) = frame_window(scenario.frames, k);
    while (cursor < ev.size() && ev[cursor].t < p.window_end) p.events.push_back(ev[cursor++]);
    p.fmap = frame_features(model, scenario, k, opts);
    while (box_cursor < scenario.boxes.size() && scenario.boxes[box_cursor].frame_idx < p.frame_idx) ++box_cursor;
    for (std::size_t b = box_cursor; b < scenario.boxes.size() && scenario.boxes[b].frame_idx == p.frame_idx; ++b) {
      const auto& bb = scenario.boxes[b];
      p.objects.push_back(make_object_box(bb.object_id, {bb.x_min, bb.y_min, bb.x_max, bb.y_max}, g.width, g.height));
    }
    packets.push_back(std::move(p));
  }
  return packets;
}

// ---------------------------------------------------------------------------

ScoringSession::ScoringSession(const HybridModel& model, ScoringMode mode)
    : model_(model), mode_(mode), graph_(model.cfg.graph) {
  stream_.width = static_cast<std::uint16_t>(model.cfg.graph.width);
  stream_.height = static_cast<std::uint16_t>(model.cfg.graph.height);
  acts_.version = graph_.version();
}

TimelineFrame ScoringSession::step(const FramePacket& packet) {
  if (started_ && packet.t_us <= last_t_) throw InvalidInput("frame packets must arrive in time order");
  if (packet.window_end <= packet.window_begin || packet.window_end != packet.t_us + 1)
    throw InvalidInput("frame packet window must end right after the frame timestamp");
  for (const auto& e : packet.events)
    if (e.t < packet.window_begin || e.t >= packet.window_end) throw InvalidInput("packet event outside its window");
  const auto t0 = std::chrono::steady_clock::now();

  if (mode_ == ScoringMode::kBatch) {
    stream_.events.insert(stream_.events.end(), packet.events.begin(), packet.events.end());
    graph_ = build_graph(stream_, model_.cfg.graph);
    acts_ = gnn_forward(model_, graph_);
    recomputed_ += graph_.num_nodes() * static_cast<std::size_t>(model_.cfg.gnn_depth);
  } else {
    DirtySet dirty;
    dirty.base_version = dirty.version = graph_.version();
    for (const auto& e : packet.events) dirty.merge(insert_event(graph_, e, model_.cfg.gnn_depth));
    recomputed_ += step_incremental(model_, graph_, dirty, acts_);
  }

  std::vector<HeadInput> inputs;
  inputs.reserve(packet.objects.size());
  for (const auto& ob : packet.objects) {
    const auto crop = crop_nodes(graph_, ob.rect, packet.window_begin, packet.window_end);
    inputs.push_back({ob.id, ob.box, object_feature(model_, graph_, acts_.final_layer(), crop, packet.fmap, ob.rect)});
  }
  TimelineFrame f;
  f.frame = packet.frame_idx;
  f.t_us = packet.t_us;
  f.objects = head_step(model_, state_, inputs, packet.frame_idx);
  for (const auto& [id, s] : f.objects) f.frame_score = std::max(f.frame_score, s);
  f.infer_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
  started_ = true;
  last_t_ = packet.t_us;
  return f;
}

std::vector<FramePacket> split_packets(const std::vector<FramePacket>& packets, int substeps) {
  if (substeps < 1) throw InvalidInput("substeps must be >= 1");
  if (substeps == 1) return packets;
  std::vector<FramePacket> out;
  for (std::size_t k = 0; k < packets.size(); ++k) {
    const auto& p = packets[k];
    const std::uint64_t span = p.window_end - p.window_begin;
    std::uint64_t begin = p.window_begin;
    std::size_t cursor = 0;
    for (int s = 1; s <= substeps; ++s) {
      const std::uint64_t end = s == substeps ? p.window_end : p.window_begin + span * static_cast<std::uint64_t>(s) / static_cast<std::uint64_t>(substeps);
      if (end <= begin) continue;
      FramePacket q;
      q.frame_idx = p.frame_idx;
      q.t_us = end - 1;
      q.window_begin = begin;
      q.window_end = end;
      while (cursor < p.events.size() && p.events[cursor].t < end) q.events.push_back(p.events[cursor++]);
      // before the frame arrives only the previous frame's boxes and features exist
      if (s == substeps || k == 0) {
        q.fmap = p.fmap;
        q.objects = s == substeps ? p.objects : std::vector<ObjectBox>{};
      } else {
        q.fmap = packets[k - 1].fmap;
        q.objects = packets[k - 1].objects;
      }
      out.push_back(std::move(q));
      begin = end;
    }
  }
  return out;
}

RiskTimeline run_sequence(const HybridModel& model, const std::vector<FramePacket>& packets, ScoringMode mode) {
  ScoringSession session(model, mode);
  RiskTimeline tl;
  for (const auto& p : packets) tl.frames.push_back(session.step(p));
  return tl;
}

}  // namespace eae
