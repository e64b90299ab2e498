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
#include <limits>
#include <set>

#include "eae/pipeline.hpp"

namespace eae {

ObjectBox make_object_box(int id, const PixelRect& rect, int sensor_w, int sensor_h) {
  if (rect.x_max <= rect.x_min || rect.y_max <= rect.y_min) throw InvalidInput("object box is empty");
  ObjectBox b;
  b.id = id;
  b.rect = rect;
  b.box = {0.5 * (rect.x_min + rect.x_max) / sensor_w, 0.5 * (rect.y_min + rect.y_max) / sensor_h,
           static_cast<double>(rect.x_max - rect.x_min) / sensor_w,
           static_cast<double>(rect.y_max - rect.y_min) / sensor_h};
  return b;
}

nn::Vec object_feature(const HybridModel& model, const EventGraph& graph, std::span<const double> final_acts,
                       std::span<const std::uint32_t> crop, const FeatureMap& fmap, const PixelRect& rect,
                       ObjectFeatureCache* cache) {
  const auto& cfg = model.cfg;
  if (fmap.channels != cfg.feature_c2) throw InvalidInput("feature map channel count does not match the model");
  const auto fused = static_cast<std::size_t>(cfg.fused_dim());

  nn::Vec p(fused, 0.0);
  std::vector<int> argmax(fused, -1);
  if (!crop.empty()) {
    std::fill(p.begin(), p.end(), -std::numeric_limits<double>::infinity());
    const auto rows = fuse_node_features(graph, final_acts, cfg.gnn_channels, crop, fmap);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < fused; ++c) {
        if (rows[r][c] > p[c]) {
          p[c] = rows[r][c];
          argmax[c] = static_cast<int>(r);
        }
      }
    }
  }
  const auto w = cfg.graph.width;
  const auto h = cfg.graph.height;
  const nn::Vec centre = fmap.sample(0.5 * (rect.x_min + rect.x_max) / w, 0.5 * (rect.y_min + rect.y_max) / h);
  const nn::Vec mean = fmap.box_average(rect, w, h);
  p.insert(p.end(), centre.begin(), centre.end());
  p.insert(p.end(), mean.begin(), mean.end());

  nn::LinearCache* fc = cache ? &cache->fc : nullptr;
  nn::Vec pre = nn::linear_forward(p, model.object_fc, fc);
  nn::Vec f = nn::relu(pre);
  if (cache) {
    cache->valid = true;
    cache->nodes.assign(crop.begin(), crop.end());
    cache->argmax = std::move(argmax);
    cache->pre = std::move(pre);
  }
  return f;
}

std::vector<std::pair<int, double>> head_step(const HybridModel& model, ObjectState& state,
                                              std::span<const HeadInput> inputs, int frame_idx, HeadCache* cache) {
  std::vector<std::pair<int, double>> scores;
  if (cache) *cache = HeadCache{};
  if (inputs.empty()) {
    if (cache) cache->valid = true;
    return scores;
  }
  const auto& cfg = model.cfg;
  {
    std::set<int> ids;
    for (const auto& in : inputs)
      if (!ids.insert(in.id).second) throw InvalidInput("duplicate object id " + std::to_string(in.id));
  }
  const std::size_t n = inputs.size();
  std::vector<nn::Vec> hb(n), hf(n);
  std::vector<bool> fresh(n);
  if (cache) {
    cache->gru_box.resize(n);
    cache->gru_feat.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& in = inputs[i];
    if (in.feature.size() != static_cast<std::size_t>(cfg.object_dim))
      throw InvalidInput("object feature width does not match the model");
    const auto it = state.tracks.find(in.id);
    fresh[i] = it == state.tracks.end() || frame_idx - it->second.last_seen > cfg.absent_drop_frames;
    const nn::Vec zb(static_cast<std::size_t>(cfg.hidden_box), 0.0);
    const nn::Vec zf(static_cast<std::size_t>(cfg.hidden_feat), 0.0);
    const nn::Vec& prev_b = fresh[i] ? zb : it->second.h_box;
    const nn::Vec& prev_f = fresh[i] ? zf : it->second.h_feat;
    hb[i] = nn::gru_step(in.box, prev_b, model.gru_box, cache ? &cache->gru_box[i] : nullptr);
    hf[i] = nn::gru_step(in.feature, prev_f, model.gru_feat, cache ? &cache->gru_feat[i] : nullptr);
  }
  const auto ab = nn::attention(hb, model.att_box, cache ? &cache->att_box : nullptr);
  const auto af = nn::attention(hf, model.att_feat, cache ? &cache->att_feat : nullptr);
  if (cache) {
    cache->cls.resize(n);
    cache->logits.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    nn::Vec z = ab.weighted[i];
    z.insert(z.end(), af.weighted[i].begin(), af.weighted[i].end());
    nn::Vec logits = nn::linear_forward(z, model.classifier, cache ? &cache->cls[i] : nullptr);
    const nn::Vec prob = nn::softmax(logits);
    scores.emplace_back(inputs[i].id, prob[1]);
    if (cache) cache->logits[i] = std::move(logits);
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& tr = state.tracks[inputs[i].id];
    tr.h_box = std::move(hb[i]);
    tr.h_feat = std::move(hf[i]);
    tr.last_seen = frame_idx;
  }
  std::erase_if(state.tracks,
                [&](const auto& kv) { return frame_idx - kv.second.last_seen > cfg.absent_drop_frames; });
  if (cache) {
    cache->valid = true;
    for (const auto& in : inputs) cache->ids.push_back(in.id);
    cache->fresh = std::move(fresh);
  }
  return scores;
}

}  // namespace eae
