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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eae/archive.hpp"
#include "eae/event_io.hpp"
#include "eae/graph.hpp"
#include "eae/nn.hpp"

namespace eae {

struct ModelConfig {
  GraphConfig graph;
  int gnn_depth = 4;
  int gnn_channels = 8;
  int spline_lattice = 5;
  int feature_c1 = 4;   // toy extractor, first conv width
  int feature_c2 = 4;   // toy extractor, output channels C
  int object_dim = 16;  // width of f_{t,i}
  int hidden_box = 16;
  int hidden_feat = 16;
  int absent_drop_frames = 30;
  std::uint64_t seed = 1;

  int fused_dim() const { return gnn_channels + feature_c2; }
  int object_input_dim() const { return fused_dim() + 2 * feature_c2; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Dense H' x W' x C grid sampled at normalized coordinates; cell (i, j) sits at
// ((j + 0.5) / W', (i + 0.5) / H').
struct FeatureMap {
  int height = 1;
  int width = 1;
  int channels = 1;
  std::vector<double> values;  // row-major (i, j, c)
  std::string source = "toy-extractor";

  FeatureMap() = default;
  FeatureMap(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), values(static_cast<std::size_t>(h * w * c), fill) {}
  double at(int i, int j, int c) const {
    return values[(static_cast<std::size_t>(i) * static_cast<std::size_t>(width) + static_cast<std::size_t>(j)) *
                      static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)];
  }
  // Bilinear sample, clamped at the borders.
  nn::Vec sample(double x, double y) const;
  // Mean over cells whose centres fall inside the rectangle; falls back to the
  // centre sample when no centre does.
  nn::Vec box_average(const PixelRect& rect, int sensor_w, int sensor_h) const;
};

// Frozen two-layer convolutional extractor (3x3, stride 2, ReLU) standing in
// for an image backbone.
struct ToyExtractor {
  nn::Tensor conv1_w, conv1_b, conv2_w, conv2_b;

  template <typename F>
  void for_each(F&& f) {
    f("extractor.conv1_w", conv1_w);
    f("extractor.conv1_b", conv1_b);
    f("extractor.conv2_w", conv2_w);
    f("extractor.conv2_b", conv2_b);
  }
};

FeatureMap extract_features(const ToyExtractor& ex, const Frame& frame, int width, int height);

struct HybridModel {
  ModelConfig cfg;
  std::vector<nn::SplineKernel> gnn;
  nn::LinearParams object_fc;   // p -> f
  nn::GRUParams gru_box;        // over b_{t,i}
  nn::GRUParams gru_feat;       // over f_{t,i}
  nn::AttentionParams att_box;
  nn::AttentionParams att_feat;
  nn::LinearParams classifier;  // [h_b; h_f] -> 2 logits
  ToyExtractor extractor;

  // Seeded initialization from cfg.seed.
  static HybridModel create(const ModelConfig& cfg);
  // Same shapes, all zeros (gradient buffers).
  HybridModel zeros_like() const;

  template <typename F>
  void for_each_gnn(F&& f) {
    for (std::size_t l = 0; l < gnn.size(); ++l) gnn[l].for_each("gnn." + std::to_string(l), f);
  }
  template <typename F>
  void for_each_head(F&& f) {
    object_fc.for_each("object_fc", f);
    gru_box.for_each("gru_box", f);
    gru_feat.for_each("gru_feat", f);
    att_box.for_each("att_box", f);
    att_feat.for_each("att_feat", f);
    classifier.for_each("classifier", f);
  }
  template <typename F>
  void for_each_trainable(F&& f) {
    for_each_gnn(f);
    for_each_head(f);
  }
  template <typename F>
  void for_each_tensor(F&& f) {
    for_each_trainable(f);
    extractor.for_each(f);
  }
};

void save_model(const HybridModel& model, const std::filesystem::path& path);
HybridModel load_model(const std::filesystem::path& path);
TensorArchive model_to_archive(const HybridModel& model);
HybridModel model_from_archive(const TensorArchive& archive);

void save_feature_maps(const std::vector<FeatureMap>& maps, const std::filesystem::path& path);
std::vector<FeatureMap> load_feature_maps(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Event GNN

// Layer outputs for every node: out[0] holds the input features, out[l] the
// output of layer l (c = gnn_channels). pre[l - 1] keeps the pre-activation of
// layer l when requested (training).
struct GnnActivations {
  std::uint64_t version = 0;
  std::vector<nn::Vec> out;
  std::vector<nn::Vec> pre;

  std::size_t num_nodes(int channels) const {
    return out.empty() ? 0 : out.back().size() / static_cast<std::size_t>(channels);
  }
  std::span<const double> final_layer() const { return out.back(); }
};

int layer_in_dim(const HybridModel& model, int layer);
GnnActivations gnn_forward(const HybridModel& model, const EventGraph& graph, bool keep_pre = false);
// Serial reference of gnn_forward.
GnnActivations gnn_forward_serial(const HybridModel& model, const EventGraph& graph);

// Recomputes only the dirty nodes, layer by layer. Returns the number of
// (node, layer) evaluations performed.
std::size_t step_incremental(const HybridModel& model, const EventGraph& graph, const DirtySet& dirty,
                             GnnActivations& cache);

// Accumulates parameter gradients for dL/d(final layer) into grad.gnn.
void gnn_backward(const HybridModel& model, const EventGraph& graph, const GnnActivations& acts,
                  std::span<const double> d_final, HybridModel& grad);

// Fusion over a node set: rows [f_i, g(x_i)] of width gnn_channels + C.
std::vector<nn::Vec> fuse_node_features(const EventGraph& graph, std::span<const double> final_acts, int channels,
                                        std::span<const std::uint32_t> nodes, const FeatureMap& fmap);

// ---------------------------------------------------------------------------
// Object-level head

struct ObjectBox {
  int id = 0;
  PixelRect rect;
  std::array<double, 4> box{};  // normalized (cx, cy, w, h)
};

ObjectBox make_object_box(int id, const PixelRect& rect, int sensor_w, int sensor_h);

struct ObjectFeatureCache {
  bool valid = false;
  std::vector<std::uint32_t> nodes;
  std::vector<int> argmax;  // per fused channel: position in `nodes`, -1 when empty
  nn::LinearCache fc;
  nn::Vec pre;              // object_fc output before ReLU
};

// f = ReLU(object_fc([max-readout of fused crop nodes; centre sample; box mean]))
nn::Vec object_feature(const HybridModel& model, const EventGraph& graph, std::span<const double> final_acts,
                       std::span<const std::uint32_t> crop, const FeatureMap& fmap, const PixelRect& rect,
                       ObjectFeatureCache* cache = nullptr);

struct TrackState {
  nn::Vec h_box;
  nn::Vec h_feat;
  int last_seen = 0;
};

struct ObjectState {
  std::map<int, TrackState> tracks;
};

struct HeadInput {
  int id = 0;
  std::array<double, 4> box{};
  nn::Vec feature;
};

struct HeadCache {
  bool valid = false;
  std::vector<int> ids;
  std::vector<bool> fresh;  // state was (re)initialized to zero this frame
  std::vector<nn::GruCache> gru_box, gru_feat;
  nn::AttentionCache att_box, att_feat;
  std::vector<nn::LinearCache> cls;
  std::vector<nn::Vec> logits;
};

// Updates per-object recurrent state and returns (id, risk score) in input order.
std::vector<std::pair<int, double>> head_step(const HybridModel& model, ObjectState& state,
                                              std::span<const HeadInput> inputs, int frame_idx,
                                              HeadCache* cache = nullptr);

// ---------------------------------------------------------------------------
// Streaming

struct FramePacket {
  int frame_idx = 0;
  std::uint64_t t_us = 0;
  std::uint64_t window_begin = 0;  // inclusive
  std::uint64_t window_end = 0;    // exclusive (t_us + 1)
  std::vector<Event> events;       // all with t in [window_begin, window_end)
  FeatureMap fmap;
  std::vector<ObjectBox> objects;
};

struct TimelineFrame {
  int frame = 0;
  std::uint64_t t_us = 0;
  std::vector<std::pair<int, double>> objects;
  double frame_score = 0.0;
  double infer_us = 0.0;
};

struct RiskTimeline {
  std::string scenario_id;
  std::vector<TimelineFrame> frames;
};

std::string timeline_to_jsonl(const RiskTimeline& timeline);
RiskTimeline timeline_from_jsonl(std::string_view text, const std::string& scenario_id = {});

enum class FeatureSource { kExtractor, kZero, kExternal };

struct PacketOptions {
  FeatureSource source = FeatureSource::kExtractor;
  const std::vector<FeatureMap>* external = nullptr;  // one per frame for kExternal
};

std::vector<FramePacket> make_packets(const HybridModel& model, const Scenario& scenario,
                                      const PacketOptions& opts = {});

enum class ScoringMode { kBatch, kIncremental };

// One scoring session: owns the event graph, activation cache and object state.
// kBatch rebuilds the graph and re-runs the GNN on every frame; kIncremental
// inserts events one at a time and refreshes only dirty nodes.
class ScoringSession {
 public:
  ScoringSession(const HybridModel& model, ScoringMode mode);

  TimelineFrame step(const FramePacket& packet);

  const EventGraph& graph() const { return graph_; }
  const ObjectState& state() const { return state_; }
  std::size_t recomputed_nodes() const { return recomputed_; }

 private:
  const HybridModel& model_;
  ScoringMode mode_;
  EventGraph graph_;
  EventStream stream_;
  GnnActivations acts_;
  ObjectState state_;
  std::size_t recomputed_ = 0;
  bool started_ = false;
  std::uint64_t last_t_ = 0;
};

// Sub-frame stepping: splits every frame window into `substeps` partial windows.
// Partial windows carry the latest boxes and features available at that time
// (the previous frame's); the last one is the original packet.
std::vector<FramePacket> split_packets(const std::vector<FramePacket>& packets, int substeps);

RiskTimeline run_sequence(const HybridModel& model, const std::vector<FramePacket>& packets, ScoringMode mode);

// ---------------------------------------------------------------------------
// Training

struct PreparedObject {
  ObjectBox box;
  std::vector<std::uint32_t> crop;
  int label = 0;
};

struct PreparedFrame {
  int frame_idx = 0;
  std::uint64_t t_us = 0;
  FeatureMap fmap;
  std::vector<PreparedObject> objects;
};

// Everything about a scenario that does not depend on trainable parameters.
struct PreparedScenario {
  std::string id;
  EventGraph graph;
  std::vector<PreparedFrame> frames;
  LabelSet labels;
};

PreparedScenario prepare_scenario(const HybridModel& model, const Scenario& scenario, const PacketOptions& opts = {});

// One-shot scoring over a prepared scenario (equal to run_sequence by causality).
RiskTimeline score_prepared(const HybridModel& model, const PreparedScenario& scenario);

// Mean weighted cross-entropy over labelled object-frames; accumulates the
// gradient of that mean into `grad` (scaled by `grad_scale`) when non-null.
double scenario_loss(const HybridModel& model, const PreparedScenario& scenario, const nn::ClassWeights& weights,
                     HybridModel* grad, double grad_scale = 1.0);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double lr_head = 1e-3;
  double lr_gnn = 2e-4;
  double weight_decay = 1e-2;
  nn::ClassWeights class_weights;
  double plateau_factor = 0.5;
  int plateau_patience = 3;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
  std::vector<double> step_loss;   // mean batch loss per optimizer step
  std::vector<double> epoch_loss;  // mean over the epoch
};

using TrainObserver = std::function<void(int epoch, double epoch_loss)>;

TrainResult train(HybridModel& model, const std::vector<PreparedScenario>& data, const TrainConfig& cfg,
                  const TrainObserver& observer = {});

// Analytic FLOP count of one GNN pass per node, averaged over the graph.
double gnn_flops_per_event(const HybridModel& model, const EventGraph& graph);

}  // namespace eae
