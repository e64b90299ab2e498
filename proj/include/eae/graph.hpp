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
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eae/event_io.hpp"

namespace eae {

struct GraphConfig {
  double radius = 0.03;          // R, in normalized (x, y, beta * t) units
  double beta = 1.0 / 3.0e6;     // timestamp scale per microsecond
  int max_neighbors = 16;
  int width = 64;
  int height = 48;
  std::uint64_t window_us = 50'000;  // frame period; drives the node time-offset feature

  void validate() const;
  bool operator==(const GraphConfig&) const = default;
};

struct GraphNode {
  double x = 0.0;  // u / W
  double y = 0.0;  // v / H
  double t = 0.0;  // beta * t_us
  std::uint64_t t_us = 0;
  std::uint16_t px = 0;
  std::uint16_t py = 0;
  std::int8_t polarity = 1;

  bool operator==(const GraphNode&) const = default;
};

// Directed edge src -> dst; src is never later than dst. `feature` follows
// e = (n_src - n_dst) / 2 + 1/2 over normalized spatial positions.
struct GraphEdge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::array<double, 2> feature{0.5, 0.5};

  bool operator==(const GraphEdge&) const = default;
};

struct PixelRect {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;  // exclusive
  int y_max = 0;  // exclusive

  bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
};

// Per-layer dirty node sets produced by an insertion. layers[l] lists (sorted)
// the nodes whose output of layer l + 1 must be recomputed, i.e. the nodes
// within l + 1 hops of the inserted node along outgoing edges.
struct DirtySet {
  std::uint64_t base_version = 0;
  std::uint64_t version = 0;
  std::vector<std::vector<std::uint32_t>> layers;

  // Appends a later dirty set (its base must be this set's version).
  void merge(const DirtySet& later);
  bool empty() const;
};

std::array<double, 2> edge_feature(std::array<double, 2> pos_i, std::array<double, 2> pos_j);

class EventGraph {
 public:
  static constexpr int kEventFeatureDim = 2;  // (polarity, time offset within window)

  explicit EventGraph(GraphConfig cfg = {}, int feature_dim = kEventFeatureDim);

  const GraphConfig& config() const { return cfg_; }
  int feature_dim() const { return feature_dim_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const std::vector<double>& features() const { return features_; }
  std::span<const double> feature(std::size_t i) const {
    return {features_.data() + i * static_cast<std::size_t>(feature_dim_), static_cast<std::size_t>(feature_dim_)};
  }
  // Incoming edges of node i occupy edges()[in_begin(i), in_end(i)).
  std::size_t in_begin(std::size_t i) const { return in_offsets_[i]; }
  std::size_t in_end(std::size_t i) const { return in_offsets_[i + 1]; }
  const std::vector<std::uint32_t>& out_edges(std::size_t i) const { return out_edges_[i]; }
  // Bumped on every mutation.
  std::uint64_t version() const { return version_; }

  GraphNode make_node(const Event& e) const;
  std::array<double, kEventFeatureDim> event_features(const Event& e) const;

  // Appends a node whose incoming edges are selected among all existing nodes
  // (radius, cap, tie-break). The node must not be earlier than the last one.
  std::uint32_t append(const GraphNode& node, std::span<const double> features);

  // Builds from explicit parts (used by crop); edges must be grouped by dst.
  static EventGraph from_parts(GraphConfig cfg, int feature_dim, std::vector<GraphNode> nodes,
                               std::vector<double> features, std::vector<GraphEdge> edges);

  // Candidate in-neighbours of `node` among nodes [0, limit), already capped and ordered.
  std::vector<std::uint32_t> select_neighbors(const GraphNode& node, std::size_t limit) const;

 private:
  struct CellKey {
    std::int64_t x, y, t;
    bool operator==(const CellKey&) const = default;
  };
  struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
      return static_cast<std::size_t>(k.x * 73856093LL) ^ static_cast<std::size_t>(k.y * 19349663LL) ^
             static_cast<std::size_t>(k.t * 83492791LL);
    }
  };

  CellKey cell_of(const GraphNode& n) const;
  void index_node(std::uint32_t idx);
  void push_edges(std::uint32_t dst, const std::vector<std::uint32_t>& srcs);

  GraphConfig cfg_;
  int feature_dim_;
  std::vector<GraphNode> nodes_;
  std::vector<double> features_;
  std::vector<GraphEdge> edges_;
  std::vector<std::size_t> in_offsets_{0};
  std::vector<std::vector<std::uint32_t>> out_edges_;
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> grid_;
  std::uint64_t version_ = 0;

  friend EventGraph build_graph(const EventStream&, const GraphConfig&);
};

// Batch construction; neighbour search runs in parallel across nodes.
EventGraph build_graph(const EventStream& events, const GraphConfig& cfg);
// Serial reference: folds insert_event over the stream.
EventGraph build_graph_serial(const EventStream& events, const GraphConfig& cfg);

// Streaming insertion; returns the dirty sets for a network of `depth` layers.
DirtySet insert_event(EventGraph& graph, const Event& event, int depth);

struct VoxelGrid {
  int nx = 1;
  int ny = 1;
  int nt = 1;
};

// Voxel index of every node (x-major, then y, then time bin).
std::vector<std::size_t> voxel_assignment(const EventGraph& graph, const VoxelGrid& grid);
EventGraph voxel_pool(const EventGraph& graph, const VoxelGrid& grid);

// Nodes inside the half-open pixel rectangle with t_us in [t0, t1), ascending.
std::vector<std::uint32_t> crop_nodes(const EventGraph& graph, const PixelRect& box, std::uint64_t t0,
                                      std::uint64_t t1);
EventGraph crop_graph(const EventGraph& graph, const PixelRect& box, std::uint64_t t0, std::uint64_t t1);

// Debug dump (not a stable interchange format).
std::string graph_to_json(const EventGraph& graph);

}  // namespace eae
