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
#include <map>

#include <json.hpp>

#include "eae/graph.hpp"

namespace eae {

void GraphConfig::validate() const {
  if (!(radius > 0.0)) throw InvalidInput("graph radius must be positive");
  if (!(beta > 0.0)) throw InvalidInput("graph beta must be positive");
  if (max_neighbors < 1) throw InvalidInput("max_neighbors must be >= 1");
  if (width <= 0 || height <= 0) throw InvalidInput("graph sensor size must be positive");
}

std::array<double, 2> edge_feature(std::array<double, 2> pos_i, std::array<double, 2> pos_j) {
  return {0.5 * (pos_j[0] - pos_i[0]) + 0.5, 0.5 * (pos_j[1] - pos_i[1]) + 0.5};
}

void DirtySet::merge(const DirtySet& later) {
  if (later.base_version != version) throw StateError("dirty sets are not contiguous");
  if (layers.empty()) layers.resize(later.layers.size());
  if (later.layers.size() != layers.size()) throw StateError("dirty sets have different depths");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<std::uint32_t> merged;
    std::set_union(layers[l].begin(), layers[l].end(), later.layers[l].begin(), later.layers[l].end(),
                   std::back_inserter(merged));
    layers[l] = std::move(merged);
  }
  version = later.version;
}

bool DirtySet::empty() const {
  return std::all_of(layers.begin(), layers.end(), [](const auto& l) { return l.empty(); });
}

EventGraph::EventGraph(GraphConfig cfg, int feature_dim) : cfg_(cfg), feature_dim_(feature_dim) {
  cfg_.validate();
  if (feature_dim_ < 1) throw InvalidInput("feature dimension must be positive");
}

GraphNode EventGraph::make_node(const Event& e) const {
  GraphNode n;
  n.x = static_cast<double>(e.x) / static_cast<double>(cfg_.width);
  n.y = static_cast<double>(e.y) / static_cast<double>(cfg_.height);
  n.t = cfg_.beta * static_cast<double>(e.t);
  n.t_us = e.t;
  n.px = e.x;
  n.py = e.y;
  n.polarity = e.p;
  return n;
}

std::array<double, EventGraph::kEventFeatureDim> EventGraph::event_features(const Event& e) const {
  const double offset =
      cfg_.window_us > 0 ? static_cast<double>(e.t % cfg_.window_us) / static_cast<double>(cfg_.window_us) : 0.0;
  return {e.p > 0 ? 1.0 : -1.0, offset};
}

EventGraph::CellKey EventGraph::cell_of(const GraphNode& n) const {
  return CellKey{static_cast<std::int64_t>(std::floor(n.x / cfg_.radius)),
                 static_cast<std::int64_t>(std::floor(n.y / cfg_.radius)),
                 static_cast<std::int64_t>(std::floor(n.t / cfg_.radius))};
}

void EventGraph::index_node(std::uint32_t idx) { grid_[cell_of(nodes_[idx])].push_back(idx); }

std::vector<std::uint32_t> EventGraph::select_neighbors(const GraphNode& node, std::size_t limit) const {
  struct Candidate {
    double d2;
    std::uint64_t t_us;
    std::uint32_t idx;
  };
  const double r2 = cfg_.radius * cfg_.radius;
  const CellKey c = cell_of(node);
  std::vector<Candidate> cand;
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dt = -1; dt <= 1; ++dt) {
        const auto it = grid_.find(CellKey{c.x + dx, c.y + dy, c.t + dt});
        if (it == grid_.end()) continue;
        for (const std::uint32_t j : it->second) {
          if (j >= limit) break;  // cell lists are ascending
          const GraphNode& o = nodes_[j];
          const double ddx = o.x - node.x;
          const double ddy = o.y - node.y;
          const double ddt = o.t - node.t;
          const double d2 = ddx * ddx + ddy * ddy + ddt * ddt;
          if (d2 <= r2) cand.push_back({d2, o.t_us, j});
        }
      }
    }
  }
  // nearest first, then most recent, then lowest index
  const auto better = [](const Candidate& a, const Candidate& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    if (a.t_us != b.t_us) return a.t_us > b.t_us;
    return a.idx < b.idx;
  };
  const std::size_t keep = std::min(cand.size(), static_cast<std::size_t>(cfg_.max_neighbors));
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), better);
  std::vector<std::uint32_t> out(keep);
  for (std::size_t k = 0; k < keep; ++k) out[k] = cand[k].idx;
  return out;
}

void EventGraph::push_edges(std::uint32_t dst, const std::vector<std::uint32_t>& srcs) {
  const GraphNode& d = nodes_[dst];
  for (const std::uint32_t s : srcs) {
    const GraphNode& n = nodes_[s];
    out_edges_[s].push_back(static_cast<std::uint32_t>(edges_.size()));
    edges_.push_back(GraphEdge{s, dst, edge_feature({d.x, d.y}, {n.x, n.y})});
  }
  in_offsets_.push_back(edges_.size());
}

std::uint32_t EventGraph::append(const GraphNode& node, std::span<const double> features) {
  if (features.size() != static_cast<std::size_t>(feature_dim_)) throw InvalidInput("node feature size mismatch");
  if (!nodes_.empty() && node.t_us < nodes_.back().t_us)
    throw InvalidInput("event timestamp " + std::to_string(node.t_us) + " precedes the latest node");
  const auto srcs = select_neighbors(node, nodes_.size());
  const auto idx = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(node);
  features_.insert(features_.end(), features.begin(), features.end());
  out_edges_.emplace_back();
  push_edges(idx, srcs);
  index_node(idx);
  ++version_;
  return idx;
}

EventGraph EventGraph::from_parts(GraphConfig cfg, int feature_dim, std::vector<GraphNode> nodes,
                                  std::vector<double> features, std::vector<GraphEdge> edges) {
  EventGraph g(cfg, feature_dim);
  if (features.size() != nodes.size() * static_cast<std::size_t>(feature_dim))
    throw InvalidInput("feature buffer size mismatch");
  g.nodes_ = std::move(nodes);
  g.features_ = std::move(features);
  g.out_edges_.assign(g.nodes_.size(), {});
  g.in_offsets_.assign(g.nodes_.size() + 1, 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& ed = edges[e];
    if (ed.src >= g.nodes_.size() || ed.dst >= g.nodes_.size()) throw InvalidInput("edge endpoint out of range");
    if (e > 0 && ed.dst < edges[e - 1].dst) throw InvalidInput("edges must be grouped by destination");
    g.in_offsets_[ed.dst + 1]++;
    g.out_edges_[ed.src].push_back(static_cast<std::uint32_t>(e));
  }
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) g.in_offsets_[i + 1] += g.in_offsets_[i];
  g.edges_ = std::move(edges);
  for (std::uint32_t i = 0; i < g.nodes_.size(); ++i) g.index_node(i);
  return g;
}

namespace {

void check_stream(const EventStream& events, const GraphConfig& cfg) {
  for (std::size_t i = 0; i < events.events.size(); ++i) {
    const Event& e = events.events[i];
    if (e.x >= cfg.width || e.y >= cfg.height)
      throw InvalidInput("event " + std::to_string(i) + " lies outside the sensor");
    if (i > 0 && e.t < events.events[i - 1].t) throw InvalidInput("event stream is not time-ordered");
  }
}

}  // namespace

EventGraph build_graph(const EventStream& events, const GraphConfig& cfg) {
  check_stream(events, cfg);
  EventGraph g(cfg);
  const std::size_t n = events.events.size();
  g.nodes_.reserve(n);
  g.features_.reserve(n * EventGraph::kEventFeatureDim);
  for (const Event& e : events.events) {
    g.nodes_.push_back(g.make_node(e));
    const auto f = g.event_features(e);
    g.features_.insert(g.features_.end(), f.begin(), f.end());
  }
  for (std::uint32_t i = 0; i < n; ++i) g.index_node(i);

  std::vector<std::vector<std::uint32_t>> selected(n);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    selected[idx] = g.select_neighbors(g.nodes_[idx], idx);
  }

  g.out_edges_.assign(n, {});
  for (std::uint32_t i = 0; i < n; ++i) g.push_edges(i, selected[i]);
  g.version_ = n;
  return g;
}

EventGraph build_graph_serial(const EventStream& events, const GraphConfig& cfg) {
  check_stream(events, cfg);
  EventGraph g(cfg);
  for (const Event& e : events.events) insert_event(g, e, 0);
  return g;
}

DirtySet insert_event(EventGraph& graph, const Event& event, int depth) {
  const auto& cfg = graph.config();
  if (event.x >= cfg.width || event.y >= cfg.height) throw InvalidInput("event lies outside the sensor");
  if (graph.feature_dim() != EventGraph::kEventFeatureDim) throw InvalidInput("graph does not carry event features");
  DirtySet dirty;
  dirty.base_version = graph.version();
  const auto f = graph.event_features(event);
  const std::uint32_t idx = graph.append(graph.make_node(event), f);
  dirty.version = graph.version();

  // Hop expansion along outgoing edges: a node's layer-l output depends on the
  // layer-(l-1) outputs of itself and its in-neighbours.
  std::vector<std::uint32_t> frontier{idx};
  std::vector<std::uint32_t> current{idx};
  for (int l = 0; l < depth; ++l) {
    std::vector<std::uint32_t> next;
    for (const std::uint32_t v : frontier)
      for (const std::uint32_t e : graph.out_edges(v)) next.push_back(graph.edges()[e].dst);
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    std::vector<std::uint32_t> fresh;
    std::set_difference(next.begin(), next.end(), current.begin(), current.end(), std::back_inserter(fresh));
    std::vector<std::uint32_t> merged;
    std::set_union(current.begin(), current.end(), fresh.begin(), fresh.end(), std::back_inserter(merged));
    current = std::move(merged);
    frontier = std::move(fresh);
    dirty.layers.push_back(current);
  }
  return dirty;
}

std::vector<std::size_t> voxel_assignment(const EventGraph& graph, const VoxelGrid& grid) {
  if (grid.nx < 1 || grid.ny < 1 || grid.nt < 1) throw InvalidInput("voxel grid dimensions must be >= 1");
  const auto& nodes = graph.nodes();
  std::vector<std::size_t> out(nodes.size());
  if (nodes.empty()) return out;
  std::uint64_t t_min = nodes.front().t_us, t_max = nodes.front().t_us;
  for (const auto& n : nodes) {
    t_min = std::min(t_min, n.t_us);
    t_max = std::max(t_max, n.t_us);
  }
  const std::uint64_t span = t_max - t_min;
  const auto w = static_cast<std::size_t>(graph.config().width);
  const auto h = static_cast<std::size_t>(graph.config().height);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    // pixel coordinates keep the binning exact: floor(u / W * nx)
    const auto bx = std::min<std::size_t>(grid.nx - 1, n.px * static_cast<std::size_t>(grid.nx) / w);
    const auto by = std::min<std::size_t>(grid.ny - 1, n.py * static_cast<std::size_t>(grid.ny) / h);
    const std::size_t bt =
        span == 0 ? 0 : std::min<std::size_t>(grid.nt - 1, (n.t_us - t_min) * static_cast<std::uint64_t>(grid.nt) / span);
    out[i] = (bx * static_cast<std::size_t>(grid.ny) + by) * static_cast<std::size_t>(grid.nt) + bt;
  }
  return out;
}

EventGraph voxel_pool(const EventGraph& graph, const VoxelGrid& grid) {
  const auto assign = voxel_assignment(graph, grid);
  const int fd = graph.feature_dim();
  struct Voxel {
    std::uint32_t rep = 0;
    std::vector<double> feat;
  };
  std::map<std::size_t, Voxel> voxels;
  for (std::uint32_t i = 0; i < graph.num_nodes(); ++i) {
    const auto f = graph.feature(i);
    auto [it, inserted] = voxels.try_emplace(assign[i]);
    Voxel& v = it->second;
    if (inserted) {
      v.rep = i;
      v.feat.assign(f.begin(), f.end());
      continue;
    }
    // nodes are time-ordered, so the highest index is the latest member
    const auto& r = graph.nodes()[v.rep];
    if (graph.nodes()[i].t_us >= r.t_us) v.rep = i;
    for (int c = 0; c < fd; ++c) v.feat[static_cast<std::size_t>(c)] = std::max(v.feat[static_cast<std::size_t>(c)], f[static_cast<std::size_t>(c)]);
  }
  std::vector<const Voxel*> order;
  order.reserve(voxels.size());
  for (const auto& [key, v] : voxels) order.push_back(&v);
  std::sort(order.begin(), order.end(), [&](const Voxel* a, const Voxel* b) { return a->rep < b->rep; });

  EventGraph pooled(graph.config(), fd);
  for (const Voxel* v : order) pooled.append(graph.nodes()[v->rep], v->feat);
  return pooled;
}

std::vector<std::uint32_t> crop_nodes(const EventGraph& graph, const PixelRect& box, std::uint64_t t0,
                                      std::uint64_t t1) {
  std::vector<std::uint32_t> out;
  const auto& nodes = graph.nodes();
  // nodes are time-ordered; binary-search the window
  const auto lo = std::lower_bound(nodes.begin(), nodes.end(), t0,
                                   [](const GraphNode& n, std::uint64_t t) { return n.t_us < t; });
  for (auto it = lo; it != nodes.end() && it->t_us < t1; ++it)
    if (box.contains(it->px, it->py)) out.push_back(static_cast<std::uint32_t>(it - nodes.begin()));
  return out;
}

EventGraph crop_graph(const EventGraph& graph, const PixelRect& box, std::uint64_t t0, std::uint64_t t1) {
  const auto keep = crop_nodes(graph, box, t0, t1);
  std::vector<std::int64_t> remap(graph.num_nodes(), -1);
  std::vector<GraphNode> nodes;
  std::vector<double> feats;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    remap[keep[k]] = static_cast<std::int64_t>(k);
    nodes.push_back(graph.nodes()[keep[k]]);
    const auto f = graph.feature(keep[k]);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  std::vector<GraphEdge> edges;
  for (const std::uint32_t v : keep) {
    for (std::size_t e = graph.in_begin(v); e < graph.in_end(v); ++e) {
      const auto& ed = graph.edges()[e];
      if (remap[ed.src] < 0) continue;
      edges.push_back(GraphEdge{static_cast<std::uint32_t>(remap[ed.src]), static_cast<std::uint32_t>(remap[v]),
                                ed.feature});
    }
  }
  return EventGraph::from_parts(graph.config(), graph.feature_dim(), std::move(nodes), std::move(feats),
                                std::move(edges));
}

std::string graph_to_json(const EventGraph& graph) {
  using nlohmann::json;
  const auto& c = graph.config();
  json j;
  j["config"] = {{"radius", c.radius}, {"beta", c.beta},   {"max_neighbors", c.max_neighbors},
                 {"width", c.width},   {"height", c.height}, {"window_us", c.window_us}};
  j["nodes"] = json::array();
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    const auto& n = graph.nodes()[i];
    const auto f = graph.feature(i);
    j["nodes"].push_back({{"x", n.x},
                          {"y", n.y},
                          {"t", n.t},
                          {"t_us", n.t_us},
                          {"px", n.px},
                          {"py", n.py},
                          {"p", n.polarity},
                          {"features", std::vector<double>(f.begin(), f.end())}});
  }
  j["edges"] = json::array();
  for (const auto& e : graph.edges())
    j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"feature", {e.feature[0], e.feature[1]}}});
  return j.dump();
}

}  // namespace eae
