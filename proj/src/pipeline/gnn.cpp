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

#include "eae/pipeline.hpp"

namespace eae {

int layer_in_dim(const HybridModel& model, int layer) {
  return layer == 0 ? EventGraph::kEventFeatureDim : model.cfg.gnn_channels;
}

namespace {

GnnActivations forward_impl(const HybridModel& model, const EventGraph& graph, bool keep_pre, bool parallel) {
  if (graph.feature_dim() != EventGraph::kEventFeatureDim) throw InvalidInput("gnn: graph features have wrong width");
  const std::size_t n = graph.num_nodes();
  const auto c = static_cast<std::size_t>(model.cfg.gnn_channels);
  const int depth = model.cfg.gnn_depth;
  GnnActivations acts;
  acts.version = graph.version();
  acts.out.resize(static_cast<std::size_t>(depth) + 1);
  acts.out[0] = graph.features();
  nn::Vec scratch;
  if (keep_pre) acts.pre.resize(static_cast<std::size_t>(depth));
  for (int l = 0; l < depth; ++l) {
    const auto& k = model.gnn[static_cast<std::size_t>(l)];
    const auto lu = static_cast<std::size_t>(l);
    auto& out = acts.out[lu + 1];
    out.assign(n * c, 0.0);
    nn::Vec& pre = keep_pre ? acts.pre[lu] : scratch;
    pre.assign(n * c, 0.0);
    const std::span<const double> x = acts.out[lu];
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      nn::gnn_layer_node(k, graph, x, i, pre.data() + i * c, out.data() + i * c);
    }
  }
  return acts;
}

}  // namespace

GnnActivations gnn_forward(const HybridModel& model, const EventGraph& graph, bool keep_pre) {
  return forward_impl(model, graph, keep_pre, true);
}

GnnActivations gnn_forward_serial(const HybridModel& model, const EventGraph& graph) {
  return forward_impl(model, graph, false, false);
}

std::size_t step_incremental(const HybridModel& model, const EventGraph& graph, const DirtySet& dirty,
                             GnnActivations& cache) {
  if (cache.version != dirty.base_version)
    throw StateError("activation cache version " + std::to_string(cache.version) +
                     " does not match dirty set base " + std::to_string(dirty.base_version));
  if (graph.version() != dirty.version)
    throw StateError("dirty set version " + std::to_string(dirty.version) + " does not match graph version " +
                     std::to_string(graph.version()));
  const int depth = model.cfg.gnn_depth;
  if (!dirty.layers.empty() && dirty.layers.size() != static_cast<std::size_t>(depth))
    throw InvalidInput("dirty set depth does not match the network");
  const std::size_t n = graph.num_nodes();
  const auto c = static_cast<std::size_t>(model.cfg.gnn_channels);
  if (cache.out.empty()) cache.out.resize(static_cast<std::size_t>(depth) + 1);
  const auto fd = static_cast<std::size_t>(graph.feature_dim());
  const std::size_t old_n = cache.out[0].size() / fd;
  if (old_n > n) throw StateError("activation cache holds more nodes than the graph");
  cache.pre.clear();
  cache.out[0].resize(n * fd);
  std::copy(graph.features().begin() + static_cast<std::ptrdiff_t>(old_n * fd), graph.features().end(),
            cache.out[0].begin() + static_cast<std::ptrdiff_t>(old_n * fd));
  for (int l = 1; l <= depth; ++l) cache.out[static_cast<std::size_t>(l)].resize(n * c, 0.0);

  std::size_t evaluated = 0;
  nn::Vec pre(c);
  for (std::size_t l = 0; l < dirty.layers.size(); ++l) {
    const auto& k = model.gnn[l];
    const std::span<const double> x = cache.out[l];
    double* out = cache.out[l + 1].data();
    for (const std::uint32_t i : dirty.layers[l]) {
      if (i >= n) throw InvalidInput("dirty set names a node outside the graph");
      nn::gnn_layer_node(k, graph, x, i, pre.data(), out + static_cast<std::size_t>(i) * c);
      ++evaluated;
    }
  }
  cache.version = dirty.version;
  return evaluated;
}

void gnn_backward(const HybridModel& model, const EventGraph& graph, const GnnActivations& acts,
                  std::span<const double> d_final, HybridModel& grad) {
  const int depth = model.cfg.gnn_depth;
  if (acts.pre.size() != static_cast<std::size_t>(depth))
    throw StateError("gnn_backward needs a forward pass that kept pre-activations");
  const std::size_t n = graph.num_nodes();
  const auto c = static_cast<std::size_t>(model.cfg.gnn_channels);
  if (d_final.size() != n * c) throw InvalidInput("gnn_backward: gradient size mismatch");
  nn::Vec d(d_final.begin(), d_final.end());
  for (int l = depth - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto& k = model.gnn[lu];
    const auto cin = static_cast<std::size_t>(k.c_in);
    const nn::Vec& pre = acts.pre[lu];
    nn::Vec dpre(n * c);
    for (std::size_t q = 0; q < n * c; ++q) dpre[q] = d[q] == 0.0 ? 0.0 : d[q] * nn::elu_grad(pre[q]);
    nn::Vec dx(n * cin, 0.0);
    if (k.residual()) dx = d;
    if (l == 0) {
      // input features are constants; only the parameter gradients matter
      nn::Vec sink(n * cin, 0.0);
      nn::spline_conv_backward(k, graph, acts.out[lu], dpre, grad.gnn[lu], sink);
      break;
    }
    nn::spline_conv_backward(k, graph, acts.out[lu], dpre, grad.gnn[lu], dx);
    d = std::move(dx);
  }
}

std::vector<nn::Vec> fuse_node_features(const EventGraph& graph, std::span<const double> final_acts, int channels,
                                        std::span<const std::uint32_t> nodes, const FeatureMap& fmap) {
  const auto c = static_cast<std::size_t>(channels);
  if (final_acts.size() < graph.num_nodes() * c) throw InvalidInput("fuse: activation buffer too small");
  std::vector<nn::Vec> rows;
  rows.reserve(nodes.size());
  for (const std::uint32_t v : nodes) {
    if (v >= graph.num_nodes()) throw InvalidInput("fuse: node index out of range");
    nn::Vec row(final_acts.begin() + static_cast<std::ptrdiff_t>(v * c),
                final_acts.begin() + static_cast<std::ptrdiff_t>((v + 1) * c));
    const auto& node = graph.nodes()[v];
    const nn::Vec g = fmap.sample(node.x, node.y);
    row.insert(row.end(), g.begin(), g.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

double gnn_flops_per_event(const HybridModel& model, const EventGraph& graph) {
  const std::size_t n = graph.num_nodes();
  if (n == 0) return 0.0;
  double total = 0.0;
  std::vector<char> seen;
  for (const auto& k : model.gnn) {
    const double cin = k.c_in;
    const double cout = k.c_out;
    seen.assign(static_cast<std::size_t>(k.lattice * k.lattice), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint32_t> touched;
      for (std::size_t e = graph.in_begin(i); e < graph.in_end(i); ++e) {
        const auto b = nn::spline_basis(graph.edges()[e].feature, k.lattice);
        for (int q = 0; q < 4; ++q) {
          if (b.weight[static_cast<std::size_t>(q)] == 0.0) continue;
          const auto idx = b.index[static_cast<std::size_t>(q)];
          if (!seen[idx]) {
            seen[idx] = 1;
            touched.push_back(idx);
          }
        }
      }
      for (const auto idx : touched) seen[idx] = 0;
      const double deg = static_cast<double>(graph.in_end(i) - graph.in_begin(i));
      total += 2.0 * cin * cout;                            // self term
      total += deg * (16.0 + 8.0 * cin);                    // basis + weighted gathers
      total += static_cast<double>(touched.size()) * 2.0 * cin * cout;  // control matvecs
      total += 3.0 * cout;                                  // ELU + residual
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace eae
