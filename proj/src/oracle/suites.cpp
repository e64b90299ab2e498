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
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "eae/oracle.hpp"
#include "eae/pipeline.hpp"

namespace eae::oracle {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void fill_uniform(nn::Tensor& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
}

nn::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  nn::Tensor t(std::move(shape));
  fill_uniform(t, rng);
  return t;
}

// Graph with random causal edges whose features cover the whole unit square.
EventGraph random_graph(std::mt19937_64& rng, std::size_t n, int feature_dim, int max_in) {
  GraphConfig cfg;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GraphNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].x = u(rng);
    nodes[i].y = u(rng);
    nodes[i].t_us = i * 10;
    nodes[i].t = cfg.beta * static_cast<double>(nodes[i].t_us);
    nodes[i].px = static_cast<std::uint16_t>(nodes[i].x * cfg.width);
    nodes[i].py = static_cast<std::uint16_t>(nodes[i].y * cfg.height);
  }
  std::vector<double> feats(n * static_cast<std::size_t>(feature_dim));
  for (auto& v : feats) v = 2.0 * u(rng) - 1.0;
  std::vector<GraphEdge> edges;
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<int> deg(0, std::min<int>(max_in, static_cast<int>(i)));
    std::vector<std::uint32_t> src(i);
    std::iota(src.begin(), src.end(), 0u);
    std::shuffle(src.begin(), src.end(), rng);
    src.resize(static_cast<std::size_t>(deg(rng)));
    for (const auto j : src) edges.push_back({j, static_cast<std::uint32_t>(i), {u(rng), u(rng)}});
  }
  return EventGraph::from_parts(cfg, feature_dim, std::move(nodes), std::move(feats), std::move(edges));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct OpTally {
  std::string name;
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;

  void add(const GradCheck& g, std::uint64_t seed) {
    checked += g.checked;
    if (g.max_rel_error >= worst) {
      worst = g.max_rel_error;
      where = g.worst + " seed " + std::to_string(seed) + " analytic " + fmt("%.6e", g.worst_analytic) + " numeric " +
              fmt("%.6e", g.worst_numeric);
    }
  }
};

GradCheck check_spline(std::mt19937_64& rng) {
  const EventGraph g = random_graph(rng, 10, 3, 4);
  nn::SplineKernel k(5, 3, 4);
  fill_uniform(k.control, rng);
  fill_uniform(k.self, rng);
  nn::Tensor x({10, 3});
  std::copy(g.features().begin(), g.features().end(), x.values().begin());
  const nn::Tensor r = random_tensor({10, 4}, rng);
  const auto loss = [&] {
    nn::Vec out(40);
    nn::spline_conv_forward(k, g, x.values(), out);
    return dot(out, r.values());
  };
  nn::SplineKernel grad(5, 3, 4);
  nn::Tensor dx({10, 3});
  nn::spline_conv_backward(k, g, x.values(), r.values(), grad, dx.values());
  return check_gradients(loss, {"spline.control", "spline.self", "spline.x"}, {&k.control, &k.self, &x},
                         {&grad.control, &grad.self, &dx});
}

GradCheck check_gnn(std::mt19937_64& rng, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.gnn_depth = 3;
  cfg.gnn_channels = 4;
  cfg.seed = seed;
  HybridModel model = HybridModel::create(cfg);
  const EventGraph g = random_graph(rng, 12, EventGraph::kEventFeatureDim, 5);
  for (auto& k : model.gnn) fill_uniform(k.control, rng, -0.5, 0.5);
  const nn::Tensor r = random_tensor({12, 4}, rng);
  const auto loss = [&] { return dot(gnn_forward(model, g).final_layer(), r.values()); };
  HybridModel grad = model.zeros_like();
  gnn_backward(model, g, gnn_forward(model, g, true), r.values(), grad);
  std::vector<std::string> names;
  std::vector<nn::Tensor*> params;
  std::vector<const nn::Tensor*> analytic;
  model.for_each_gnn([&](const std::string& n, nn::Tensor& t) {
    names.push_back(n);
    params.push_back(&t);
  });
  grad.for_each_gnn([&](const std::string&, nn::Tensor& t) { analytic.push_back(&t); });
  return check_gradients(loss, names, params, analytic);
}

GradCheck check_gru(std::mt19937_64& rng) {
  nn::GRUParams p(3, 4);
  p.for_each("", [&](const std::string&, nn::Tensor& t) { fill_uniform(t, rng); });
  nn::Tensor x = random_tensor({3}, rng);
  nn::Tensor h = random_tensor({4}, rng);
  const nn::Tensor r = random_tensor({4}, rng);
  const auto loss = [&] { return dot(nn::gru_step(x.values(), h.values(), p), r.values()); };
  nn::GruCache cache;
  nn::gru_step(x.values(), h.values(), p, &cache);
  nn::GRUParams grad(3, 4);
  nn::Vec dx, dh;
  nn::gru_backward(p, cache, r.values(), grad, dx, dh);
  nn::Tensor tdx({3}), tdh({4});
  std::copy(dx.begin(), dx.end(), tdx.values().begin());
  std::copy(dh.begin(), dh.end(), tdh.values().begin());
  std::vector<std::string> names;
  std::vector<nn::Tensor*> params;
  std::vector<const nn::Tensor*> analytic;
  p.for_each("gru", [&](const std::string& n, nn::Tensor& t) {
    names.push_back(n);
    params.push_back(&t);
  });
  grad.for_each("gru", [&](const std::string&, nn::Tensor& t) { analytic.push_back(&t); });
  names.insert(names.end(), {"gru.x", "gru.h"});
  params.insert(params.end(), {&x, &h});
  analytic.insert(analytic.end(), {&tdx, &tdh});
  return check_gradients(loss, names, params, analytic);
}

GradCheck check_attention(std::mt19937_64& rng) {
  const std::size_t n = 4, d = 5;
  nn::AttentionParams p(static_cast<int>(d));
  fill_uniform(p.w, rng);
  nn::Tensor h = random_tensor({n, d}, rng);
  const nn::Tensor r = random_tensor({n, d}, rng);
  const auto rows = [&] {
    std::vector<nn::Vec> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i].assign(h.data() + i * d, h.data() + (i + 1) * d);
    return out;
  };
  const auto loss = [&] {
    const auto a = nn::attention(rows(), p);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += dot(a.weighted[i], {r.data() + i * d, d});
    return s;
  };
  nn::AttentionCache cache;
  nn::attention(rows(), p, &cache);
  std::vector<nn::Vec> dw(n);
  for (std::size_t i = 0; i < n; ++i) dw[i].assign(r.data() + i * d, r.data() + (i + 1) * d);
  nn::AttentionParams grad(static_cast<int>(d));
  const auto dh = nn::attention_backward(p, cache, dw, grad);
  nn::Tensor tdh({n, d});
  for (std::size_t i = 0; i < n; ++i) std::copy(dh[i].begin(), dh[i].end(), tdh.data() + i * d);
  return check_gradients(loss, {"attention.w", "attention.H"}, {&p.w, &h}, {&grad.w, &tdh});
}

GradCheck check_linear(std::mt19937_64& rng) {
  nn::LinearParams p(4, 3);
  fill_uniform(p.weight, rng);
  fill_uniform(p.bias, rng);
  nn::Tensor x = random_tensor({4}, rng);
  const nn::Tensor r = random_tensor({3}, rng);
  const auto loss = [&] { return dot(nn::linear_forward(x.values(), p), r.values()); };
  nn::LinearCache cache;
  nn::linear_forward(x.values(), p, &cache);
  nn::LinearParams grad(4, 3);
  const nn::Vec dx = nn::linear_backward(p, cache, r.values(), grad);
  nn::Tensor tdx({4});
  std::copy(dx.begin(), dx.end(), tdx.values().begin());
  return check_gradients(loss, {"linear.weight", "linear.bias", "linear.x"}, {&p.weight, &p.bias, &x},
                         {&grad.weight, &grad.bias, &tdx});
}

GradCheck check_loss(std::mt19937_64& rng) {
  nn::Tensor logits = random_tensor({2}, rng);
  for (auto& v : logits.values()) v *= 3.0;
  const int label = std::uniform_int_distribution<int>(0, 1)(rng);
  const nn::ClassWeights w;
  const auto loss = [&] { return nn::weighted_cross_entropy(logits.values(), label, w).loss; };
  const auto res = nn::weighted_cross_entropy(logits.values(), label, w);
  nn::Tensor d({2});
  std::copy(res.dlogits.begin(), res.dlogits.end(), d.values().begin());
  return check_gradients(loss, {"loss.logits"}, {&logits}, {&d});
}

// Head through time: object projection, both GRUs, attention, classifier and
// the weighted loss; 3 objects over 4 frames, one of them missing in a frame so
// that carried state is exercised. `whole_model` also checks the GNN layers
// reached through the max readout.
GradCheck check_head(std::mt19937_64& rng, std::uint64_t seed, bool whole_model) {
  ModelConfig cfg;
  cfg.gnn_depth = 2;
  cfg.gnn_channels = 4;
  cfg.feature_c2 = 2;
  cfg.object_dim = 6;
  cfg.hidden_box = 5;
  cfg.hidden_feat = 5;
  cfg.seed = seed;
  HybridModel model = HybridModel::create(cfg);
  // O(1) weights keep hidden states and gradients well above the rounding
  // noise of the finite differences
  model.for_each_head([&](const std::string&, nn::Tensor& t) { fill_uniform(t, rng); });
  PreparedScenario ps;
  ps.id = "gradcheck";
  ps.graph = random_graph(rng, 30, EventGraph::kEventFeatureDim, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> pick(0, 29);
  for (int k = 0; k < 4; ++k) {
    PreparedFrame f;
    f.frame_idx = k;
    f.t_us = static_cast<std::uint64_t>(k + 1) * 50'000;
    f.fmap = FeatureMap(3, 4, cfg.feature_c2);
    for (auto& v : f.fmap.values) v = u(rng);
    for (int id = 1; id <= 3; ++id) {
      if (id == 2 && k == 2) continue;
      PreparedObject o;
      const int x0 = static_cast<int>(u(rng) * 40), y0 = static_cast<int>(u(rng) * 30);
      o.box = make_object_box(id, {x0, y0, x0 + 8 + static_cast<int>(u(rng) * 10), y0 + 6 + static_cast<int>(u(rng) * 8)},
                              cfg.graph.width, cfg.graph.height);
      for (int c = 0; c < 5; ++c) o.crop.push_back(pick(rng));
      std::sort(o.crop.begin(), o.crop.end());
      o.crop.erase(std::unique(o.crop.begin(), o.crop.end()), o.crop.end());
      o.label = id == 1 && k >= 1 ? 1 : 0;
      f.objects.push_back(std::move(o));
    }
    ps.frames.push_back(std::move(f));
  }
  const nn::ClassWeights w;
  const auto loss = [&] { return scenario_loss(model, ps, w, nullptr); };
  HybridModel grad = model.zeros_like();
  scenario_loss(model, ps, w, &grad);
  std::vector<std::string> names;
  std::vector<nn::Tensor*> params;
  std::vector<const nn::Tensor*> analytic;
  const auto collect = [&](const std::string& n, nn::Tensor& t) {
    names.push_back(n);
    params.push_back(&t);
  };
  const auto collect_grad = [&](const std::string&, nn::Tensor& t) { analytic.push_back(&t); };
  if (whole_model) {
    model.for_each_trainable(collect);
    grad.for_each_trainable(collect_grad);
  } else {
    model.for_each_head(collect);
    grad.for_each_head(collect_grad);
  }
  return check_gradients(loss, names, params, analytic);
}

}  // namespace

SuiteResult gradient_suite(int seeds, double tolerance) {
  const auto t0 = Clock::now();
  std::vector<OpTally> ops;
  for (const char* name : {"spline_conv", "gnn_stack", "gru", "attention", "linear", "loss", "full_head"})
    ops.push_back(OpTally{name, 0.0, {}, 0});
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ seed);
    ops[0].add(check_spline(rng), seed);
    ops[1].add(check_gnn(rng, seed + 1), seed);
    ops[2].add(check_gru(rng), seed);
    ops[3].add(check_attention(rng), seed);
    ops[4].add(check_linear(rng), seed);
    ops[5].add(check_loss(rng), seed);
    ops[6].add(check_head(rng, seed + 1, false), seed);
  }
  SuiteResult r{"gradients", true, {}, 0.0};
  std::ostringstream d;
  for (const auto& op : ops) {
    if (!(op.worst <= tolerance)) r.passed = false;
    d << op.name << " " << fmt("%.2e", op.worst) << " (" << op.checked << " entries); ";
  }
  const auto worst = std::max_element(ops.begin(), ops.end(), [](const auto& a, const auto& b) { return a.worst < b.worst; });
  d << "worst at " << worst->name << " " << worst->where;
  r.detail = d.str();
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult graph_suite(std::uint64_t seed, int streams, std::size_t max_events) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  SuiteResult r{"graph", true, {}, 0.0};
  std::size_t edges = 0, capped = 0;
  for (int s = 0; s < streams && r.passed; ++s) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, max_events)(rng);
    // alternate dense clusters (cap and tie-breaks) with sparse streams
    const bool dense = s % 2 == 0;
    const int w = dense ? 4 : 64, h = dense ? 3 : 48;
    EventStream ev = random_stream(rng, n, w, h, dense ? 20'000 : 3'000'000);
    ev.width = 64;
    ev.height = 48;
    if (s % 4 == 0)  // shared timestamps
      for (auto& e : ev.events) e.t = e.t / 5000 * 5000;
    GraphConfig cfg;
    const auto ref = graph_edges(ev, cfg);
    const EventGraph fast = build_graph(ev, cfg);
    const EventGraph serial = build_graph_serial(ev, cfg);
    std::vector<RefEdge> got;
    for (const auto& e : fast.edges()) got.push_back({e.src, e.dst, e.feature[0], e.feature[1]});
    const auto key = [](const RefEdge& a, const RefEdge& b) { return std::tie(a.dst, a.src) < std::tie(b.dst, b.src); };
    auto want = ref;
    std::sort(want.begin(), want.end(), key);
    std::sort(got.begin(), got.end(), key);
    bool nodes_ok = fast.num_nodes() == n && fast.nodes() == serial.nodes() && fast.features() == serial.features();
    for (std::size_t i = 0; nodes_ok && i < n; ++i) {
      const auto& a = fast.nodes()[i];
      const auto& e = ev.events[i];
      nodes_ok = a.x == static_cast<double>(e.x) / cfg.width && a.y == static_cast<double>(e.y) / cfg.height &&
                 a.t == cfg.beta * static_cast<double>(e.t) && a.t_us == e.t;
    }
    if (!nodes_ok || got != want || fast.edges() != serial.edges()) {
      r.passed = false;
      r.detail = "stream " + std::to_string(s) + " (" + std::to_string(n) + " events) differs from the reference";
    }
    edges += want.size();
    for (std::size_t i = 0; i < n; ++i) capped += fast.in_end(i) - fast.in_begin(i) == 16 ? 1 : 0;
  }
  if (r.passed)
    r.detail = std::to_string(streams) + " streams, " + std::to_string(edges) + " edges, " + std::to_string(capped) +
               " nodes at the neighbour cap";
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult async_suite(std::uint64_t seed, int streams, double tolerance) {
  const auto t0 = Clock::now();
  SuiteResult r{"async", true, {}, 0.0};
  double worst = 0.0;
  std::size_t frames = 0;
  for (int s = 0; s < streams; ++s) {
    Scenario sc = generate_scenario("mix", seed + static_cast<std::uint64_t>(s), static_cast<std::size_t>(s));
    sc.events = add_noise(sc.events, 0.5, 0, sc.spec.duration_us, seed * 131 + static_cast<std::uint64_t>(s));
    ModelConfig cfg;
    cfg.seed = seed + static_cast<std::uint64_t>(s);
    const HybridModel model = HybridModel::create(cfg);
    const auto packets = make_packets(model, sc);
    const RiskTimeline batch = run_sequence(model, packets, ScoringMode::kBatch);
    const RiskTimeline inc = run_sequence(model, packets, ScoringMode::kIncremental);
    if (batch.frames.size() != inc.frames.size()) {
      r.passed = false;
      break;
    }
    for (std::size_t k = 0; k < batch.frames.size(); ++k) {
      const auto& a = batch.frames[k];
      const auto& b = inc.frames[k];
      worst = std::max(worst, std::abs(a.frame_score - b.frame_score));
      if (a.objects.size() != b.objects.size()) {
        r.passed = false;
        continue;
      }
      for (std::size_t i = 0; i < a.objects.size(); ++i) {
        if (a.objects[i].first != b.objects[i].first) r.passed = false;
        worst = std::max(worst, std::abs(a.objects[i].second - b.objects[i].second));
      }
    }
    frames += batch.frames.size();
  }
  if (!(worst <= tolerance)) r.passed = false;
  r.detail = std::to_string(streams) + " streams, " + std::to_string(frames) + " frames, max |batch - incremental| " +
             fmt("%.3e", worst);
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult lut_suite(std::uint64_t seed) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  struct Case {
    EventGraph g;
    nn::SplineKernel k;
  };
  std::vector<Case> cases;
  for (int c = 0; c < 6; ++c) {
    Case cs{random_graph(rng, 60, 4, 8), nn::SplineKernel(5, 4, 4)};
    fill_uniform(cs.k.control, rng);
    fill_uniform(cs.k.self, rng);
    cases.push_back(std::move(cs));
  }
  const std::vector<int> bins{16, 32, 64, 128};
  std::vector<double> err(bins.size(), 0.0);
  double ratio64 = 0.0;  // worst error / bound at B = 64
  for (const auto& cs : cases) {
    const auto x = cs.g.features();
    nn::Vec exact(cs.g.num_nodes() * 4);
    nn::spline_conv_forward(cs.k, cs.g, x, exact);
    const double lip = lut_lipschitz(cs.k, cs.g, x);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const auto lut = nn::spline_conv_lut(cs.k, bins[b]);
      nn::Vec approx(exact.size());
      nn::lut_forward(lut, cs.g, x, approx);
      double e = 0.0;
      for (std::size_t i = 0; i < exact.size(); ++i) e = std::max(e, std::abs(approx[i] - exact[i]));
      err[b] = std::max(err[b], e);
      if (bins[b] == 64) ratio64 = std::max(ratio64, e / (lip * std::sqrt(2.0) / (2.0 * 64)));
    }
  }
  SuiteResult r{"lut", true, {}, 0.0};
  for (std::size_t b = 1; b < bins.size(); ++b)
    if (err[b] > err[b - 1]) r.passed = false;
  if (!(ratio64 <= 1.0)) r.passed = false;
  std::ostringstream d;
  for (std::size_t b = 0; b < bins.size(); ++b) d << "B=" << bins[b] << " " << fmt("%.3e", err[b]) << "; ";
  d << "B=64 error/bound " << fmt("%.3f", ratio64);
  r.detail = d.str();
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult metric_suite(std::uint64_t seed, int instances, double tolerance) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  SuiteResult r{"metrics", true, {}, 0.0};
  double auc_err = 0.0, ap_err = 0.0;
  for (int k = 0; k < instances; ++k) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
    // coarse score grids force ties in a share of the instances
    const int levels = k % 3 == 0 ? 5 : 1'000'000;
    std::uniform_int_distribution<int> lv(0, levels);
    ScoredSet set(n);
    for (auto& s : set) {
      s.score = static_cast<double>(lv(rng)) / levels;
      s.label = std::uniform_int_distribution<int>(0, 1)(rng);
    }
    set[0].label = 1;
    set[1].label = 0;
    std::shuffle(set.begin(), set.end(), rng);
    auc_err = std::max(auc_err, std::abs(roc_auc(set) - auc_pairwise(set)));
    ap_err = std::max(ap_err, std::abs(average_precision(set) - ap_rank_scan(set)));
  }
  if (!(auc_err <= tolerance && ap_err <= tolerance)) r.passed = false;

  // Worked examples: 20 fps, onset at frame 28, detections at 30 / 34 / 38 for
  // thresholds 0.3 / 0.5 / 0.7, 2 ms per frame; accident at frame 40 with the
  // risky object first above 0.5 at frame 30.
  RiskTimeline tl;
  tl.scenario_id = "worked";
  for (int f = 0; f < 60; ++f) {
    TimelineFrame fr;
    fr.frame = f;
    fr.t_us = static_cast<std::uint64_t>(f) * 50'000;
    fr.frame_score = f < 30 ? 0.1 : f < 34 ? 0.4 : f < 38 ? 0.6 : 0.8;
    fr.objects = {{1, f < 30 ? 0.2 : 0.55}, {2, fr.frame_score}};
    fr.infer_us = 2000.0;
    tl.frames.push_back(fr);
  }
  LabelSet lab;
  lab.onset_us = 28 * 50'000;
  lab.collision_us = 40 * 50'000;
  lab.risky_object = 1;
  lab.frame_labels.assign(60, 0);
  for (int f = 28; f < 60; ++f) lab.frame_labels[static_cast<std::size_t>(f)] = 1;
  EvalConfig ec;
  ec.thresholds = {0.3, 0.5, 0.7};
  const double resp = mresponse({tl}, {lab}, ec, {mean_inference_s(tl)});
  const double tta = mtta({tl}, {lab}, 0.5);
  if (resp != 0.302 || tta != 0.5) r.passed = false;
  r.detail = std::to_string(instances) + " instances, max AUC error " + fmt("%.2e", auc_err) + ", max AP error " +
             fmt("%.2e", ap_err) + "; mResponse " + fmt("%.6g", resp) + " s, mTTA " + fmt("%.6g", tta) + " s";
  r.seconds = seconds_since(t0);
  return r;
}

SuiteResult normalization_suite(std::uint64_t seed, int permutations) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SuiteResult r{"normalization", true, {}, 0.0};
  std::ostringstream d;

  // softmax: random widths and scales, including extreme logits
  double sm_err = 0.0;
  bool sm_positive = true;
  for (int k = 0; k < 1000; ++k) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    const double scale = k % 10 == 0 ? 1000.0 : 10.0;
    nn::Vec logits(n);
    for (auto& v : logits) v = scale * (2.0 * u(rng) - 1.0);
    const auto p = nn::softmax(logits);
    sm_err = std::max(sm_err, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
    const auto q = softmax(logits);
    for (std::size_t i = 0; i < n; ++i) sm_err = std::max(sm_err, std::abs(p[i] - static_cast<double>(q[i])));
    if (scale < 100.0)
      for (const double v : p) sm_positive = sm_positive && v > 0.0;
  }
  if (!(sm_err <= 1e-12) || !sm_positive) r.passed = false;
  d << "softmax " << fmt("%.2e", sm_err) << "; ";

  // partition of unity, against the tent-formula weights
  double pu_err = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const int lattice = 2 + k % 6;
    std::array<double, 2> e{1.4 * u(rng) - 0.2, 1.4 * u(rng) - 0.2};
    if (k % 7 == 0) e = {static_cast<double>(k % 3) / 2.0, static_cast<double>(k % 5) / 4.0};
    const auto b = nn::spline_basis(e, lattice);
    double sum = 0.0;
    nn::Vec dense(static_cast<std::size_t>(lattice * lattice), 0.0);
    for (std::size_t q = 0; q < 4; ++q) {
      if (b.weight[q] < 0.0) r.passed = false;
      sum += b.weight[q];
      dense[b.index[q]] += b.weight[q];
    }
    pu_err = std::max(pu_err, std::abs(sum - 1.0));
    const auto ref = bilinear_weights(e[0], e[1], lattice);
    for (std::size_t q = 0; q < ref.size(); ++q) pu_err = std::max(pu_err, std::abs(dense[q] - ref[q]));
  }
  if (!(pu_err <= 1e-12)) r.passed = false;
  d << "partition of unity " << fmt("%.2e", pu_err) << "; ";

  // attention equivariance
  double eq_err = 0.0;
  for (int k = 0; k < permutations; ++k) {
    const auto n = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const std::size_t dim = 6;
    nn::AttentionParams p(static_cast<int>(dim));
    fill_uniform(p.w, rng);
    std::vector<nn::Vec> rows(n, nn::Vec(dim));
    for (auto& row : rows)
      for (auto& v : row) v = 2.0 * u(rng) - 1.0;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<nn::Vec> permuted(n);
    for (std::size_t i = 0; i < n; ++i) permuted[i] = rows[perm[i]];
    const auto a = nn::attention(rows, p);
    const auto b = nn::attention(permuted, p);
    double asum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      asum += a.alpha[i];
      eq_err = std::max(eq_err, std::abs(b.alpha[i] - a.alpha[perm[i]]));
      for (std::size_t c = 0; c < dim; ++c)
        eq_err = std::max(eq_err, std::abs(b.weighted[i][c] - a.weighted[perm[i]][c]));
    }
    sm_err = std::max(sm_err, std::abs(asum - 1.0));
  }
  if (!(eq_err <= 1e-12) || !(sm_err <= 1e-12)) r.passed = false;
  d << "attention permutation " << fmt("%.2e", eq_err) << " over " << permutations << "; ";

  // zero residual layer
  bool identity = true;
  for (int k = 0; k < 20; ++k) {
    const EventGraph g = random_graph(rng, 25, 6, 6);
    nn::SplineKernel layer(5, 6, 6);
    std::vector<double> pre(6), out(6);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      nn::gnn_layer_node(layer, g, g.features(), i, pre.data(), out.data());
      for (std::size_t c = 0; c < 6; ++c) identity = identity && out[c] == g.feature(i)[c];
    }
  }
  if (!identity) r.passed = false;
  d << "zero residual layer identity " << (identity ? "exact" : "broken");
  r.detail = d.str();
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<SuiteResult> run_selftest(std::uint64_t seed) {
  return {gradient_suite(10),  graph_suite(seed, 100, 200),  async_suite(seed, 20),
          lut_suite(seed),     metric_suite(seed, 1000),     normalization_suite(seed, 200)};
}

}  // namespace eae::oracle
