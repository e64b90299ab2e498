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
#include <limits>
#include <numeric>
#include <random>

#include "eae/pipeline.hpp"

namespace eae {

PreparedScenario prepare_scenario(const HybridModel& model, const Scenario& scenario, const PacketOptions& opts) {
  auto packets = make_packets(model, scenario, opts);
  PreparedScenario ps;
  ps.id = scenario.id;
  ps.labels = scenario.labels;
  ps.graph = build_graph(scenario.events, model.cfg.graph);
  for (auto& p : packets) {
    PreparedFrame f;
    f.frame_idx = p.frame_idx;
    f.t_us = p.t_us;
    f.fmap = std::move(p.fmap);
    for (const auto& ob : p.objects) {
      PreparedObject po;
      po.box = ob;
      po.crop = crop_nodes(ps.graph, ob.rect, p.window_begin, p.window_end);
      const auto it = scenario.labels.object_labels.find(ob.id);
      if (it != scenario.labels.object_labels.end() && static_cast<std::size_t>(p.frame_idx) < it->second.size())
        po.label = it->second[static_cast<std::size_t>(p.frame_idx)];
      f.objects.push_back(std::move(po));
    }
    ps.frames.push_back(std::move(f));
  }
  return ps;
}

RiskTimeline score_prepared(const HybridModel& model, const PreparedScenario& scenario) {
  const GnnActivations acts = gnn_forward(model, scenario.graph);
  ObjectState state;
  RiskTimeline tl;
  tl.scenario_id = scenario.id;
  for (const auto& fr : scenario.frames) {
    std::vector<HeadInput> inputs;
    for (const auto& ob : fr.objects)
      inputs.push_back({ob.box.id, ob.box.box,
                        object_feature(model, scenario.graph, acts.final_layer(), ob.crop, fr.fmap, ob.box.rect)});
    TimelineFrame f;
    f.frame = fr.frame_idx;
    f.t_us = fr.t_us;
    f.objects = head_step(model, state, inputs, fr.frame_idx);
    for (const auto& [id, s] : f.objects) f.frame_score = std::max(f.frame_score, s);
    tl.frames.push_back(std::move(f));
  }
  return tl;
}

double scenario_loss(const HybridModel& model, const PreparedScenario& scenario, const nn::ClassWeights& weights,
                     HybridModel* grad, double grad_scale) {
  const auto& cfg = model.cfg;
  const GnnActivations acts = gnn_forward(model, scenario.graph, grad != nullptr);
  struct FrameRecord {
    HeadCache head;
    std::vector<ObjectFeatureCache> feats;
    std::vector<nn::Vec> dlogits;
  };
  std::vector<FrameRecord> records(grad ? scenario.frames.size() : 0);
  ObjectState state;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < scenario.frames.size(); ++k) {
    const auto& fr = scenario.frames[k];
    std::vector<HeadInput> inputs;
    FrameRecord* rec = grad ? &records[k] : nullptr;
    if (rec) rec->feats.resize(fr.objects.size());
    for (std::size_t i = 0; i < fr.objects.size(); ++i) {
      const auto& ob = fr.objects[i];
      inputs.push_back({ob.box.id, ob.box.box,
                        object_feature(model, scenario.graph, acts.final_layer(), ob.crop, fr.fmap, ob.box.rect,
                                       rec ? &rec->feats[i] : nullptr)});
    }
    HeadCache local;
    head_step(model, state, inputs, fr.frame_idx, rec ? &rec->head : &local);
    const HeadCache& hc = rec ? rec->head : local;
    if (rec) rec->dlogits.resize(fr.objects.size());
    for (std::size_t i = 0; i < fr.objects.size(); ++i) {
      const auto r = nn::weighted_cross_entropy(hc.logits[i], fr.objects[i].label, weights);
      total += r.loss;
      ++count;
      if (rec) rec->dlogits[i] = r.dlogits;
    }
  }
  if (count == 0) return 0.0;
  const double mean = total / static_cast<double>(count);
  if (!grad) return mean;

  // Backward through time. Carried gradients w.r.t. each track's hidden state
  // flow from frame t to the previous frame in which the object was present.
  const double scale = grad_scale / static_cast<double>(count);
  const auto cg = static_cast<std::size_t>(cfg.gnn_channels);
  const auto hbox = static_cast<std::size_t>(cfg.hidden_box);
  std::vector<double> d_final(scenario.graph.num_nodes() * cg, 0.0);
  std::map<int, nn::Vec> carry_b, carry_f;
  nn::Vec dx, dh;
  for (std::size_t k = scenario.frames.size(); k-- > 0;) {
    const auto& rec = records[k];
    const std::size_t n = rec.head.ids.size();
    if (n == 0) continue;
    std::vector<nn::Vec> dwb(n), dwf(n);
    for (std::size_t i = 0; i < n; ++i) {
      nn::Vec dl = rec.dlogits[i];
      for (auto& v : dl) v *= scale;
      const nn::Vec dz = nn::linear_backward(model.classifier, rec.head.cls[i], dl, grad->classifier);
      dwb[i].assign(dz.begin(), dz.begin() + static_cast<std::ptrdiff_t>(hbox));
      dwf[i].assign(dz.begin() + static_cast<std::ptrdiff_t>(hbox), dz.end());
    }
    const auto dhb = nn::attention_backward(model.att_box, rec.head.att_box, dwb, grad->att_box);
    const auto dhf = nn::attention_backward(model.att_feat, rec.head.att_feat, dwf, grad->att_feat);
    for (std::size_t i = 0; i < n; ++i) {
      const int id = rec.head.ids[i];
      nn::Vec gb = dhb[i];
      nn::Vec gf = dhf[i];
      if (auto it = carry_b.find(id); it != carry_b.end())
        for (std::size_t q = 0; q < gb.size(); ++q) gb[q] += it->second[q];
      if (auto it = carry_f.find(id); it != carry_f.end())
        for (std::size_t q = 0; q < gf.size(); ++q) gf[q] += it->second[q];

      nn::gru_backward(model.gru_box, rec.head.gru_box[i], gb, grad->gru_box, dx, dh);
      if (rec.head.fresh[i]) carry_b.erase(id);
      else carry_b[id] = dh;

      nn::gru_backward(model.gru_feat, rec.head.gru_feat[i], gf, grad->gru_feat, dx, dh);
      if (rec.head.fresh[i]) carry_f.erase(id);
      else carry_f[id] = dh;

      // dx is dL/df; back through ReLU and the object projection
      const auto& oc = rec.feats[i];
      nn::Vec dpre(dx.size());
      for (std::size_t q = 0; q < dx.size(); ++q) dpre[q] = oc.pre[q] > 0.0 ? dx[q] : 0.0;
      const nn::Vec dp = nn::linear_backward(model.object_fc, oc.fc, dpre, grad->object_fc);
      // only the event-branch channels of the max readout depend on parameters
      for (std::size_t c = 0; c < cg; ++c) {
        const int a = oc.argmax[c];
        if (a < 0) continue;
        d_final[static_cast<std::size_t>(oc.nodes[static_cast<std::size_t>(a)]) * cg + c] += dp[c];
      }
    }
  }
  gnn_backward(model, scenario.graph, acts, d_final, *grad);
  return mean;
}

// ---------------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr_head", lr_head},
          {"lr_gnn", lr_gnn},
          {"weight_decay", weight_decay},
          {"class_weights", {class_weights.negative, class_weights.positive}},
          {"plateau_factor", plateau_factor},
          {"plateau_patience", plateau_patience},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_head = j.value("lr_head", c.lr_head);
    c.lr_gnn = j.value("lr_gnn", c.lr_gnn);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    if (j.contains("class_weights")) {
      const auto& w = j.at("class_weights");
      c.class_weights.negative = w.at(0).get<double>();
      c.class_weights.positive = w.at(1).get<double>();
    }
    c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (c.epochs < 0 || c.batch_size < 1) throw ConfigError("epochs must be >= 0 and batch_size >= 1");
  if (c.lr_head < 0.0 || c.lr_gnn < 0.0 || c.weight_decay < 0.0) throw ConfigError("rates must be non-negative");
  if (!(c.plateau_factor > 0.0 && c.plateau_factor <= 1.0)) throw ConfigError("plateau_factor must be in (0, 1]");
  return c;
}

namespace {

struct ParamGroup {
  std::vector<nn::Tensor*> params;
  std::vector<const nn::Tensor*> grads;
};

void add_into(HybridModel& acc, HybridModel& g) {
  std::vector<nn::Tensor*> dst, src;
  acc.for_each_trainable([&](const std::string&, nn::Tensor& t) { dst.push_back(&t); });
  g.for_each_trainable([&](const std::string&, nn::Tensor& t) { src.push_back(&t); });
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t q = 0; q < dst[i]->size(); ++q) (*dst[i])[q] += (*src[i])[q];
}

}  // namespace

TrainResult train(HybridModel& model, const std::vector<PreparedScenario>& data, const TrainConfig& cfg,
                  const TrainObserver& observer) {
  TrainResult result;
  if (data.empty()) throw InvalidInput("training set is empty");
  nn::Adam head(nn::AdamConfig{cfg.lr_head});
  nn::Adam gnn(nn::adamw_config(cfg.lr_gnn, cfg.weight_decay));
  HybridModel grad = model.zeros_like();
  ParamGroup head_group, gnn_group;
  model.for_each_head([&](const std::string&, nn::Tensor& t) { head_group.params.push_back(&t); });
  grad.for_each_head([&](const std::string&, nn::Tensor& t) { head_group.grads.push_back(&t); });
  model.for_each_gnn([&](const std::string&, nn::Tensor& t) { gnn_group.params.push_back(&t); });
  grad.for_each_gnn([&](const std::string&, nn::Tensor& t) { gnn_group.grads.push_back(&t); });

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t b = std::min(bs, order.size() - start);
      std::vector<HybridModel> grads(b);
      std::vector<double> losses(b, 0.0);
      // Each scenario writes its own buffer; the reduction below runs in a fixed order.
#pragma omp parallel for schedule(dynamic)
      for (std::int64_t s = 0; s < static_cast<std::int64_t>(b); ++s) {
        const auto su = static_cast<std::size_t>(s);
        grads[su] = grad.zeros_like();
        losses[su] = scenario_loss(model, data[order[start + su]], cfg.class_weights, &grads[su],
                                   1.0 / static_cast<double>(b));
      }
      grad.for_each_trainable([](const std::string&, nn::Tensor& t) { t.fill(0.0); });
      double batch_loss = 0.0;
      for (std::size_t s = 0; s < b; ++s) {
        add_into(grad, grads[s]);
        batch_loss += losses[s];
      }
      batch_loss /= static_cast<double>(b);
      if (!std::isfinite(batch_loss)) throw StateError("training loss became non-finite");
      head.step(head_group.params, head_group.grads);
      gnn.step(gnn_group.params, gnn_group.grads);
      result.step_loss.push_back(batch_loss);
      epoch_sum += batch_loss * static_cast<double>(b);
    }
    const double epoch_loss = epoch_sum / static_cast<double>(order.size());
    result.epoch_loss.push_back(epoch_loss);
    if (epoch_loss < best) {
      best = epoch_loss;
      stale = 0;
    } else if (++stale >= cfg.plateau_patience) {
      head.config().lr *= cfg.plateau_factor;
      gnn.config().lr *= cfg.plateau_factor;
      stale = 0;
    }
    if (observer) observer(epoch, epoch_loss);
  }
  return result;
}

}  // namespace eae
