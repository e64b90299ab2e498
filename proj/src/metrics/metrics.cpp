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

#include "eae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace eae {

void EvalConfig::validate() const {
  if (thresholds.empty()) throw InvalidInput("mResponse needs at least one threshold");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) throw InvalidInput("thresholds must lie in (0, 1)");
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) throw InvalidInput("thresholds must be strictly increasing");
  }
  if (!(tta_threshold > 0.0 && tta_threshold < 1.0)) throw InvalidInput("s-bar must lie in (0, 1)");
  if (!(detect_threshold > 0.0 && detect_threshold < 1.0)) throw InvalidInput("theta must lie in (0, 1)");
  if (!(fps > 0.0)) throw InvalidInput("fps must be positive");
}

nlohmann::json EvalConfig::to_json() const {
  return {{"thresholds", thresholds},
          {"tta_threshold", tta_threshold},
          {"detect_threshold", detect_threshold},
          {"fps", fps}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  try {
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<std::vector<double>>();
    c.tta_threshold = j.value("tta_threshold", c.tta_threshold);
    c.detect_threshold = j.value("detect_threshold", c.detect_threshold);
    c.fps = j.value("fps", c.fps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("eval config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::pair<std::size_t, std::size_t> class_counts(const ScoredSet& set) {
  std::size_t pos = 0;
  for (const auto& s : set) {
    if (s.label != 0 && s.label != 1) throw InvalidInput("labels must be 0 or 1");
    if (!std::isfinite(s.score)) throw InvalidInput("scores must be finite");
    pos += static_cast<std::size_t>(s.label);
  }
  return {pos, set.size() - pos};
}

ScoredSet sorted_desc(const ScoredSet& set) {
  ScoredSet v = set;
  std::stable_sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return v;
}

}  // namespace

double roc_auc(const ScoredSet& set) {
  const auto [pos, neg] = class_counts(set);
  if (pos == 0 || neg == 0) throw UndefinedMetric("ROC-AUC needs both classes");
  ScoredSet v = set;
  std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::size_t p = 0;
    while (j < v.size() && v[j].score == v[i].score) p += static_cast<std::size_t>(v[j++].label);
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    rank_sum += midrank * static_cast<double>(p);
    i = j;
  }
  const double np = static_cast<double>(pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(neg));
}

double average_precision(const ScoredSet& set) {
  const auto [pos, neg] = class_counts(set);
  (void)neg;
  if (pos == 0) throw UndefinedMetric("average precision needs at least one positive");
  const ScoredSet v = sorted_desc(set);
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::size_t p = 0;
    while (j < v.size() && v[j].score == v[i].score) p += static_cast<std::size_t>(v[j++].label);
    tp += p;
    if (p > 0) ap += static_cast<double>(p) * (static_cast<double>(tp) / static_cast<double>(j));
    i = j;
  }
  return ap / static_cast<double>(pos);
}

std::vector<CurvePoint> roc_curve(const ScoredSet& set) {
  const auto [pos, neg] = class_counts(set);
  if (pos == 0 || neg == 0) throw UndefinedMetric("ROC curve needs both classes");
  const ScoredSet v = sorted_desc(set);
  std::vector<CurvePoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) {
      (v[j].label ? tp : fp) += 1;
      ++j;
    }
    out.push_back({v[i].score, static_cast<double>(fp) / static_cast<double>(neg),
                   static_cast<double>(tp) / static_cast<double>(pos)});
    i = j;
  }
  return out;
}

std::vector<CurvePoint> pr_curve(const ScoredSet& set) {
  const auto [pos, neg] = class_counts(set);
  (void)neg;
  if (pos == 0) throw UndefinedMetric("PR curve needs at least one positive");
  const ScoredSet v = sorted_desc(set);
  std::vector<CurvePoint> out;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) tp += static_cast<std::size_t>(v[j++].label);
    out.push_back({v[i].score, static_cast<double>(tp) / static_cast<double>(pos),
                   static_cast<double>(tp) / static_cast<double>(j)});
    i = j;
  }
  return out;
}

namespace {

void check_pairing(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels) {
  if (timelines.size() != labels.size()) throw InvalidInput("timelines and label sets must pair one to one");
}

}  // namespace

ScoredSet frame_scored_set(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels) {
  check_pairing(timelines, labels);
  ScoredSet set;
  for (std::size_t s = 0; s < timelines.size(); ++s) {
    for (const auto& f : timelines[s].frames) {
      const auto k = static_cast<std::size_t>(f.frame);
      if (f.frame < 0 || k >= labels[s].frame_labels.size())
        throw InvalidInput("scored frame " + std::to_string(f.frame) + " has no label");
      set.push_back({f.frame_score, labels[s].frame_labels[k]});
    }
  }
  return set;
}

ScoredSet object_scored_set(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels) {
  check_pairing(timelines, labels);
  ScoredSet set;
  for (std::size_t s = 0; s < timelines.size(); ++s) {
    for (const auto& f : timelines[s].frames) {
      for (const auto& [id, score] : f.objects) {
        int label = 0;
        const auto it = labels[s].object_labels.find(id);
        if (it != labels[s].object_labels.end() && static_cast<std::size_t>(f.frame) < it->second.size())
          label = it->second[static_cast<std::size_t>(f.frame)];
        set.push_back({score, label});
      }
    }
  }
  return set;
}

double auc_frame(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels) {
  return roc_auc(frame_scored_set(timelines, labels));
}

std::vector<int> detect(const RiskTimeline& timeline, double theta) {
  std::vector<int> out;
  out.reserve(timeline.frames.size());
  for (const auto& f : timeline.frames) out.push_back(f.frame_score > theta ? 1 : 0);
  return out;
}

double response_time(std::uint64_t t_detect_us, std::uint64_t t_occurrence_us, double t_inference_s) {
  return (static_cast<double>(t_detect_us) - static_cast<double>(t_occurrence_us)) / 1e6 + t_inference_s;
}

std::vector<ScenarioTta> tta_per_scenario(const std::vector<RiskTimeline>& timelines,
                                          const std::vector<LabelSet>& labels, double s_bar) {
  check_pairing(timelines, labels);
  std::vector<ScenarioTta> out;
  for (std::size_t s = 0; s < timelines.size(); ++s) {
    const auto& lab = labels[s];
    if (!lab.collision_us || !lab.risky_object) continue;
    ScenarioTta r;
    r.id = timelines[s].scenario_id;
    for (const auto& f : timelines[s].frames) {
      if (f.t_us >= *lab.collision_us) break;
      const auto it = std::find_if(f.objects.begin(), f.objects.end(),
                                   [&](const auto& o) { return o.first == *lab.risky_object; });
      if (it != f.objects.end() && it->second > s_bar) {
        r.first_us = f.t_us;
        break;
      }
    }
    if (r.first_us) r.tta = static_cast<double>(*lab.collision_us - *r.first_us) / 1e6;
    out.push_back(std::move(r));
  }
  return out;
}

double mtta(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels, double s_bar) {
  const auto per = tta_per_scenario(timelines, labels, s_bar);
  if (per.empty()) throw UndefinedMetric("mTTA needs at least one positive scenario");
  double sum = 0.0;
  for (const auto& r : per) sum += r.tta;
  return sum / static_cast<double>(per.size());
}

double mean_inference_s(const RiskTimeline& timeline) {
  if (timeline.frames.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : timeline.frames) sum += f.infer_us;
  return sum / static_cast<double>(timeline.frames.size()) / 1e6;
}

ResponseBreakdown mresponse_breakdown(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels,
                                      const EvalConfig& cfg, const std::vector<double>& inference_s) {
  check_pairing(timelines, labels);
  cfg.validate();
  if (inference_s.size() != timelines.size()) throw InvalidInput("one inference time per scenario is required");
  ResponseBreakdown out;
  std::vector<std::size_t> positives;
  for (std::size_t s = 0; s < timelines.size(); ++s)
    if (labels[s].onset_us && !timelines[s].frames.empty()) positives.push_back(s);
  if (positives.empty()) throw UndefinedMetric("mResponse needs at least one scenario with an anomaly onset");
  out.scenarios = positives.size();
  const double n = static_cast<double>(positives.size());
  double infer = 0.0;
  for (const std::size_t s : positives) infer += inference_s[s];
  infer /= n;
  // delays are accumulated in integer microseconds so hand-checkable cases stay exact
  std::uint64_t total_us = 0;
  for (const double th : cfg.thresholds) {
    std::uint64_t delay_us = 0;
    for (const std::size_t s : positives) {
      const std::uint64_t occ = *labels[s].onset_us;
      const auto& frames = timelines[s].frames;
      std::optional<std::uint64_t> hit;
      for (const auto& f : frames) {
        if (f.t_us >= occ && f.frame_score > th) {
          hit = f.t_us;
          break;
        }
      }
      if (!hit) {
        ++out.misses;
        hit = std::max(frames.back().t_us, occ);
      }
      delay_us += *hit - occ;
    }
    total_us += delay_us;
    out.per_threshold.push_back(static_cast<double>(delay_us) / n / 1e6 + infer);
  }
  const double m = static_cast<double>(cfg.thresholds.size());
  out.mresponse = static_cast<double>(total_us) / (m * n) / 1e6 + infer;
  return out;
}

double mresponse(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels,
                 const EvalConfig& cfg, const std::vector<double>& inference_s) {
  return mresponse_breakdown(timelines, labels, cfg, inference_s).mresponse;
}

nlohmann::json evaluate(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels,
                        const EvalConfig& cfg) {
  using nlohmann::json;
  cfg.validate();
  json report;
  report["config"] = cfg.to_json();
  report["conventions"] = {{"frame_score", "max over object scores, 0 when no objects"},
                           {"mresponse_miss_penalty", "scenario end - T_occurrence + T_inference"},
                           {"detect", "strict: score > theta"},
                           {"tta_clamp", "0 when the risky object never exceeds s_bar before the accident"}};
  const auto metric = [&](const char* name, auto&& fn) {
    try {
      report["metrics"][name] = fn();
    } catch (const UndefinedMetric& e) {
      report["metrics"][name] = nullptr;
      report["undefined"][name] = e.what();
    }
  };
  const ScoredSet objects = object_scored_set(timelines, labels);
  metric("auc", [&] { return roc_auc(objects); });
  metric("ap", [&] { return average_precision(objects); });
  metric("auc_frame", [&] { return auc_frame(timelines, labels); });
  metric("mtta_s", [&] { return mtta(timelines, labels, cfg.tta_threshold); });
  std::vector<double> inference;
  for (const auto& tl : timelines) inference.push_back(mean_inference_s(tl));
  try {
    const auto br = mresponse_breakdown(timelines, labels, cfg, inference);
    report["metrics"]["mresponse_s"] = br.mresponse;
    report["mresponse"] = {{"per_threshold", br.per_threshold}, {"misses", br.misses}, {"scenarios", br.scenarios}};
  } catch (const UndefinedMetric& e) {
    report["metrics"]["mresponse_s"] = nullptr;
    report["undefined"]["mresponse_s"] = e.what();
  }
  double infer_sum = 0.0;
  for (const double v : inference) infer_sum += v;
  report["metrics"]["mean_inference_s"] = inference.empty() ? 0.0 : infer_sum / static_cast<double>(inference.size());

  const auto ttas = tta_per_scenario(timelines, labels, cfg.tta_threshold);
  std::size_t early = 0;
  for (const auto& t : ttas) early += t.tta > 0.0 ? 1 : 0;
  report["metrics"]["positives_detected_early"] = early;
  report["metrics"]["positives"] = ttas.size();

  json per = json::array();
  for (std::size_t s = 0; s < timelines.size(); ++s) {
    const auto det = detect(timelines[s], cfg.detect_threshold);
    json row = {{"id", timelines[s].scenario_id},
                {"frames", timelines[s].frames.size()},
                {"positive", labels[s].onset_us.has_value()},
                {"detected_frames", std::accumulate(det.begin(), det.end(), 0)},
                {"mean_inference_s", inference[s]}};
    double peak = 0.0;
    for (const auto& f : timelines[s].frames) peak = std::max(peak, f.frame_score);
    row["max_frame_score"] = peak;
    for (const auto& t : ttas)
      if (t.id == timelines[s].scenario_id) row["tta_s"] = t.tta;
    per.push_back(std::move(row));
  }
  report["scenarios"] = std::move(per);
  return report;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve, const std::string& x_name, const std::string& y_name) {
  std::string out = "threshold," + x_name + "," + y_name + "\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.threshold, p.x, p.y);
    out += buf;
  }
  return out;
}

}  // namespace eae
