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

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eae/event_io.hpp"
#include "eae/pipeline.hpp"

namespace eae {

struct EvalConfig {
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double tta_threshold = 0.5;     // s-bar
  double detect_threshold = 0.5;  // theta
  double fps = 20.0;

  void validate() const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

struct Scored {
  double score = 0.0;
  int label = 0;
};
using ScoredSet = std::vector<Scored>;

// Mann-Whitney: P(pos > neg) + P(tie) / 2, via midranks.
double roc_auc(const ScoredSet& set);
// Step AP with equal scores treated as one group.
double average_precision(const ScoredSet& set);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;  // FPR or recall
  double y = 0.0;  // TPR or precision
};
std::vector<CurvePoint> roc_curve(const ScoredSet& set);
std::vector<CurvePoint> pr_curve(const ScoredSet& set);

// Pools (frame score, frame label) over scenarios; timelines[i] pairs with labels[i].
ScoredSet frame_scored_set(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels);
// Pools (object score, object label) over every scored object-frame.
ScoredSet object_scored_set(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels);

double auc_frame(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels);

// Â_t = 1 iff frame score > theta.
std::vector<int> detect(const RiskTimeline& timeline, double theta);

// Response time of one detection: (T_detect - T_occurrence) + T_inference, seconds.
double response_time(std::uint64_t t_detect_us, std::uint64_t t_occurrence_us, double t_inference_s);

struct ScenarioTta {
  std::string id;
  double tta = 0.0;                       // seconds, >= 0
  std::optional<std::uint64_t> first_us;  // first exceedance before the accident
};

// Per positive scenario (collision time and risky object known).
std::vector<ScenarioTta> tta_per_scenario(const std::vector<RiskTimeline>& timelines,
                                          const std::vector<LabelSet>& labels, double s_bar);
double mtta(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels, double s_bar);

struct ResponseBreakdown {
  double mresponse = 0.0;              // seconds
  std::vector<double> per_threshold;   // mean Response_j over scenarios
  std::size_t misses = 0;              // (scenario, threshold) pairs that never detected
  std::size_t scenarios = 0;
};

// inference_s[i]: mean per-frame inference time of scenario i, seconds.
ResponseBreakdown mresponse_breakdown(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels,
                                      const EvalConfig& cfg, const std::vector<double>& inference_s);
double mresponse(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels,
                 const EvalConfig& cfg, const std::vector<double>& inference_s);

// Mean infer_us of a timeline, in seconds.
double mean_inference_s(const RiskTimeline& timeline);

// Full evaluation report (all metrics, config echo, per-scenario breakdown).
nlohmann::json evaluate(const std::vector<RiskTimeline>& timelines, const std::vector<LabelSet>& labels,
                        const EvalConfig& cfg);

std::string curve_to_csv(const std::vector<CurvePoint>& curve, const std::string& x_name, const std::string& y_name);

}  // namespace eae
