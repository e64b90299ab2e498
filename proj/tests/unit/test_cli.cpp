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

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "eae/event_io.hpp"
#include "eae/metrics.hpp"
#include "eae/oracle.hpp"
#include "eae/pipeline.hpp"
#include "test_util.hpp"

namespace eae {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

int run_eae(const std::string& args) {
  const std::string cmd = std::string("EAE_LOG=error ") + EAE_BINARY + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string sha256(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// Relative path -> digest for every regular file under `root`; manifests
// carry wall-clock timings and are skipped.
std::map<std::string, std::string> tree_digest(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (fs::is_regular_file(root)) {
    out[root.filename().string()] = sha256(read_file(root));
    return out;
  }
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == "manifest.json" || name.ends_with(".manifest.json")) continue;
    out[fs::relative(e.path(), root).string()] = sha256(read_file(e.path()));
  }
  return out;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

TEST(CliSynth, NormalPresetIsAllNegative) {
  TempDir tmp;
  ASSERT_EQ(run_eae("synth --preset normal --seed 7 --out " + q(tmp / "d")), 0);
  const auto dirs = list_scenarios(tmp / "d");
  ASSERT_EQ(dirs.size(), 1u);
  const LabelSet l = read_labels(dirs[0] / "labels.json");
  EXPECT_FALSE(l.onset_us);
  EXPECT_TRUE(std::all_of(l.frame_labels.begin(), l.frame_labels.end(), [](int v) { return v == 0; }));
  for (const auto& [id, v] : l.object_labels)
    EXPECT_TRUE(std::all_of(v.begin(), v.end(), [](int x) { return x == 0; })) << id;
  EXPECT_TRUE(fs::exists(tmp / "d" / "manifest.json"));
}

TEST(CliSynth, RushOutIsDeterministic) {
  TempDir tmp;
  ASSERT_EQ(run_eae("synth --preset rush-out --seed 7 --out " + q(tmp / "a")), 0);
  ASSERT_EQ(run_eae("synth --preset rush-out --seed 7 --out " + q(tmp / "b")), 0);
  const auto a = tree_digest(tmp / "a");
  EXPECT_GT(a.size(), 5u);
  EXPECT_EQ(a, tree_digest(tmp / "b"));
}

TEST(CliSynth, LaneMergeOnsetInsideScenario) {
  TempDir tmp;
  ASSERT_EQ(run_eae("synth --preset lane-merge --seed 3 --count 3 --out " + q(tmp / "d")), 0);
  const auto dirs = list_scenarios(tmp / "d");
  ASSERT_EQ(dirs.size(), 3u);
  for (const auto& d : dirs) {
    const ScenarioSpec spec = read_scenario_spec(d / "scenario.json");
    const LabelSet l = read_labels(d / "labels.json");
    ASSERT_TRUE(l.onset_us);
    EXPECT_GT(*l.onset_us, 0u);
    EXPECT_LT(*l.onset_us, spec.duration_us);
  }
}

TEST(CliSynth, ReplayReproducesOutputs) {
  TempDir tmp;
  ASSERT_EQ(run_eae("synth --preset oncoming --seed 11 --count 2 --out " + q(tmp / "d")), 0);
  const auto before = tree_digest(tmp / "d");
  fs::copy(tmp / "d" / "manifest.json", tmp / "m.json");
  fs::remove_all(tmp / "d");
  ASSERT_EQ(run_eae("--replay " + q(tmp / "m.json")), 0);
  EXPECT_EQ(tree_digest(tmp / "d"), before);
}

TEST(CliUsage, ExitCodes) {
  TempDir tmp;
  EXPECT_EQ(run_eae("--no-such-flag"), 1);
  EXPECT_EQ(run_eae(""), 1);
  EXPECT_EQ(run_eae("synth"), 1);  // --out is required
  EXPECT_EQ(run_eae("synth --preset no-such-preset --out " + q(tmp / "d")), 2);
  fs::create_directories(tmp / "empty");
  EXPECT_EQ(run_eae("train --data " + q(tmp / "empty") + " --out " + q(tmp / "m.bin")), 2);

  ASSERT_EQ(run_eae("synth --preset normal --out " + q(tmp / "d")), 0);
  const auto dir = list_scenarios(tmp / "d").front();
  std::ofstream(dir / "events.evt", std::ios::binary | std::ios::trunc) << "EVT1garbage";
  EXPECT_EQ(run_eae("train --epochs 1 --data " + q(tmp / "d") + " --out " + q(tmp / "m.bin")), 2);
}

// ---------------------------------------------------------------------------

class CliModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new TempDir;
    ASSERT_EQ(run_eae("synth --preset mix --seed 21 --count 3 --out " + q(*tmp_ / "data")), 0);
    ASSERT_EQ(run_eae("train --epochs 1 --seed 5 --data " + q(*tmp_ / "data") + " --out " + q(*tmp_ / "m.bin")), 0);
  }
  static void TearDownTestSuite() {
    delete tmp_;
    tmp_ = nullptr;
  }
  static TempDir* tmp_;
};
TempDir* CliModel::tmp_ = nullptr;

TEST_F(CliModel, TrainWritesNonNegativeLossCurve) {
  std::istringstream csv(read_file(*tmp_ / "m.bin.loss.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,epoch,loss");
  int rows = 0;
  while (std::getline(csv, line)) {
    const double loss = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(loss, 0.0);
    ++rows;
  }
  EXPECT_GT(rows, 0);
  EXPECT_TRUE(fs::exists(*tmp_ / "m.bin.manifest.json"));
}

TEST_F(CliModel, ZeroEpochsSavesInitialization) {
  const fs::path dir = *tmp_ / "zero";
  fs::create_directories(dir);
  ASSERT_EQ(run_eae("train --epochs 0 --data " + q(*tmp_ / "data") + " --out " + q(dir / "m.bin")), 0);
  const HybridModel trained = load_model(dir / "m.bin");
  save_model(HybridModel::create(trained.cfg), dir / "init.bin");
  EXPECT_EQ(read_file(dir / "m.bin"), read_file(dir / "init.bin"));
}

TEST_F(CliModel, BatchAndIncrementalAgree) {
  const fs::path a = *tmp_ / "inc", b = *tmp_ / "bat";
  ASSERT_EQ(run_eae("infer --mode incremental --model " + q(*tmp_ / "m.bin") + " --data " + q(*tmp_ / "data") +
                    " --out " + q(a)), 0);
  ASSERT_EQ(run_eae("infer --mode batch --model " + q(*tmp_ / "m.bin") + " --data " + q(*tmp_ / "data") +
                    " --out " + q(b)), 0);
  int frames = 0;
  for (const auto& dir : list_scenarios(*tmp_ / "data")) {
    const std::string id = dir.filename().string();
    const RiskTimeline x = timeline_from_jsonl(read_file(a / (id + ".jsonl")));
    const RiskTimeline y = timeline_from_jsonl(read_file(b / (id + ".jsonl")));
    ASSERT_EQ(x.frames.size(), y.frames.size());
    for (std::size_t k = 0; k < x.frames.size(); ++k) {
      EXPECT_NEAR(x.frames[k].frame_score, y.frames[k].frame_score, 1e-9);
      ASSERT_EQ(x.frames[k].objects.size(), y.frames[k].objects.size());
      for (std::size_t i = 0; i < x.frames[k].objects.size(); ++i)
        EXPECT_NEAR(x.frames[k].objects[i].second, y.frames[k].objects[i].second, 1e-9);
      ++frames;
    }
  }
  EXPECT_GT(frames, 0);
}

TEST_F(CliModel, EvalReportSchemaAndOracleCheck) {
  const fs::path scores = *tmp_ / "scores", out = *tmp_ / "eval";
  ASSERT_EQ(run_eae("infer --model " + q(*tmp_ / "m.bin") + " --data " + q(*tmp_ / "data") + " --out " + q(scores)), 0);
  ASSERT_EQ(run_eae("eval --scores " + q(scores) + " --data " + q(*tmp_ / "data") + " --out " + q(out)), 0);
  const json r = json::parse(read_file(out / "report.json"));
  for (const char* key : {"auc", "ap", "auc_frame", "mtta_s", "mresponse_s"}) EXPECT_TRUE(r["metrics"].contains(key)) << key;
  EXPECT_EQ(r["config"]["thresholds"].size(), 9u);
  EXPECT_EQ(r["scenarios"].size(), 3u);
  for (const auto& [name, c] : r["oracle_check"].items())
    if (!c["match"].is_null()) {
      EXPECT_TRUE(c["match"].get<bool>()) << name;
    }
  EXPECT_TRUE(fs::exists(out / "roc_frame.csv"));
}

// ---------------------------------------------------------------------------

// Scores written by hand against synthesized labels.
void write_scores(const fs::path& data, const fs::path& out, const std::function<double(int, int)>& score) {
  fs::create_directories(out);
  for (const auto& dir : list_scenarios(data)) {
    const LabelSet l = read_labels(dir / "labels.json");
    RiskTimeline tl;
    tl.scenario_id = dir.filename().string();
    for (std::size_t k = 0; k < l.frame_labels.size(); ++k) {
      TimelineFrame f;
      f.frame = static_cast<int>(k);
      f.t_us = k * 50'000;
      for (const auto& [id, v] : l.object_labels) {
        f.objects.push_back({id, score(id, static_cast<int>(k))});
        f.frame_score = std::max(f.frame_score, f.objects.back().second);
      }
      tl.frames.push_back(f);
    }
    write_file_atomic(out / (tl.scenario_id + ".jsonl"), timeline_to_jsonl(tl));
  }
}

TEST(CliEval, ConstantScoresExitZeroWithUndefinedAuc) {
  TempDir tmp;
  ASSERT_EQ(run_eae("synth --preset normal --seed 2 --count 2 --out " + q(tmp / "d")), 0);
  write_scores(tmp / "d", tmp / "s", [](int, int) { return 0.5; });
  ASSERT_EQ(run_eae("eval --scores " + q(tmp / "s") + " --data " + q(tmp / "d") + " --out " + q(tmp / "e")), 0);
  const json r = json::parse(read_file(tmp / "e" / "report.json"));
  EXPECT_TRUE(r["metrics"]["auc"].is_null());
  EXPECT_TRUE(r["undefined"].contains("auc"));
}

TEST(CliEval, MiniFixtureMatchesOracles) {
  TempDir tmp;
  ASSERT_EQ(run_eae("synth --preset mix --seed 4 --count 4 --out " + q(tmp / "d")), 0);
  std::mt19937_64 rng(9);
  std::map<std::pair<int, int>, double> table;
  const auto score = [&](int id, int k) {
    auto [it, fresh] = table.try_emplace({id, k}, 0.0);
    if (fresh) it->second = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return it->second;
  };
  write_scores(tmp / "d", tmp / "s", score);
  ASSERT_EQ(run_eae("eval --scores " + q(tmp / "s") + " --data " + q(tmp / "d") + " --out " + q(tmp / "e")), 0);
  const json r = json::parse(read_file(tmp / "e" / "report.json"));

  ScoredSet objects, frames;
  for (const auto& dir : list_scenarios(tmp / "d")) {
    const LabelSet l = read_labels(dir / "labels.json");
    const RiskTimeline tl = timeline_from_jsonl(read_file(tmp / "s" / (dir.filename().string() + ".jsonl")));
    for (const auto& f : tl.frames) {
      frames.push_back({f.frame_score, l.frame_labels[static_cast<std::size_t>(f.frame)]});
      for (const auto& [id, s] : f.objects) objects.push_back({s, l.object_labels.at(id)[static_cast<std::size_t>(f.frame)]});
    }
  }
  EXPECT_NEAR(r["metrics"]["auc"].get<double>(), oracle::auc_pairwise(objects), 1e-12);
  EXPECT_NEAR(r["metrics"]["ap"].get<double>(), oracle::ap_rank_scan(objects), 1e-12);
  EXPECT_NEAR(r["metrics"]["auc_frame"].get<double>(), oracle::auc_pairwise(frames), 1e-12);
}

TEST(CliEval, UnknownScenarioIsDataError) {
  TempDir tmp;
  ASSERT_EQ(run_eae("synth --preset normal --out " + q(tmp / "d")), 0);
  write_scores(tmp / "d", tmp / "s", [](int, int) { return 0.3; });
  write_file_atomic(tmp / "s" / "ghost.jsonl", "");
  EXPECT_EQ(run_eae("eval --scores " + q(tmp / "s") + " --data " + q(tmp / "d") + " --out " + q(tmp / "e")), 2);
}

// ---------------------------------------------------------------------------

TEST(CliBench, EmptyScenarioFlagsNoData) {
  TempDir tmp;
  ScenarioSpec spec;
  spec.duration_us = 500'000;
  write_scenario_spec(spec, tmp / "empty.json");
  ASSERT_EQ(run_eae("synth --spec " + q(tmp / "empty.json") + " --out " + q(tmp / "d")), 0);

  const std::string bench = "bench --graph-nodes 2000 --insertions 5 --data " + q(tmp / "d");
  ASSERT_EQ(run_eae(bench + " --out " + q(tmp / "b1.json")), 0);
  ASSERT_EQ(run_eae(bench + " --out " + q(tmp / "b2.json")), 0);
  const json b1 = json::parse(read_file(tmp / "b1.json"));
  const json b2 = json::parse(read_file(tmp / "b2.json"));
  EXPECT_TRUE(b1["scenario"]["no_data"].get<bool>());
  EXPECT_EQ(b1["scenario"]["events"].get<int>(), 0);
  EXPECT_EQ(b1["flops_per_event"], b2["flops_per_event"]);
  for (const char* k : {"p50_us", "p95_us", "p99_us"}) EXPECT_TRUE(b1["scenario"]["incremental"].contains(k));
  EXPECT_GE(b1["insertion"]["graph_nodes"].get<int>(), 2000);
}

TEST(CliInfer, EmptyScenarioScoresZero) {
  TempDir tmp;
  ScenarioSpec spec;
  spec.duration_us = 500'000;
  write_scenario_spec(spec, tmp / "empty.json");
  ASSERT_EQ(run_eae("synth --spec " + q(tmp / "empty.json") + " --out " + q(tmp / "d")), 0);
  ASSERT_EQ(run_eae("train --epochs 0 --data " + q(tmp / "d") + " --out " + q(tmp / "m.bin")), 0);
  ASSERT_EQ(run_eae("infer --model " + q(tmp / "m.bin") + " --data " + q(tmp / "d") + " --out " + q(tmp / "s")), 0);
  const auto dir = list_scenarios(tmp / "d").front();
  const RiskTimeline tl = timeline_from_jsonl(read_file(tmp / "s" / (dir.filename().string() + ".jsonl")));
  ASSERT_EQ(tl.frames.size(), 10u);
  for (const auto& f : tl.frames) {
    EXPECT_TRUE(f.objects.empty());
    EXPECT_EQ(f.frame_score, 0.0);
  }
}

TEST(CliSelftest, Passes) { EXPECT_EQ(run_eae("selftest"), 0); }

}  // namespace
}  // namespace eae
