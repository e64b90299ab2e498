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

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include <json.hpp>
#include <openssl/evp.h>

#include "eae/event_io.hpp"
#include "eae/oracle.hpp"
#include "eae/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 20240601;

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void report_suite(int id, const eae::oracle::SuiteResult& r, double budget_s = 0.0) {
  bool ok = r.passed;
  std::string detail = r.detail + " (" + std::to_string(r.seconds) + " s)";
  if (budget_s > 0.0 && r.seconds >= budget_s) {
    ok = false;
    detail += " over budget " + std::to_string(budget_s) + " s";
  }
  report(id, r.name, ok, detail);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

int run_eae(const std::string& args) {
  const std::string cmd = std::string("EAE_LOG=warn ") + EAE_BINARY + " --threads 1 " + args + " >/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string sha256(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  char hex[2 * EVP_MAX_MD_SIZE + 1];
  for (unsigned int i = 0; i < len; ++i) std::snprintf(hex + 2 * i, 3, "%02x", md[i]);
  return std::string(hex, 2 * len);
}

// Digest over every output file except manifests, which hold wall-clock timings.
std::string tree_sha256(const fs::path& root) {
  std::map<std::string, std::string> files;
  if (fs::is_regular_file(root)) {
    files[root.filename().string()] = sha256(eae::read_file(root));
  } else {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      const std::string name = e.path().filename().string();
      if (!e.is_regular_file() || name == "manifest.json" || name.ends_with(".manifest.json")) continue;
      files[fs::relative(e.path(), root).string()] = sha256(eae::read_file(e.path()));
    }
  }
  std::string all;
  for (const auto& [k, v] : files) all += k + ' ' + v + '\n';
  return sha256(all);
}

// Fraction of post-onset frames where the risky object strictly outscores every
// other object, over cut-in (lane-merge) scenarios.
double cut_in_ranking(const fs::path& data, const fs::path& scores) {
  std::size_t hit = 0, total = 0;
  for (const auto& dir : eae::list_scenarios(data)) {
    const std::string id = dir.filename().string();
    if (!id.starts_with("lane-merge")) continue;
    const eae::LabelSet l = eae::read_labels(dir / "labels.json");
    if (!l.onset_us || !l.risky_object) continue;
    const eae::RiskTimeline tl = eae::timeline_from_jsonl(eae::read_file(scores / (id + ".jsonl")), id);
    for (const auto& f : tl.frames) {
      if (f.t_us < *l.onset_us) continue;
      double risky = -1.0, other = -1.0;
      for (const auto& [oid, s] : f.objects) {
        double& slot = oid == *l.risky_object ? risky : other;
        slot = std::max(slot, s);
      }
      if (risky < 0.0 || other < 0.0) continue;
      ++total;
      hit += risky > other ? 1 : 0;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

int main() {
  namespace oracle = eae::oracle;
  const fs::path work = fs::temp_directory_path() / ("eae-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);

  report_suite(1, oracle::gradient_suite(10, 1e-4), 120.0);
  report_suite(2, oracle::graph_suite(kSeed, 100, 200));
  report_suite(3, oracle::async_suite(kSeed, 20, 1e-9));
  report_suite(4, oracle::lut_suite(kSeed));
  report_suite(5, oracle::metric_suite(kSeed, 1000, 1e-12));

  // 6: train on 64 mixed scenarios, evaluate on 32 held-out ones.
  const fs::path train_dir = work / "train", test_dir = work / "test", model = work / "model.bin";
  const fs::path scores = work / "scores", eval_dir = work / "eval";
  {
    const auto t0 = std::chrono::steady_clock::now();
    bool ran = run_eae("synth --preset mix --seed 1000 --count 64 --out " + q(train_dir)) == 0 &&
               run_eae("synth --preset mix --seed 5000 --count 32 --out " + q(test_dir)) == 0 &&
               run_eae("train --seed 7 --data " + q(train_dir) + " --out " + q(model)) == 0 &&
               run_eae("infer --model " + q(model) + " --data " + q(test_dir) + " --out " + q(scores)) == 0 &&
               run_eae("eval --scores " + q(scores) + " --data " + q(test_dir) + " --out " + q(eval_dir)) == 0;
    const double wall = seconds_since(t0);
    if (!ran) {
      report(6, "end_to_end", false, "a command exited nonzero");
    } else {
      const json m = json::parse(eae::read_file(eval_dir / "report.json"))["metrics"];
      const double auc = m["auc"].is_null() ? 0.0 : m["auc"].get<double>();
      const double positives = m["positives"].get<double>();
      const double early = positives > 0 ? m["positives_detected_early"].get<double>() / positives : 0.0;
      char buf[256];
      std::snprintf(buf, sizeof buf, "object AUC %.4f (>= 0.90), TTA > 0 in %.1f%% of %d positives (>= 70%%), %.1f s (< 600 s)",
                    auc, 100.0 * early, static_cast<int>(positives), wall);
      report(6, "end_to_end", auc >= 0.90 && early >= 0.70 && wall < 600.0, buf);
      std::printf("INFO cut-in ranking: risky object outscores others in %.1f%% of post-onset frames (target 90%%)\n",
                  100.0 * cut_in_ranking(test_dir, scores));
    }
  }

  // 7: byte-identical re-runs of synth, train and infer.
  {
    const fs::path a = work / "det_a", b = work / "det_b";
    std::string detail;
    bool ok = true;
    for (const fs::path& d : {a, b}) {
      fs::create_directories(d);
      ok = ok && run_eae("synth --preset mix --seed 77 --count 4 --out " + q(d / "data")) == 0 &&
           run_eae("train --epochs 2 --seed 3 --data " + q(d / "data") + " --out " + q(d / "model.bin")) == 0 &&
           run_eae("infer --timing off --model " + q(d / "model.bin") + " --data " + q(d / "data") + " --out " +
               q(d / "scores")) == 0;
    }
    if (!ok) {
      report(7, "determinism", false, "a command exited nonzero");
    } else {
      for (const char* what : {"data", "model.bin", "model.bin.loss.csv", "scores"}) {
        const std::string x = tree_sha256(a / what), y = tree_sha256(b / what);
        ok = ok && x == y;
        detail += std::string(what) + (x == y ? " identical " : " differs ") + x.substr(0, 12) + "; ";
      }
      report(7, "determinism", ok, detail);
    }
  }

  // 8: incremental insertion speedup and bench fields.
  {
    const fs::path out = work / "bench.json";
    if (run_eae("bench --graph-nodes 10000 --insertions 100 --events-per-insert 1 --model " + q(model) + " --data " + q(test_dir) +
            " --out " + q(out)) != 0) {
      report(8, "latency", false, "bench exited nonzero");
    } else {
      const json b = json::parse(eae::read_file(out));
      const json& ins = b["insertion"];
      const double speedup = ins["speedup"].get<double>();
      const bool fields = b["scenario"].contains("events_per_s") && b["scenario"]["incremental"].contains("p50_us") &&
                          b["scenario"]["incremental"].contains("p95_us") &&
                          b["scenario"]["incremental"].contains("p99_us") && b.contains("flops_per_event") &&
                          b["scenario"]["events_per_s"].get<double>() > 0.0;
      char buf[256];
      std::snprintf(buf, sizeof buf, "%d nodes, median incremental %.1f us vs full %.1f us, speedup %.1fx (>= 5x), fields %s",
                    ins["graph_nodes"].get<int>(), ins["incremental_median_us"].get<double>(),
                    ins["full_median_us"].get<double>(), speedup, fields ? "present" : "missing");
      report(8, "latency", ins["graph_nodes"].get<int>() >= 10000 && speedup >= 5.0 && fields, buf);
    }
  }

  report_suite(9, oracle::normalization_suite(kSeed, 200));

  fs::remove_all(work);
  std::printf("%s\n", failures == 0 ? "ALL PASS" : (std::to_string(failures) + " FAILED").c_str());
  return failures == 0 ? 0 : 1;
}
