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

// Run manifests: every command records what it read, what it wrote and how,
// next to its outputs. `eae --replay <manifest>` re-executes the recorded argv.

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "eae/event_io.hpp"

namespace eae::cli {

inline constexpr const char* kToolVersion = "0.1.0";

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

  void config(const nlohmann::json& snapshot) { config_ = snapshot; }
  void input(const std::filesystem::path& p) { inputs_.push_back(p.string()); }
  void output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }
  void timing(const std::string& name, double seconds) { timings_[name] = seconds; }
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  nlohmann::json to_json(std::uint64_t seed, int threads) const {
    nlohmann::json j;
    j["command"] = command_;
    j["argv"] = argv_;
    j["tool_version"] = kToolVersion;
    j["seed"] = seed;
    j["threads"] = threads;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    nlohmann::json t = timings_;
    t["wall_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j["timings"] = t;
    if (!extra_.empty()) j["details"] = extra_;
    return j;
  }

  // Written atomically; `where` is a directory (manifest.json inside it) or an
  // output file (<file>.manifest.json beside it).
  std::filesystem::path write(const std::filesystem::path& where, std::uint64_t seed, int threads) const {
    const auto path = std::filesystem::is_directory(where) ? where / "manifest.json"
                                                           : std::filesystem::path(where.string() + ".manifest.json");
    write_file_atomic(path, to_json(seed, threads).dump(2) + "\n");
    return path;
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  nlohmann::json config_ = nlohmann::json::object();
  std::vector<std::string> inputs_, outputs_;
  nlohmann::json timings_ = nlohmann::json::object();
  nlohmann::json extra_ = nlohmann::json::object();
};

}  // namespace eae::cli
