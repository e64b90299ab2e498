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

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "eae/event_io.hpp"

namespace eae::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info ? std::string(info->test_suite_name()) + "." + info->name() : "eae";
    for (auto& c : name)
      if (c == '/') c = '_';
    path_ = std::filesystem::temp_directory_path() / ("eae-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline FrameSequence random_frames(std::mt19937_64& rng, int w, int h, int n, double fps = 20.0) {
  FrameSequence fs;
  fs.width = w;
  fs.height = h;
  fs.fps = fps;
  std::uniform_int_distribution<int> px(0, 255);
  const auto period = static_cast<std::uint64_t>(1e6 / fps);
  for (int k = 0; k < n; ++k) {
    Frame f;
    f.t_us = static_cast<std::uint64_t>(k) * period;
    f.pixels.resize(static_cast<std::size_t>(w * h));
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(px(rng));
    fs.frames.push_back(std::move(f));
  }
  return fs;
}

inline FrameSequence constant_frames(int w, int h, int n, std::uint8_t v) {
  FrameSequence fs;
  fs.width = w;
  fs.height = h;
  for (int k = 0; k < n; ++k) fs.frames.push_back({static_cast<std::uint64_t>(k) * 50'000, std::vector<std::uint8_t>(static_cast<std::size_t>(w * h), v)});
  return fs;
}

}  // namespace eae::testing
