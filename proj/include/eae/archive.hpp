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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eae/nn.hpp"

namespace eae {

// HNW1 tensor container:
//   "HNW1" | u64 manifest length | manifest JSON | raw f64 LE data | u64 FNV-1a(data)
// The manifest holds free-form metadata plus, per tensor, its name, shape,
// dtype ("f64") and byte offset into the data section.
struct NamedTensor {
  std::string name;
  nn::Tensor tensor;
};

struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const nn::Tensor& get(const std::string& name) const;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::string encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(std::string_view bytes);
void save_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace eae
