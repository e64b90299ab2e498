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

#include <cstring>

#include "eae/archive.hpp"
#include "eae/event_io.hpp"

namespace eae {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'H', 'N', 'W', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

const nn::Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw ParseError(ParseError::Kind::kManifest, 0, "archive has no tensor '" + name + "'");
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string encode_archive(const TensorArchive& archive) {
  json manifest;
  manifest["format"] = "HNW1";
  manifest["meta"] = archive.meta;
  manifest["tensors"] = json::array();
  std::string data;
  for (const auto& nt : archive.tensors) {
    manifest["tensors"].push_back(
        {{"name", nt.name}, {"shape", nt.tensor.shape()}, {"dtype", "f64"}, {"offset", data.size()}});
    for (const double v : nt.tensor.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      put_u64(data, bits);
    }
  }
  manifest["data_bytes"] = data.size();
  const std::string m = manifest.dump();
  std::string out(kMagic, 4);
  put_u64(out, m.size());
  out += m;
  out += data;
  put_u64(out, fnv1a64({reinterpret_cast<const std::uint8_t*>(data.data()), data.size()}));
  return out;
}

TensorArchive decode_archive(std::string_view bytes) {
  using K = ParseError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError(K::kMagic, 0, "archive: bad magic");
  if (bytes.size() < 12) throw ParseError(K::kTruncated, bytes.size(), "archive: truncated header");
  const std::uint64_t mlen = get_u64(bytes.data() + 4);
  if (mlen > bytes.size() - 12) throw ParseError(K::kTruncated, 4, "archive: manifest length exceeds file");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(12, mlen));
  } catch (const json::exception& e) {
    throw ParseError(K::kManifest, 12, std::string("archive: malformed manifest: ") + e.what());
  }
  const std::size_t data_off = 12 + mlen;
  std::uint64_t data_bytes = 0;
  try {
    data_bytes = manifest.at("data_bytes").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw ParseError(K::kManifest, 12, "archive: manifest lacks data_bytes");
  }
  if (bytes.size() != data_off + data_bytes + 8)
    throw ParseError(K::kTruncated, bytes.size(), "archive: size does not match manifest");
  const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data() + data_off);
  const std::uint64_t stored = get_u64(bytes.data() + data_off + data_bytes);
  if (fnv1a64({data, data_bytes}) != stored)
    throw ParseError(K::kChecksum, data_off + data_bytes, "archive: data checksum mismatch");

  TensorArchive a;
  a.meta = manifest.value("meta", json::object());
  try {
    for (const auto& tj : manifest.at("tensors")) {
      if (tj.at("dtype").get<std::string>() != "f64") throw ParseError(K::kManifest, 12, "archive: unsupported dtype");
      NamedTensor nt{tj.at("name").get<std::string>(), nn::Tensor(tj.at("shape").get<std::vector<std::size_t>>())};
      const std::uint64_t off = tj.at("offset").get<std::uint64_t>();
      if (off + nt.tensor.size() * 8 > data_bytes)
        throw ParseError(K::kManifest, 12, "archive: tensor '" + nt.name + "' exceeds data section");
      for (std::size_t i = 0; i < nt.tensor.size(); ++i) {
        const std::uint64_t bits = get_u64(reinterpret_cast<const char*>(data + off + 8 * i));
        std::memcpy(&nt.tensor[i], &bits, sizeof(double));
      }
      a.tensors.push_back(std::move(nt));
    }
  } catch (const json::exception& e) {
    throw ParseError(K::kManifest, 12, std::string("archive: bad tensor entry: ") + e.what());
  }
  return a;
}

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  write_file_atomic(path, encode_archive(archive));
}

TensorArchive load_archive(const std::filesystem::path& path) { return decode_archive(read_file(path)); }

}  // namespace eae
