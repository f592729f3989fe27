// Copyright 2026 The lowrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lowrank/matrix.hpp"
#include "lowrank/model.hpp"

namespace lowrank {

// Container layout (little-endian):
//   "TLMC" | u32 version | u32 header_len | header JSON |
//   u32 record_count | records...
// record: u32 name_len | name | u8 dtype | u32 rank | u64 dims[rank] | data
inline constexpr char kCheckpointMagic[4] = {'T', 'L', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

struct TensorRecord {
  std::string name;
  DenseMatrix value;
};

struct TensorFile {
  nlohmann::json header = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  /// nullptr when absent.
  const DenseMatrix* find(std::string_view name) const;
  /// Throws FormatError naming the tensor when absent.
  const DenseMatrix& require(std::string_view name) const;
};

std::string encode_tensor_file(const TensorFile& file);
/// Throws FormatError on bad magic, version mismatch or truncation.
TensorFile decode_tensor_file(std::string_view bytes);

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Header gets {"kind": "dense", "config": ..., plus `extra` keys}.
TensorFile checkpoint_file(const TinyLM& model, const nlohmann::json& extra = {});
TinyLM model_from_file(const TensorFile& file);

void save_checkpoint(const TinyLM& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = {});
TinyLM load_checkpoint(const std::filesystem::path& path);

/// Gradient buffers of `model` as a standalone artifact ("kind": "gradients").
void save_gradients(const TinyLM& model, const std::filesystem::path& path,
                    const nlohmann::json& extra = {});
/// Attaches gradients read from `path` to `model`; shapes must match.
void load_gradients(TinyLM& model, const std::filesystem::path& path);

}  // namespace lowrank
