// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

// Binary container:
//   "RNVO" | u32 version (LE) | u64 header bytes (LE) | JSON header | tensor data
// The header carries the model config, vocabulary, tensor manifest
// (name, shape, byte offset into the data section) and training metadata.
// Tensor data is little-endian float32, row-major, in manifest order:
// parameters first, then the Adam first and second moments.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "rnovo/model.hpp"
#include "rnovo/vocab.hpp"

namespace rnovo {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerState {
  ParameterSet<float> first_moment;
  ParameterSet<float> second_moment;
  std::int64_t step = 0;

  static OptimizerState zeros_for(const ParameterSet<float>& params);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  Vocabulary vocab = build_vocabulary();
  ModelParameters<float> model;
  OptimizerState optimizer;
  /// Mode tag, seeds, step, clip norm, augmentation settings, loss digest.
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on bad magic, unsupported version, truncation or an
/// inconsistent manifest.
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 over arbitrary bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
/// Digest of the serialized checkpoint.
std::string checkpoint_digest(const Checkpoint& ckpt);

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

}  // namespace rnovo
