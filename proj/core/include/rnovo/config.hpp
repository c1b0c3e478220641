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

// Run configuration: a JSON object with optional sections
//   vocab      { alphabet: "full20" | [symbols], modifications: [...] }
//   synth      { count, seed, min_length, max_length, noise_peaks_mean, dropout,
//                intensity_min, intensity_max, mz_jitter, fixed_charge }
//   preprocess { mz_min, mz_max, top_k }
//   model      { d_model, layers, heads, ffn, max_decode_len, mz_wavelength_min,
//                mz_wavelength_max, max_charge, prefix_mass }
//   train      { batch_size, epochs, total_steps, learning_rate, warmup_steps,
//                weight_decay, beta1, beta2, epsilon, clip_norm, init_seed, data_seed,
//                augment_seed, validation_interval, mode }
//   augment    { alpha, strategy_mix, max_injections }
//   decode     { beam, max_len }
//   eval       { limit }
// Missing keys keep their defaults; unknown keys are rejected.

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "rnovo/decode.hpp"
#include "rnovo/spectrum.hpp"
#include "rnovo/train.hpp"
#include "rnovo/vocab.hpp"

namespace rnovo {

struct RunConfig {
  VocabConfig vocab;
  SynthConfig synth;
  std::size_t corpus_size = 5000;
  std::uint64_t corpus_seed = 42;
  PreprocessConfig preprocess;
  /// vocab_size is filled in from the vocabulary when the run starts.
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  /// Evaluate at most this many PSMs; 0 means all.
  std::size_t eval_limit = 0;
};

/// Overlays `j` on `base`. Throws UsageError on unknown keys or bad types.
RunConfig run_config_from_json(const nlohmann::ordered_json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
nlohmann::ordered_json to_json(const RunConfig& config);

/// Sets the three training seeds from one base value.
void apply_seed(TrainConfig& config, std::uint64_t seed);

}  // namespace rnovo
