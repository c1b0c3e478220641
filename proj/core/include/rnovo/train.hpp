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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rnovo/augment.hpp"
#include "rnovo/checkpoint.hpp"
#include "rnovo/model.hpp"
#include "rnovo/spectrum.hpp"

namespace rnovo {

enum class TrainMode { kPretrain, kFinetune };

const char* to_string(TrainMode m) noexcept;
/// Throws UsageError for anything but "pretrain" / "finetune".
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
  int batch_size = 64;
  int epochs = 3;
  /// Optimizer steps; 0 derives the count from epochs.
  int total_steps = 0;
  double learning_rate = 1e-3;
  int warmup_steps = 200;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 1.0;
  AugmentConfig augment;
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 2;
  std::uint64_t augment_seed = 3;
  /// Steps between validation passes; 0 validates only at the end.
  int validation_interval = 100;
  TrainMode mode = TrainMode::kPretrain;

  void validate() const;
};

/// Steps the run will take for a training set of `train_size` examples.
int resolve_total_steps(const TrainConfig& config, std::size_t train_size);

/// Linear warmup to the peak rate, then cosine decay to exactly 0 at
/// `total`. Throws UsageError when step is outside [0, total].
double lr_at_step(double peak, int warmup, int total, int step);
inline double lr_at_step(const TrainConfig& c, int total, int step) {
  return lr_at_step(c.learning_rate, c.warmup_steps, total, step);
}

/// One AdamW step with bias correction and decoupled weight decay. Bumps
/// state.step. Throws RuntimeError naming the first non-finite gradient.
void adamw_update(ParameterSet<float>& params, const ParameterSet<float>& grads, OptimizerState& state,
                  double lr, const TrainConfig& config);

/// Scales grads in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(ParameterSet<float>& grads, double max_norm);

/// A PSM after preprocessing, with its label.
struct LabeledSpectrum {
  Spectrum spectrum;
  Peptide label;
};

/// Preprocesses labeled PSMs; throws DataError for unlabeled input.
std::vector<LabeledSpectrum> prepare_examples(std::span<const Psm> psms, const PreprocessConfig& config);

/// Token-weighted mean loss over clean (unaugmented, all-true mask) targets.
double dataset_loss(const ModelParameters<float>& params, std::span<const LabeledSpectrum> data,
                    int batch_size);

struct MetricsRow {
  int step = 0;
  double train_loss = 0;
  std::optional<double> val_loss;
  double lr = 0;
};

std::string format_metrics_row(const MetricsRow& row);

struct TrainResult {
  Checkpoint final_checkpoint;
  /// Parameters with the lowest validation loss seen; absent without a validation set.
  std::optional<Checkpoint> best_checkpoint;
  std::vector<MetricsRow> log;
  /// Clean loss at the end of training on the first |validation| training examples.
  double final_train_loss = 0;
  std::optional<double> final_val_loss;
};

/// Runs the full loop. Finetune mode requires `source` and starts from its
/// parameters with a fresh optimizer; pretrain initializes from init_seed.
/// Each metrics row is also written to `metrics` as it is produced.
TrainResult train(const Vocabulary& vocab, const ModelConfig& model_config, const TrainConfig& config,
                  std::span<const LabeledSpectrum> train_set, std::span<const LabeledSpectrum> validation_set,
                  const Checkpoint* source = nullptr, std::ostream* metrics = nullptr);

}  // namespace rnovo
