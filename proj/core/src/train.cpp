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

#include "rnovo/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "rnovo/error.hpp"

namespace rnovo {

const char* to_string(TrainMode m) noexcept { return m == TrainMode::kFinetune ? "finetune" : "pretrain"; }

TrainMode parse_train_mode(std::string_view text) {
  if (text == "pretrain") return TrainMode::kPretrain;
  if (text == "finetune") return TrainMode::kFinetune;
  throw UsageError("mode must be pretrain or finetune, got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  if (epochs < 0 || total_steps < 0) throw UsageError("epochs and steps must be >= 0");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
  if (warmup_steps < 0) throw UsageError("warmup steps must be >= 0");
  if (total_steps > 0 && warmup_steps > total_steps) throw UsageError("warmup steps exceed total steps");
  if (weight_decay < 0.0) throw UsageError("weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw UsageError("Adam epsilon must be > 0");
  if (clip_norm < 0.0) throw UsageError("clip norm must be >= 0");
  if (validation_interval < 0) throw UsageError("validation interval must be >= 0");
  augment.validate();
}

int resolve_total_steps(const TrainConfig& config, std::size_t train_size) {
  if (config.total_steps > 0) return config.total_steps;
  const auto per_epoch = (train_size + static_cast<std::size_t>(config.batch_size) - 1) /
                         static_cast<std::size_t>(config.batch_size);
  return static_cast<int>(per_epoch) * config.epochs;
}

double lr_at_step(double peak, int warmup, int total, int step) {
  if (warmup > total) throw UsageError("warmup steps exceed total steps");
  if (step < 0 || step > total) {
    throw UsageError("step " + std::to_string(step) + " outside schedule [0, " + std::to_string(total) + "]");
  }
  if (step < warmup) return peak * step / warmup;
  if (total == warmup) return peak;
  const double progress = static_cast<double>(step - warmup) / (total - warmup);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(ParameterSet<float>& params, const ParameterSet<float>& grads, OptimizerState& state,
                  double lr, const TrainConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw UsageError("parameter, gradient and optimizer shapes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].allFinite()) throw RuntimeError("non-finite gradient in tensor " + grads.name(i));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  // 1 - beta in double: in float, 1 - 0.999f cancels to 4 significant digits.
  const auto g1 = static_cast<float>(1.0 - config.beta1);
  const auto g2 = static_cast<float>(1.0 - config.beta2);
  const auto step_size = static_cast<float>(lr / c1);
  const auto root_c2 = static_cast<float>(std::sqrt(c2));
  const auto eps = static_cast<float>(config.epsilon);
  const auto decay = static_cast<float>(1.0 - lr * config.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols()) {
      throw UsageError("gradient shape mismatch for " + params.name(i));
    }
    auto p = params[i].array();
    auto g = grads[i].array();
    auto m = state.first_moment[i].array();
    auto v = state.second_moment[i].array();
    m = b1 * m + g1 * g;
    v = b2 * v + g2 * g.square();
    p = decay * p - step_size * m / (v.sqrt() / root_c2 + eps);
  }
}

double clip_global_norm(ParameterSet<float>& grads, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) sq += grads[i].template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] *= scale;
  }
  return norm;
}

std::vector<LabeledSpectrum> prepare_examples(std::span<const Psm> psms, const PreprocessConfig& config) {
  std::vector<LabeledSpectrum> out;
  out.reserve(psms.size());
  for (const auto& psm : psms) {
    if (!psm.label) throw DataError("PSM " + psm.id + " has no label");
    try {
      out.push_back({preprocess_spectrum(psm.spectrum, config), *psm.label});
    } catch (const DataError& e) {
      throw DataError("PSM " + psm.id + ": " + e.what());
    }
  }
  return out;
}

double dataset_loss(const ModelParameters<float>& params, std::span<const LabeledSpectrum> data, int batch_size) {
  if (data.empty()) throw UsageError("empty dataset");
  double weighted = 0.0;
  std::size_t tokens = 0;
  std::vector<TargetTensors> targets;
  std::vector<TrainingExample> batch;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
    targets.clear();
    batch.clear();
    std::size_t batch_tokens = 0;
    for (auto i = begin; i < end; ++i) {
      targets.push_back(finalize_target(plain_target(data[i].label)));
      batch_tokens += targets.back().supervision.size();
    }
    for (auto i = begin; i < end; ++i) batch.push_back({&data[i].spectrum, &targets[i - begin]});
    weighted += static_cast<double>(batch_loss(params, std::span<const TrainingExample>(batch))) * batch_tokens;
    tokens += batch_tokens;
  }
  return weighted / static_cast<double>(tokens);
}

std::string format_metrics_row(const MetricsRow& row) {
  char buf[128];
  if (row.val_loss) {
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6e", row.step, row.train_loss, *row.val_loss, row.lr);
  } else {
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t\t%.6e", row.step, row.train_loss, row.lr);
  }
  return buf;
}

namespace {

nlohmann::ordered_json run_metadata(const TrainConfig& c, int total, const Checkpoint* source) {
  nlohmann::ordered_json meta{{"mode", to_string(c.mode)},
                              {"init_seed", c.init_seed},
                              {"data_seed", c.data_seed},
                              {"augment_seed", c.augment_seed},
                              {"total_steps", total},
                              {"batch_size", c.batch_size},
                              {"learning_rate", c.learning_rate},
                              {"warmup_steps", c.warmup_steps},
                              {"weight_decay", c.weight_decay},
                              {"clip_norm", c.clip_norm},
                              {"alpha", c.augment.alpha},
                              {"strategy_mix", c.augment.strategy_mix},
                              {"max_injections", c.augment.max_injections}};
  if (source) meta["source_digest"] = checkpoint_digest(*source);
  return meta;
}

}  // namespace

TrainResult train(const Vocabulary& vocab, const ModelConfig& model_config, const TrainConfig& config,
                  std::span<const LabeledSpectrum> train_set, std::span<const LabeledSpectrum> validation_set,
                  const Checkpoint* source, std::ostream* metrics) {
  config.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (static_cast<std::size_t>(model_config.vocab_size) != vocab.size()) {
    throw UsageError("model vocab_size does not match the vocabulary");
  }
  if (model_config.prefix_mass && model_config.token_masses != bind_vocabulary(model_config, vocab).token_masses) {
    throw UsageError("model token masses do not match the vocabulary");
  }

  Checkpoint ckpt;
  ckpt.vocab = vocab;
  if (config.mode == TrainMode::kFinetune) {
    if (!source) throw UsageError("finetune mode requires a source checkpoint");
    if (!(source->model.config == model_config)) throw UsageError("model config differs from the source checkpoint");
    if (!(source->vocab == vocab)) throw UsageError("vocabulary differs from the source checkpoint");
    ckpt.model = source->model;
  } else {
    ckpt.model = init_model(model_config, config.init_seed);
  }
  ckpt.optimizer = OptimizerState::zeros_for(ckpt.model.tensors);

  const int total = resolve_total_steps(config, train_set.size());
  if (config.warmup_steps > total && total > 0) throw UsageError("warmup steps exceed total steps");
  ckpt.metadata = run_metadata(config, total, config.mode == TrainMode::kFinetune ? source : nullptr);

  TrainResult result;
  std::optional<double> best_val;
  std::string log_text;
  auto emit = [&](const MetricsRow& row) {
    const auto line = format_metrics_row(row);
    log_text += line;
    log_text += '\n';
    if (metrics) *metrics << line << '\n' << std::flush;
    result.log.push_back(row);
  };
  auto validate_now = [&](int step) {
    const double val = dataset_loss(ckpt.model, validation_set, config.batch_size);
    if (!std::isfinite(val)) throw RuntimeError("non-finite validation loss at step " + std::to_string(step));
    if (!best_val || val < *best_val) {
      best_val = val;
      result.best_checkpoint = ckpt;
      result.best_checkpoint->metadata["step"] = step;
      result.best_checkpoint->metadata["val_loss"] = val;
    }
    return val;
  };

  const auto n = train_set.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(n);
  std::vector<Peptide> labels;
  std::vector<TargetTensors> targets;
  std::vector<TrainingExample> examples;
  int step = 0;
  for (std::uint64_t epoch = 0; step < total; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = derive_stream(config.data_seed, {epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b = 0; b * batch < n && step < total; ++b) {
      const auto begin = b * batch;
      const auto end = std::min(n, begin + batch);
      labels.clear();
      for (auto i = begin; i < end; ++i) labels.push_back(train_set[order[i]].label);
      auto augment_rng = derive_stream(config.augment_seed, {epoch, b});
      const auto augmented = augment_batch(labels, config.augment, vocab, augment_rng);
      targets.clear();
      examples.clear();
      for (const auto& a : augmented) targets.push_back(finalize_target(a));
      for (auto i = begin; i < end; ++i) examples.push_back({&train_set[order[i]].spectrum, &targets[i - begin]});

      const double lr = lr_at_step(config, total, step + 1);
      auto res = loss_and_gradients(ckpt.model, std::span<const TrainingExample>(examples));
      if (!std::isfinite(res.loss)) throw RuntimeError("non-finite training loss at step " + std::to_string(step + 1));
      clip_global_norm(res.gradients, config.clip_norm);
      adamw_update(ckpt.model.tensors, res.gradients, ckpt.optimizer, lr, config);
      ++step;

      MetricsRow row{step, res.loss, std::nullopt, lr};
      const bool due = config.validation_interval > 0 && step % config.validation_interval == 0;
      if (!validation_set.empty() && (due || step == total)) row.val_loss = validate_now(step);
      emit(row);
    }
  }
  if (!validation_set.empty() && !best_val) validate_now(0);

  const auto probe = std::min(n, validation_set.empty() ? std::size_t{512} : validation_set.size());
  result.final_train_loss = dataset_loss(ckpt.model, train_set.first(probe), config.batch_size);
  if (!validation_set.empty()) result.final_val_loss = dataset_loss(ckpt.model, validation_set, config.batch_size);

  ckpt.metadata["step"] = step;
  ckpt.metadata["loss_digest"] = fnv1a_hex(log_text);
  if (result.best_checkpoint) {
    result.best_checkpoint->metadata["loss_digest"] = ckpt.metadata["loss_digest"];
    result.best_checkpoint->metadata["best"] = true;
  }
  result.final_checkpoint = std::move(ckpt);
  return result;
}

}  // namespace rnovo
