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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rnovo/augment.hpp"
#include "rnovo/autodiff.hpp"
#include "rnovo/spectrum.hpp"

namespace rnovo {

using ad::Matrix;

struct ModelConfig {
  int d_model = 512;
  int layers = 9;  ///< encoder and decoder depth each
  int heads = 8;
  int ffn = 1024;
  int max_decode_len = 100;
  int vocab_size = 0;
  double mz_wavelength_min = 0.001;
  double mz_wavelength_max = 10000.0;
  int max_charge = 10;
  /// Adds sinusoidal(resolved prefix residue mass) to every decoder row.
  bool prefix_mass = true;
  /// Residue mass per token id, 0 for specials. Filled by bind_vocabulary.
  std::vector<double> token_masses;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Sets vocab_size and token_masses from `vocab`.
ModelConfig bind_vocabulary(ModelConfig config, const Vocabulary& vocab);

/// Residue mass left standing after each decoder token, with <reflect>
/// popping the most recent residue. Entry 0 (sos) is 0.
std::vector<double> decoder_prefix_masses(const ModelConfig& config, std::span<const TokenId> tokens);

/// Ordered, named collection of dense tensors.
template <typename T>
class ParameterSet {
 public:
  void add(std::string name, Matrix<T> value);

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Matrix<T>& operator[](std::size_t i) const { return tensors_[i]; }

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index(const std::string& name) const;
  Matrix<T>& at(const std::string& name) { return tensors_[index(name)]; }
  const Matrix<T>& at(const std::string& name) const { return tensors_[index(name)]; }

  std::size_t scalar_count() const noexcept;
  ParameterSet zeros_like() const;

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
struct ModelParameters {
  ModelConfig config;
  ParameterSet<T> tensors;

  template <typename U>
  ModelParameters<U> cast() const {
    return {config, tensors.template cast<U>()};
  }
};

struct TensorShape {
  std::string name;
  int rows = 0;
  int cols = 0;
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Names and shapes of every parameter tensor, in storage order.
std::vector<TensorShape> parameter_layout(const ModelConfig& config);

/// Deterministic per seed: linear weights ~ U(+-sqrt(6/(fan_in+fan_out))),
/// biases 0, embeddings ~ N(0, 0.02), layer-norm gain 1.
ModelParameters<float> init_model(const ModelConfig& config, std::uint64_t seed);

/// Sinusoidal features for scalar values: d/2 geometric wavelengths in
/// [wavelength_min, wavelength_max], sines in the first half, cosines in the second.
template <typename T>
Matrix<T> sinusoidal_features(std::span<const double> values, int d, double wavelength_min,
                              double wavelength_max);

/// K x d: sinusoidal(m/z) + intensity * intensity_projection.
template <typename T>
Matrix<T> embed_peaks(const ModelParameters<T>& params, const Spectrum& spectrum);

/// Encoder output E (K x d).
template <typename T>
Matrix<T> encode(const ModelParameters<T>& params, const Spectrum& spectrum);

template <typename T>
struct ForwardOutput {
  Matrix<T> logits;  ///< decoder_input length x vocab size
  Matrix<T> probabilities;
};

/// Teacher-forced decoder pass. decoder_input must start with <sos>.
template <typename T>
ForwardOutput<T> forward(const ModelParameters<T>& params, const Spectrum& spectrum,
                         std::span<const TokenId> decoder_input);

struct TrainingExample {
  const Spectrum* spectrum = nullptr;  ///< preprocessed
  const TargetTensors* target = nullptr;
};

template <typename T>
struct LossResult {
  T loss = 0;
  ParameterSet<T> gradients;
  /// d loss / d logits for every supervised row, packed in batch order.
  Matrix<T> logit_gradients;
};

/// Mean cross-entropy over unmasked positions with exact gradients.
template <typename T>
LossResult<T> loss_and_gradients(const ModelParameters<T>& params, std::span<const TrainingExample> batch);

/// Same scalar as loss_and_gradients without building the backward pass.
template <typename T>
T batch_loss(const ModelParameters<T>& params, std::span<const TrainingExample> batch);

/// Central finite differences on `samples` coordinates drawn uniformly
/// across all parameters (every coordinate when samples >= total). Returns
/// the max of |analytic - numeric| / max(|analytic| + |numeric|, 1e-6).
double finite_difference_check(const ModelParameters<double>& params,
                               std::span<const TrainingExample> batch, double step,
                               std::size_t samples, std::uint64_t seed);

/// Incremental inference: the encoder runs once per spectrum and each call
/// to `next_log_probs` scores the last position of several equal-length
/// prefixes against that spectrum.
class DecodingContext {
 public:
  DecodingContext(const ModelParameters<float>& params, const Spectrum& spectrum);

  /// Row b holds log P(. | prefixes[b]) for the token after the prefix.
  /// Every prefix must start with <sos> and have the same length.
  Matrix<float> next_log_probs(std::span<const std::vector<TokenId>> prefixes) const;

  const ModelConfig& config() const noexcept { return params_->config; }

 private:
  const ModelParameters<float>* params_;
  Spectrum spectrum_;
  Matrix<float> memory_;
  std::vector<Matrix<float>> cross_keys_;
  std::vector<Matrix<float>> cross_values_;
};

}  // namespace rnovo
