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

#include "rnovo/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "rnovo/error.hpp"

namespace rnovo {

using ad::AttentionBlock;
using ad::Tape;
using ad::Var;

void ModelConfig::validate() const {
  if (d_model < 2 || d_model % 2 != 0) throw UsageError("d_model must be even and >= 2");
  if (heads < 1 || d_model % heads != 0) {
    throw UsageError("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                     std::to_string(heads) + ")");
  }
  // Zero layers is allowed as a test mode: the encoder is then the peak embedding.
  if (layers < 0) throw UsageError("layers must be >= 0");
  if (ffn < 1) throw UsageError("ffn width must be >= 1");
  if (max_decode_len < 2) throw UsageError("max_decode_len must be >= 2");
  if (vocab_size <= Vocabulary::kFirstResidue) throw UsageError("vocab_size must include residues");
  if (!(mz_wavelength_min > 0.0 && mz_wavelength_min < mz_wavelength_max)) {
    throw UsageError("m/z wavelength range must satisfy 0 < min < max");
  }
  if (max_charge < 1) throw UsageError("max_charge must be >= 1");
  if (prefix_mass && token_masses.size() != static_cast<std::size_t>(vocab_size)) {
    throw UsageError("prefix_mass needs one token mass per vocabulary entry");
  }
}

ModelConfig bind_vocabulary(ModelConfig config, const Vocabulary& vocab) {
  config.vocab_size = static_cast<int>(vocab.size());
  config.token_masses.assign(vocab.size(), 0.0);
  for (std::size_t id = Vocabulary::kFirstResidue; id < vocab.size(); ++id) {
    config.token_masses[id] = vocab.residue_mass(static_cast<TokenId>(id));
  }
  return config;
}

// ---------------------------------------------------------------------------
// ParameterSet

template <typename T>
void ParameterSet<T>::add(std::string name, Matrix<T> value) {
  if (!index_.emplace(name, names_.size()).second) throw UsageError("duplicate tensor name: " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

template <typename T>
std::optional<std::size_t> ParameterSet<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::index(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw UsageError("no tensor named " + name);
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
  return n;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like() const {
  ParameterSet out;
  for (std::size_t i = 0; i < size(); ++i) {
    out.add(names_[i], Matrix<T>::Zero(tensors_[i].rows(), tensors_[i].cols()));
  }
  return out;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

// ---------------------------------------------------------------------------
// Initialization

std::vector<TensorShape> parameter_layout(const ModelConfig& config) {
  config.validate();
  const int d = config.d_model;
  std::vector<TensorShape> out;
  auto norm = [&](const std::string& name) {
    out.push_back({name + ".gamma", 1, d});
    out.push_back({name + ".beta", 1, d});
  };
  auto linear = [&](const std::string& name, int in, int cols) {
    out.push_back({name + ".weight", in, cols});
    out.push_back({name + ".bias", 1, cols});
  };
  auto attention = [&](const std::string& name) {
    for (const char* p : {".q", ".k", ".v", ".o"}) linear(name + p, d, d);
  };
  auto feed_forward = [&](const std::string& name) {
    linear(name + ".in", d, config.ffn);
    linear(name + ".out", config.ffn, d);
  };

  out.push_back({"peak.intensity", 1, d});
  out.push_back({"token.embedding", config.vocab_size, d});
  out.push_back({"charge.embedding", config.max_charge, d});
  for (int l = 0; l < config.layers; ++l) {
    const auto p = "enc." + std::to_string(l);
    norm(p + ".ln1");
    attention(p + ".attn");
    norm(p + ".ln2");
    feed_forward(p + ".ffn");
  }
  for (int l = 0; l < config.layers; ++l) {
    const auto p = "dec." + std::to_string(l);
    norm(p + ".ln1");
    attention(p + ".self");
    norm(p + ".ln2");
    attention(p + ".cross");
    norm(p + ".ln3");
    feed_forward(p + ".ffn");
  }
  norm("dec.final_ln");
  linear("out", d, config.vocab_size);
  return out;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParameters<float> init_model(const ModelConfig& config, std::uint64_t seed) {
  ModelParameters<float> model;
  model.config = config;
  Rng rng(mix64(seed));
  std::normal_distribution<double> embedding(0.0, 0.02);
  for (const auto& shape : parameter_layout(config)) {
    Matrix<float> m(shape.rows, shape.cols);
    if (ends_with(shape.name, ".bias") || ends_with(shape.name, ".beta")) {
      m.setZero();
    } else if (ends_with(shape.name, ".gamma")) {
      m.setOnes();
    } else if (ends_with(shape.name, ".embedding")) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(embedding(rng));
    } else {
      // Weights (including the bias-free intensity projection) use fan_in + fan_out = rows + cols.
      const double bound = std::sqrt(6.0 / (shape.rows + shape.cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(u(rng));
    }
    model.tensors.add(shape.name, std::move(m));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Features

template <typename T>
Matrix<T> sinusoidal_features(std::span<const double> values, int d, double wavelength_min,
                              double wavelength_max) {
  const int half = d / 2;
  std::vector<double> freq(static_cast<std::size_t>(half));
  for (int i = 0; i < half; ++i) {
    const double frac = half > 1 ? static_cast<double>(i) / (half - 1) : 0.0;
    const double wavelength = wavelength_min * std::pow(wavelength_max / wavelength_min, frac);
    freq[static_cast<std::size_t>(i)] = 2.0 * std::numbers::pi / wavelength;
  }
  Matrix<T> out(static_cast<Eigen::Index>(values.size()), d);
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double angle = values[r] * freq[static_cast<std::size_t>(i)];
      out(static_cast<Eigen::Index>(r), i) = static_cast<T>(std::sin(angle));
      out(static_cast<Eigen::Index>(r), half + i) = static_cast<T>(std::cos(angle));
    }
  }
  return out;
}

std::vector<double> decoder_prefix_masses(const ModelConfig& cfg, std::span<const TokenId> tokens) {
  std::vector<double> out(tokens.size(), 0.0);
  std::vector<double> stack;
  double total = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto id = tokens[i];
    if (id == Vocabulary::kReflect) {
      if (!stack.empty()) {
        total -= stack.back();
        stack.pop_back();
      }
    } else if (id >= Vocabulary::kFirstResidue) {
      if (static_cast<std::size_t>(id) >= cfg.token_masses.size()) throw UsageError("token id has no mass");
      const double m = cfg.token_masses[static_cast<std::size_t>(id)];
      stack.push_back(m);
      total += m;
    }
    out[i] = total;
  }
  return out;
}

namespace {

// Token-position encoding for the decoder (standard 1 .. 10000 wavelength ladder).
template <typename T>
Matrix<T> position_features(int length, int d) {
  const int half = d / 2;
  Matrix<T> out(length, d);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < half; ++i) {
      const double angle = t / std::pow(10000.0, static_cast<double>(i) / half);
      out(t, i) = static_cast<T>(std::sin(angle));
      out(t, half + i) = static_cast<T>(std::cos(angle));
    }
  }
  return out;
}

// Binds parameters to tape leaves on first use.
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, const ParameterSet<T>& params)
      : tape_(tape), params_(params), vars_(params.size()) {}

  Var operator()(const std::string& name) {
    const auto i = params_.index(name);
    if (!vars_[i].valid()) vars_[i] = tape_.parameter(params_[i]);
    return vars_[i];
  }

  Var bound(std::size_t i) const { return vars_[i]; }

 private:
  Tape<T>& tape_;
  const ParameterSet<T>& params_;
  std::vector<Var> vars_;
};

template <typename T>
Var norm(Tape<T>& t, Binder<T>& p, const std::string& name, Var x) {
  return ad::layer_norm(t, x, p(name + ".gamma"), p(name + ".beta"));
}

template <typename T>
Var dense(Tape<T>& t, Binder<T>& p, const std::string& name, Var x) {
  return ad::linear(t, x, p(name + ".weight"), p(name + ".bias"));
}

template <typename T>
Var feed_forward(Tape<T>& t, Binder<T>& p, const std::string& name, Var x) {
  return dense(t, p, name + ".out", ad::gelu(t, dense(t, p, name + ".in", x)));
}

template <typename T>
Var self_attention(Tape<T>& t, Binder<T>& p, const std::string& name, Var x,
                   const std::vector<AttentionBlock>& blocks, int heads, bool causal) {
  Var q = dense(t, p, name + ".q", x);
  Var k = dense(t, p, name + ".k", x);
  Var v = dense(t, p, name + ".v", x);
  return dense(t, p, name + ".o", ad::attention(t, q, k, v, blocks, heads, causal));
}

template <typename T>
Var peak_embedding(Tape<T>& t, Binder<T>& p, const ModelConfig& cfg,
                   std::span<const Spectrum* const> spectra, std::vector<int>& offsets) {
  std::vector<double> mz;
  std::vector<double> intensity;
  offsets.assign(1, 0);
  for (const auto* s : spectra) {
    if (s->peaks.empty()) throw DataError("spectrum has no peaks");
    for (const auto& pk : s->peaks) {
      mz.push_back(pk.mz);
      intensity.push_back(pk.intensity);
    }
    offsets.push_back(static_cast<int>(mz.size()));
  }
  Matrix<T> column(static_cast<Eigen::Index>(intensity.size()), 1);
  for (std::size_t i = 0; i < intensity.size(); ++i) column(static_cast<Eigen::Index>(i), 0) = static_cast<T>(intensity[i]);
  Var sines = t.constant(sinusoidal_features<T>(mz, cfg.d_model, cfg.mz_wavelength_min, cfg.mz_wavelength_max));
  return ad::add(t, sines, ad::matmul(t, t.constant(std::move(column)), p("peak.intensity")));
}

template <typename T>
Var encoder_graph(Tape<T>& t, Binder<T>& p, const ModelConfig& cfg,
                  std::span<const Spectrum* const> spectra, std::vector<int>& offsets) {
  Var x = peak_embedding(t, p, cfg, spectra, offsets);
  std::vector<AttentionBlock> blocks;
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const int rows = offsets[b + 1] - offsets[b];
    blocks.push_back({offsets[b], rows, offsets[b], rows});
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const auto name = "enc." + std::to_string(l);
    Var h = ad::add(t, x, self_attention(t, p, name + ".attn", norm(t, p, name + ".ln1", x), blocks, cfg.heads, false));
    x = ad::add(t, h, feed_forward(t, p, name + ".ffn", norm(t, p, name + ".ln2", h)));
  }
  return x;
}

struct CrossKV {
  Var keys;
  Var values;
};

template <typename T>
std::vector<CrossKV> cross_projections(Tape<T>& t, Binder<T>& p, const ModelConfig& cfg, Var memory) {
  std::vector<CrossKV> out;
  for (int l = 0; l < cfg.layers; ++l) {
    const auto name = "dec." + std::to_string(l) + ".cross";
    out.push_back({dense(t, p, name + ".k", memory), dense(t, p, name + ".v", memory)});
  }
  return out;
}

// Row i: residue mass of tokens[1..i] after resolving <reflect> with stack
// semantics, so a retraction removes the retracted residue's mass.
struct DecoderSequence {
  std::span<const TokenId> tokens;
  double precursor_mass = 0.0;
  int charge = 1;
  int memory_begin = 0;
  int memory_rows = 0;
};

template <typename T>
Var decoder_graph(Tape<T>& t, Binder<T>& p, const ModelConfig& cfg, std::span<const DecoderSequence> seqs,
                  const std::vector<CrossKV>& cross) {
  const int d = cfg.d_model;
  std::vector<int> ids;
  std::vector<int> charge_ids;
  std::vector<AttentionBlock> self_blocks;
  std::vector<AttentionBlock> cross_blocks;
  int longest = 0;
  for (const auto& s : seqs) {
    const auto len = static_cast<int>(s.tokens.size());
    if (len < 1 || s.tokens.front() != Vocabulary::kSos) throw UsageError("decoder input must start with <sos>");
    if (len > cfg.max_decode_len) {
      throw UsageError("decoder input length " + std::to_string(len) + " exceeds max_decode_len " +
                       std::to_string(cfg.max_decode_len));
    }
    const int begin = static_cast<int>(ids.size());
    for (int i = 0; i < len; ++i) {
      const auto id = s.tokens[static_cast<std::size_t>(i)];
      if (id < 0 || id >= cfg.vocab_size) throw UsageError("token id out of range");
      ids.push_back(id);
      charge_ids.push_back(i == 0 ? std::clamp(s.charge, 1, cfg.max_charge) - 1 : -1);
    }
    self_blocks.push_back({begin, len, begin, len});
    cross_blocks.push_back({begin, len, s.memory_begin, s.memory_rows});
    longest = std::max(longest, len);
  }

  const auto positions = position_features<T>(longest, d);
  Matrix<T> fixed(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const auto& blk = self_blocks[b];
    fixed.block(blk.q_begin, 0, blk.q_rows, d) = positions.topRows(blk.q_rows);
    const double m = seqs[b].precursor_mass;
    fixed.row(blk.q_begin) +=
        sinusoidal_features<T>(std::span<const double>(&m, 1), d, cfg.mz_wavelength_min, cfg.mz_wavelength_max);
    if (cfg.prefix_mass) {
      const auto masses = decoder_prefix_masses(cfg, seqs[b].tokens);
      fixed.block(blk.q_begin, 0, blk.q_rows, d) +=
          sinusoidal_features<T>(masses, d, cfg.mz_wavelength_min, cfg.mz_wavelength_max);
    }
  }

  Var x = ad::add(t, ad::gather_rows(t, p("token.embedding"), std::move(ids)),
                  ad::add(t, ad::gather_rows(t, p("charge.embedding"), std::move(charge_ids)),
                          t.constant(std::move(fixed))));
  for (int l = 0; l < cfg.layers; ++l) {
    const auto name = "dec." + std::to_string(l);
    Var h = ad::add(t, x, self_attention(t, p, name + ".self", norm(t, p, name + ".ln1", x), self_blocks, cfg.heads, true));
    Var q = dense(t, p, name + ".cross.q", norm(t, p, name + ".ln2", h));
    Var a = ad::attention(t, q, cross[static_cast<std::size_t>(l)].keys, cross[static_cast<std::size_t>(l)].values,
                          cross_blocks, cfg.heads, false);
    Var h2 = ad::add(t, h, dense(t, p, name + ".cross.o", a));
    x = ad::add(t, h2, feed_forward(t, p, name + ".ffn", norm(t, p, name + ".ln3", h2)));
  }
  return dense(t, p, "out", norm(t, p, "dec.final_ln", x));
}

struct BatchGraph {
  Var logits;
  Var loss;
};

template <typename T>
BatchGraph batch_graph(Tape<T>& t, Binder<T>& p, const ModelConfig& cfg, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw UsageError("empty batch");
  std::vector<const Spectrum*> spectra;
  for (const auto& ex : batch) {
    if (!ex.spectrum || !ex.target) throw UsageError("incomplete training example");
    const auto& tg = *ex.target;
    if (tg.decoder_input.size() != tg.supervision.size() || tg.supervision.size() != tg.loss_mask.size()) {
      throw UsageError("decoder input, supervision and mask lengths differ");
    }
    spectra.push_back(ex.spectrum);
  }
  std::vector<int> offsets;
  Var memory = encoder_graph(t, p, cfg, spectra, offsets);
  const auto cross = cross_projections(t, p, cfg, memory);

  std::vector<DecoderSequence> seqs;
  std::vector<int> targets;
  std::vector<std::uint8_t> mask;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& tg = *batch[b].target;
    seqs.push_back({tg.decoder_input, batch[b].spectrum->precursor_mass, batch[b].spectrum->precursor_charge,
                    offsets[b], offsets[b + 1] - offsets[b]});
    targets.insert(targets.end(), tg.supervision.begin(), tg.supervision.end());
    mask.insert(mask.end(), tg.loss_mask.begin(), tg.loss_mask.end());
  }
  Var logits = decoder_graph(t, p, cfg, seqs, cross);
  Var loss = ad::masked_cross_entropy(t, logits, std::move(targets), std::move(mask));
  return {logits, loss};
}

}  // namespace

template <typename T>
Matrix<T> embed_peaks(const ModelParameters<T>& params, const Spectrum& spectrum) {
  Tape<T> tape(false);
  Binder<T> p(tape, params.tensors);
  const Spectrum* s = &spectrum;
  std::vector<int> offsets;
  return tape.value(peak_embedding(tape, p, params.config, std::span<const Spectrum* const>(&s, 1), offsets));
}

template <typename T>
Matrix<T> encode(const ModelParameters<T>& params, const Spectrum& spectrum) {
  Tape<T> tape(false);
  Binder<T> p(tape, params.tensors);
  const Spectrum* s = &spectrum;
  std::vector<int> offsets;
  return tape.value(encoder_graph(tape, p, params.config, std::span<const Spectrum* const>(&s, 1), offsets));
}

template <typename T>
ForwardOutput<T> forward(const ModelParameters<T>& params, const Spectrum& spectrum,
                         std::span<const TokenId> decoder_input) {
  Tape<T> tape(false);
  Binder<T> p(tape, params.tensors);
  const Spectrum* s = &spectrum;
  std::vector<int> offsets;
  Var memory = encoder_graph(tape, p, params.config, std::span<const Spectrum* const>(&s, 1), offsets);
  const auto cross = cross_projections(tape, p, params.config, memory);
  const DecoderSequence seq{decoder_input, spectrum.precursor_mass, spectrum.precursor_charge, 0, offsets[1]};
  ForwardOutput<T> out;
  out.logits = tape.value(decoder_graph(tape, p, params.config, std::span<const DecoderSequence>(&seq, 1), cross));
  out.probabilities = ad::log_softmax_rows(out.logits).array().exp().matrix();
  return out;
}

template <typename T>
LossResult<T> loss_and_gradients(const ModelParameters<T>& params, std::span<const TrainingExample> batch) {
  Tape<T> tape(true);
  Binder<T> p(tape, params.tensors);
  const auto graph = batch_graph(tape, p, params.config, batch);
  tape.backward(graph.loss);

  LossResult<T> out;
  out.loss = tape.value(graph.loss)(0, 0);
  out.gradients = params.tensors.zeros_like();
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const Var v = p.bound(i);
    if (v.valid() && tape.grad(v).size() != 0) out.gradients[i] = tape.grad(v);
  }
  const auto& lg = tape.grad(graph.logits);
  const auto& lv = tape.value(graph.logits);
  out.logit_gradients = lg.size() != 0 ? lg : Matrix<T>::Zero(lv.rows(), lv.cols());
  return out;
}

template <typename T>
T batch_loss(const ModelParameters<T>& params, std::span<const TrainingExample> batch) {
  Tape<T> tape(false);
  Binder<T> p(tape, params.tensors);
  return tape.value(batch_graph(tape, p, params.config, batch).loss)(0, 0);
}

// Central differences carry ~1e-11 of roundoff at the step sizes used
// here, and key biases have an exactly zero gradient (softmax ignores a
// per-query shift), so pure relative error is noise below this magnitude.
constexpr double kFdMagnitudeFloor = 1e-6;

double finite_difference_check(const ModelParameters<double>& params, std::span<const TrainingExample> batch,
                               double step, std::size_t samples, std::uint64_t seed) {
  const auto analytic = loss_and_gradients(params, batch);

  // Flat coordinate -> (tensor, offset).
  std::vector<std::size_t> starts;
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    starts.push_back(total);
    total += static_cast<std::size_t>(params.tensors[i].size());
  }
  std::vector<std::size_t> coords;
  if (samples >= total) {
    coords.resize(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    Rng rng(mix64(seed));
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::unordered_set<std::size_t> seen;
    while (coords.size() < samples) {
      const auto c = pick(rng);
      if (seen.insert(c).second) coords.push_back(c);
    }
    std::sort(coords.begin(), coords.end());
  }

  ModelParameters<double> probe = params;
  double worst = 0.0;
  for (auto c : coords) {
    const auto tensor = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), c) - starts.begin()) - 1;
    const auto offset = static_cast<Eigen::Index>(c - starts[tensor]);
    double& x = probe.tensors[tensor].data()[offset];
    const double saved = x;
    x = saved + step;
    const double plus = batch_loss(probe, batch);
    x = saved - step;
    const double minus = batch_loss(probe, batch);
    x = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    const double exact = analytic.gradients[tensor].data()[offset];
    const double rel = std::abs(exact - numeric) / std::max(std::abs(exact) + std::abs(numeric), kFdMagnitudeFloor);
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// DecodingContext

DecodingContext::DecodingContext(const ModelParameters<float>& params, const Spectrum& spectrum)
    : params_(&params), spectrum_(spectrum) {
  Tape<float> tape(false);
  Binder<float> p(tape, params.tensors);
  const Spectrum* s = &spectrum_;
  std::vector<int> offsets;
  Var memory = encoder_graph(tape, p, params.config, std::span<const Spectrum* const>(&s, 1), offsets);
  memory_ = tape.value(memory);
  for (const auto& kv : cross_projections(tape, p, params.config, memory)) {
    cross_keys_.push_back(tape.value(kv.keys));
    cross_values_.push_back(tape.value(kv.values));
  }
}

Matrix<float> DecodingContext::next_log_probs(std::span<const std::vector<TokenId>> prefixes) const {
  if (prefixes.empty()) return {};
  Tape<float> tape(false);
  Binder<float> p(tape, params_->tensors);
  std::vector<CrossKV> cross;
  for (std::size_t l = 0; l < cross_keys_.size(); ++l) {
    cross.push_back({tape.parameter(cross_keys_[l]), tape.parameter(cross_values_[l])});
  }
  std::vector<DecoderSequence> seqs;
  const auto len = prefixes.front().size();
  for (const auto& prefix : prefixes) {
    if (prefix.size() != len) throw UsageError("prefixes must have equal length");
    seqs.push_back({prefix, spectrum_.precursor_mass, spectrum_.precursor_charge, 0,
                    static_cast<int>(memory_.rows())});
  }
  const auto& logits = tape.value(decoder_graph(tape, p, params_->config, seqs, cross));
  Matrix<float> last(static_cast<Eigen::Index>(prefixes.size()), logits.cols());
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    last.row(static_cast<Eigen::Index>(b)) = logits.row(static_cast<Eigen::Index>((b + 1) * len - 1));
  }
  return ad::log_softmax_rows(last);
}

#define RNOVO_INSTANTIATE(T)                                                                              \
  template Matrix<T> sinusoidal_features<T>(std::span<const double>, int, double, double);              \
  template Matrix<T> embed_peaks<T>(const ModelParameters<T>&, const Spectrum&);                        \
  template Matrix<T> encode<T>(const ModelParameters<T>&, const Spectrum&);                             \
  template ForwardOutput<T> forward<T>(const ModelParameters<T>&, const Spectrum&, std::span<const TokenId>); \
  template LossResult<T> loss_and_gradients<T>(const ModelParameters<T>&, std::span<const TrainingExample>);  \
  template T batch_loss<T>(const ModelParameters<T>&, std::span<const TrainingExample>);

RNOVO_INSTANTIATE(float)
RNOVO_INSTANTIATE(double)

#undef RNOVO_INSTANTIATE

}  // namespace rnovo
