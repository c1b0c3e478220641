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

// Shared fixtures and independent oracles for the test binaries.

#include <cstdint>
#include <string>
#include <vector>

#include "rnovo/augment.hpp"
#include "rnovo/model.hpp"
#include "rnovo/random.hpp"
#include "rnovo/spectrum.hpp"
#include "rnovo/vocab.hpp"

namespace rnovo::testing {

inline Vocabulary reduced_vocab(std::vector<std::string> symbols) {
  VocabConfig c;
  c.alphabet = std::move(symbols);
  return build_vocabulary(c);
}

inline Vocabulary desk_vocab() { return reduced_vocab({"G", "A", "S", "P", "V", "T", "L", "D", "E", "K"}); }

/// d=16, one layer, two heads.
inline ModelConfig tiny_config(const Vocabulary& vocab) {
  ModelConfig c;
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.ffn = 32;
  c.max_decode_len = 24;
  return bind_vocabulary(c, vocab);
}

inline Peptide random_peptide(const Vocabulary& vocab, std::size_t n, Rng& rng) {
  std::uniform_int_distribution<TokenId> pick(Vocabulary::kFirstResidue, static_cast<TokenId>(vocab.size()) - 1);
  Peptide p;
  for (std::size_t i = 0; i < n; ++i) p.tokens.push_back(pick(rng));
  return p;
}

/// Preprocessed synthetic spectra with their labels.
struct Fixture {
  std::vector<Spectrum> spectra;
  std::vector<Peptide> labels;
  std::vector<TargetTensors> targets;

  std::vector<TrainingExample> batch() const {
    std::vector<TrainingExample> b;
    for (std::size_t i = 0; i < spectra.size(); ++i) b.push_back({&spectra[i], &targets[i]});
    return b;
  }
};

inline Fixture make_fixture(const Vocabulary& vocab, std::size_t count, std::uint64_t seed, double alpha = 0.0,
                            int min_len = 3, int max_len = 6) {
  SynthConfig sc;
  sc.min_length = min_len;
  sc.max_length = max_len;
  sc.noise_peaks_mean = 3.0;
  Fixture f;
  Rng rng(seed);
  std::uniform_int_distribution<int> len(min_len, max_len);
  for (std::size_t i = 0; i < count; ++i) {
    auto peptide = random_peptide(vocab, static_cast<std::size_t>(len(rng)), rng);
    auto psm = synthesize_psm(vocab, peptide, sc, rng);
    f.spectra.push_back(preprocess_spectrum(psm.spectrum));
    f.labels.push_back(peptide);
  }
  AugmentConfig ac;
  ac.alpha = alpha;
  for (const auto& t : augment_batch(f.labels, ac, vocab, rng)) f.targets.push_back(finalize_target(t));
  return f;
}

/// Removes every (error, <reflect>) pair: the token before each <reflect>
/// goes with it.
inline std::vector<TokenId> strip_pairs(std::vector<TokenId> tokens) {
  for (;;) {
    std::size_t i = 0;
    while (i < tokens.size() && tokens[i] != Vocabulary::kReflect) ++i;
    if (i == tokens.size()) return tokens;
    const auto from = i == 0 ? tokens.begin() : tokens.begin() + static_cast<std::ptrdiff_t>(i) - 1;
    tokens.erase(from, tokens.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  }
}

/// Recursive reading of the reflection rule: resolve the first <reflect>
/// (delete it and the last residue before it, if any), then recurse.
inline std::vector<TokenId> recursive_strip(const std::vector<TokenId>& raw) {
  std::size_t first = raw.size();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == Vocabulary::kReflect) {
      first = i;
      break;
    }
  }
  if (first == raw.size()) {
    std::vector<TokenId> out;
    for (auto t : raw) {
      if (t >= Vocabulary::kFirstResidue) out.push_back(t);
    }
    return out;
  }
  std::vector<TokenId> left(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(first));
  for (std::size_t j = left.size(); j-- > 0;) {
    if (left[j] >= Vocabulary::kFirstResidue) {
      left.erase(left.begin() + static_cast<std::ptrdiff_t>(j));
      break;
    }
  }
  left.insert(left.end(), raw.begin() + static_cast<std::ptrdiff_t>(first) + 1, raw.end());
  return recursive_strip(left);
}

}  // namespace rnovo::testing
