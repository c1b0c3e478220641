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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rnovo/random.hpp"
#include "rnovo/vocab.hpp"

namespace rnovo {

struct Peak {
  double mz = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Peak&, const Peak&) = default;
};

/// An MS/MS spectrum with its precursor. The precursor mass is neutral;
/// conversion to and from an observed m/z happens only at I/O boundaries.
struct Spectrum {
  std::vector<Peak> peaks;
  int precursor_charge = 1;
  double precursor_mass = 0.0;

  friend bool operator==(const Spectrum&, const Spectrum&) = default;
};

/// Peptide-spectrum match. Unlabeled when the label is empty.
struct Psm {
  std::string id;
  Spectrum spectrum;
  std::optional<Peptide> label;

  friend bool operator==(const Psm&, const Psm&) = default;
};

struct PreprocessConfig {
  double mz_min = 50.0;
  double mz_max = 2500.0;
  std::size_t top_k = 150;
};

/// Drops peaks outside [mz_min, mz_max], keeps the top_k most intense,
/// rescales intensities to unit Euclidean norm and sorts by m/z.
/// Throws DataError("empty spectrum") when nothing survives.
Spectrum preprocess_spectrum(const Spectrum& raw, const PreprocessConfig& config = {});

/// Sorted, deduplicated b and y ion m/z values for charges 1..max_fragment_charge.
std::vector<double> theoretical_ions(const Vocabulary& vocab, const Peptide& peptide,
                                     int max_fragment_charge);

struct SynthConfig {
  int min_length = 6;
  int max_length = 12;
  double noise_peaks_mean = 10.0;
  double dropout = 0.1;
  double intensity_min = 0.1;
  double intensity_max = 1.0;
  double mz_jitter = 0.01;
  /// 0 samples the precursor charge uniformly from {1, 2}.
  int fixed_charge = 0;

  void validate() const;
};

/// Simulates a noisy spectrum for `peptide`. Deterministic given the rng state.
Psm synthesize_psm(const Vocabulary& vocab, const Peptide& peptide, const SynthConfig& config,
                   Rng& rng);

struct Corpus {
  std::vector<Psm> train;
  std::vector<Psm> test;
};

/// Draws `count` distinct random peptides, synthesizes one PSM each and splits
/// 90/10 so train and test never share a peptide.
Corpus generate_corpus(const Vocabulary& vocab, const SynthConfig& config, std::size_t count,
                       std::uint64_t seed);

}  // namespace rnovo
