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

#include "rnovo/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "rnovo/error.hpp"

namespace rnovo {

Spectrum preprocess_spectrum(const Spectrum& raw, const PreprocessConfig& config) {
  Spectrum out;
  out.precursor_charge = raw.precursor_charge;
  out.precursor_mass = raw.precursor_mass;
  for (const auto& p : raw.peaks) {
    if (p.mz >= config.mz_min && p.mz <= config.mz_max) out.peaks.push_back(p);
  }
  if (out.peaks.empty()) throw DataError("empty spectrum");

  if (out.peaks.size() > config.top_k) {
    // Stable so that equal intensities keep the lower m/z first.
    std::stable_sort(out.peaks.begin(), out.peaks.end(),
                     [](const Peak& a, const Peak& b) { return a.intensity > b.intensity; });
    out.peaks.resize(config.top_k);
  }
  std::sort(out.peaks.begin(), out.peaks.end(),
            [](const Peak& a, const Peak& b) { return a.mz < b.mz; });

  double norm = 0.0;
  for (const auto& p : out.peaks) norm += p.intensity * p.intensity;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& p : out.peaks) p.intensity /= norm;
  }
  return out;
}

std::vector<double> theoretical_ions(const Vocabulary& vocab, const Peptide& peptide,
                                     int max_fragment_charge) {
  const auto n = peptide.tokens.size();
  if (n < 2) throw DataError("fragment ions need a peptide of length >= 2");
  if (max_fragment_charge < 1) throw UsageError("fragment charge must be >= 1");

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + vocab.residue_mass(peptide.tokens[i]);

  std::vector<double> ions;
  ions.reserve(2 * (n - 1) * static_cast<std::size_t>(max_fragment_charge));
  for (int z = 1; z <= max_fragment_charge; ++z) {
    for (std::size_t i = 1; i < n; ++i) {
      const double b = prefix[i];
      const double y = prefix[n] - prefix[n - i] + mass::kWater;
      ions.push_back((b + z * mass::kProton) / z);
      ions.push_back((y + z * mass::kProton) / z);
    }
  }
  std::sort(ions.begin(), ions.end());
  ions.erase(std::unique(ions.begin(), ions.end()), ions.end());
  return ions;
}

void SynthConfig::validate() const {
  if (min_length < 1 || min_length > max_length) {
    throw UsageError("synth length range must satisfy 1 <= min <= max");
  }
  if (dropout < 0.0 || dropout > 1.0) {
    throw UsageError("synth dropout must lie in [0, 1]");
  }
  if (mz_jitter < 0.0) throw UsageError("synth m/z jitter must be >= 0");
  if (noise_peaks_mean < 0.0) throw UsageError("synth noise peak mean must be >= 0");
  if (intensity_min < 0.0 || intensity_min > intensity_max) {
    throw UsageError("synth intensity range must satisfy 0 <= min <= max");
  }
  if (fixed_charge < 0) throw UsageError("synth fixed charge must be >= 0");
}

Psm synthesize_psm(const Vocabulary& vocab, const Peptide& peptide, const SynthConfig& config,
                   Rng& rng) {
  config.validate();
  Psm psm;
  psm.label = peptide;
  auto& s = psm.spectrum;
  s.precursor_mass = peptide_neutral_mass(vocab, peptide);

  std::uniform_int_distribution<int> charge_dist(1, 2);
  s.precursor_charge = config.fixed_charge > 0 ? config.fixed_charge : charge_dist(rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> intensity(config.intensity_min, config.intensity_max);
  std::normal_distribution<double> jitter(0.0, 1.0);

  if (peptide.size() >= 2) {
    for (double mz : theoretical_ions(vocab, peptide, std::min(s.precursor_charge, 2))) {
      const double shifted = mz + config.mz_jitter * jitter(rng);
      const double level = intensity(rng);
      if (unit(rng) < config.dropout) continue;
      s.peaks.push_back({shifted, level});
    }
  }

  std::poisson_distribution<int> noise_count(config.noise_peaks_mean);
  const int noise = config.noise_peaks_mean > 0.0 ? noise_count(rng) : 0;
  std::uniform_real_distribution<double> noise_mz(50.0, std::max(51.0, s.precursor_mass + mass::kProton));
  for (int i = 0; i < noise; ++i) {
    const double mz = noise_mz(rng);
    s.peaks.push_back({mz, intensity(rng)});
  }
  std::sort(s.peaks.begin(), s.peaks.end(), [](const Peak& a, const Peak& b) { return a.mz < b.mz; });
  return psm;
}

namespace {

// Number of distinct peptides with lengths in [lo, hi], saturating at max.
std::size_t peptide_space(std::size_t alphabet, int lo, int hi) {
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  std::size_t total = 0;
  for (int n = lo; n <= hi; ++n) {
    std::size_t term = 1;
    for (int i = 0; i < n; ++i) {
      if (term > kMax / alphabet) return kMax;
      term *= alphabet;
    }
    if (total > kMax - term) return kMax;
    total += term;
  }
  return total;
}

}  // namespace

Corpus generate_corpus(const Vocabulary& vocab, const SynthConfig& config, std::size_t count,
                       std::uint64_t seed) {
  config.validate();
  if (count < 2) throw UsageError("corpus needs at least 2 PSMs to split");
  const auto residues = vocab.residue_count();
  if (peptide_space(residues, config.min_length, config.max_length) < count) {
    throw UsageError("alphabet too small for " + std::to_string(count) + " distinct peptides");
  }

  Rng sampler = derive_stream(seed, {0});
  std::uniform_int_distribution<int> length(config.min_length, config.max_length);
  std::uniform_int_distribution<TokenId> residue(Vocabulary::kFirstResidue,
                                                 Vocabulary::kFirstResidue + static_cast<TokenId>(residues) - 1);
  std::vector<Peptide> peptides;
  peptides.reserve(count);
  std::unordered_set<std::string> seen;
  while (peptides.size() < count) {
    Peptide p;
    p.tokens.resize(static_cast<std::size_t>(length(sampler)));
    for (auto& t : p.tokens) t = residue(sampler);
    if (seen.insert(decode_tokens(vocab, p)).second) peptides.push_back(std::move(p));
  }

  const std::size_t n_test = std::max<std::size_t>(1, count / 10);
  const std::size_t n_train = count - n_test;
  Corpus corpus;
  corpus.train.reserve(n_train);
  corpus.test.reserve(n_test);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = derive_stream(seed, {1, i});
    Psm psm = synthesize_psm(vocab, peptides[i], config, rng);
    psm.id = (i < n_train ? "train-" : "test-") + std::to_string(i);
    (i < n_train ? corpus.train : corpus.test).push_back(std::move(psm));
  }
  return corpus;
}

}  // namespace rnovo
