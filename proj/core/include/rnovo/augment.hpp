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
#include <span>
#include <string>
#include <vector>

#include "rnovo/random.hpp"
#include "rnovo/vocab.hpp"

namespace rnovo {

enum class Strategy : std::uint8_t {
  kRpre,  ///< random position, error drawn from the whole residue alphabet
  kRple,  ///< random position, error drawn from residues later in the label
};

const char* to_string(Strategy s) noexcept;

struct AugmentConfig {
  /// Probability that a sequence in a batch receives injected errors.
  double alpha = 0.0;
  /// Probability of RPLE (versus RPRE) given that a sequence is injected.
  double strategy_mix = 0.5;
  int max_injections = 1;

  void validate() const;
};

struct InjectionRecord {
  std::size_t position = 0;  ///< 1-based index into the original label
  TokenId error_token = 0;
  Strategy strategy = Strategy::kRpre;
  bool is_noop = false;  ///< the injected token equals the true one

  friend bool operator==(const InjectionRecord&, const InjectionRecord&) = default;
};

/// A training target with error/<reflect>/correction triples spliced in.
/// loss_mask[i] is false exactly where tokens[i] is an injected error.
struct AugmentedTarget {
  std::vector<TokenId> tokens;
  std::vector<std::uint8_t> loss_mask;
  std::vector<InjectionRecord> records;
};

/// Identity augmentation: the label itself with an all-true mask.
AugmentedTarget plain_target(const Peptide& label);

/// Splices the given injections into `label`. Positions must be distinct and
/// within [1, n]; insertions happen right to left so positions stay valid.
AugmentedTarget apply_injections(const Peptide& label, std::vector<InjectionRecord> records);

AugmentedTarget inject_rpre(const Peptide& label, const Vocabulary& vocab, Rng& rng);

/// Falls back to RPRE for single-residue labels.
AugmentedTarget inject_rple(const Peptide& label, const Vocabulary& vocab, Rng& rng);

/// Online injection for one batch: each label is injected with probability
/// alpha, using fresh randomness from `rng` on every call. The result is
/// aligned with `labels`.
std::vector<AugmentedTarget> augment_batch(std::span<const Peptide> labels, const AugmentConfig& config,
                                           const Vocabulary& vocab, Rng& rng);

/// Teacher-forcing tensors for one target.
struct TargetTensors {
  std::vector<TokenId> decoder_input;  ///< <sos> + A'
  std::vector<TokenId> supervision;    ///< A' + <eos>
  std::vector<std::uint8_t> loss_mask;
};

TargetTensors finalize_target(const AugmentedTarget& target);

/// "<A' in case-study notation>\t<mask bits>" as written by the augment command.
std::string format_augmented(const Vocabulary& vocab, const AugmentedTarget& target);

}  // namespace rnovo
