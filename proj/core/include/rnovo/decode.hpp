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

#include <span>
#include <vector>

#include "rnovo/model.hpp"
#include "rnovo/vocab.hpp"

namespace rnovo {

struct DecodeConfig {
  int beam = 1;
  /// Cap on raw tokens including the terminating eos; 0 uses the model's
  /// max_decode_len, which is also the upper bound.
  int max_len = 0;

  void validate() const;
};

struct RawPrediction {
  /// Forced prefix included; ends with eos unless truncated.
  std::vector<TokenId> tokens;
  /// Model log-probability of each token, forced prefix tokens included.
  std::vector<double> log_probs;
  /// Sum of log_probs.
  double score = 0.0;
  bool terminated = false;

  friend bool operator==(const RawPrediction&, const RawPrediction&) = default;
};

/// Argmax decoding; ties go to the lowest token id. <pad> and <sos> are
/// never emitted.
RawPrediction greedy_decode(const ModelParameters<float>& params, const Spectrum& spectrum, int max_len = 0);

/// Length-synchronous beam search. Hypotheses ending in eos retire; the
/// result holds up to `beam` hypotheses sorted by score (descending), ties
/// broken by token ids (ascending).
std::vector<RawPrediction> beam_decode(const ModelParameters<float>& params, const Spectrum& spectrum, int beam,
                                       int max_len = 0);

/// Forces `prefix` (residues and <reflect> only), then continues with
/// greedy (beam == 1) or beam search. Throws DataError on other tokens and
/// UsageError when the prefix leaves no room to continue.
std::vector<RawPrediction> forced_prefix_decode(const ModelParameters<float>& params, const Spectrum& spectrum,
                                                std::span<const TokenId> prefix, const DecodeConfig& config);

/// Each <reflect> removes itself and the nearest surviving residue before
/// it (a leading <reflect> removes only itself); eos, sos and pad are
/// dropped.
std::vector<TokenId> postprocess_reflection(std::span<const TokenId> raw);

/// Throws DataError naming the first token that is not a residue or <reflect>.
void validate_prefix(const Vocabulary& vocab, std::span<const TokenId> prefix);

}  // namespace rnovo
