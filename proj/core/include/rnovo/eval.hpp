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

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rnovo/decode.hpp"
#include "rnovo/spectrum.hpp"

namespace rnovo {

struct AaCount {
  std::size_t matched = 0;
  std::size_t predicted = 0;
};

/// Positional agreement over the shorter length; predicted = |pred|.
AaCount aa_precision(std::span<const TokenId> pred, std::span<const TokenId> label);

/// Exact token-for-token equality, length included.
bool peptide_match(std::span<const TokenId> pred, std::span<const TokenId> label);

enum class ReflectOutcome {
  kSame,                ///< restored token equals the retracted one
  kCorrected,           ///< restored token matches the label where the retracted one did not
  kChangedUncorrected,  ///< restored token differs but is not a correction
  kUnpaired,            ///< nothing to retract, or no residue follows
};

const char* to_string(ReflectOutcome o) noexcept;

struct ReflectEvent {
  std::size_t raw_position = 0;
  TokenId retracted = -1;  ///< -1 when the reflect had nothing to delete
  TokenId restored = -1;   ///< -1 when no residue follows
  /// Index in the answer where the restored token lands.
  std::size_t answer_position = 0;
  ReflectOutcome outcome = ReflectOutcome::kUnpaired;
};

/// Walks the raw tokens with the post-processing stack and classifies every
/// <reflect> against the label.
std::vector<ReflectEvent> reflection_events(std::span<const TokenId> raw, std::span<const TokenId> label);

struct ReflectionUsage {
  std::size_t sequences = 0;
  std::size_t sequences_with_reflect = 0;
  std::size_t events = 0;
  std::size_t same = 0;
  std::size_t corrected = 0;
  std::size_t changed_uncorrected = 0;
  std::size_t unpaired = 0;

  double use() const noexcept;
  double corrected_rate() const noexcept;
  double same_rate() const noexcept;
  double changed_uncorrected_rate() const noexcept;
  void add(std::span<const TokenId> raw, std::span<const TokenId> label);
};

ReflectionUsage reflection_usage(std::span<const std::vector<TokenId>> raws, std::span<const Peptide> labels);

struct DetailRow {
  std::string id;
  std::vector<TokenId> raw;
  std::vector<TokenId> answer;
  std::vector<TokenId> label;
  std::vector<double> probabilities;  ///< per raw token
  AaCount aa;
  bool match = false;
};

struct EvalReport {
  std::size_t spectra = 0;
  std::size_t aa_matched = 0;    ///< M_AA
  std::size_t aa_predicted = 0;  ///< T_AA
  std::size_t peptide_matched = 0;    ///< M_pep
  std::size_t peptide_predicted = 0;  ///< T_pep: non-empty answers
  ReflectionUsage usage;
  std::vector<DetailRow> details;

  double aa_precision() const noexcept;
  double peptide_precision() const noexcept;
  double peptide_recall() const noexcept;

  /// Folds one prediction into the totals.
  void add(std::string id, const RawPrediction& prediction, const Peptide& label);
};

/// Decodes every PSM (top hypothesis when beam > 1) and aggregates in PSM
/// order. Throws DataError for an empty list or an unlabeled PSM. Spectra
/// that preprocess to nothing count as empty predictions.
EvalReport evaluate(const ModelParameters<float>& params, std::span<const Psm> psms,
                    const PreprocessConfig& preprocess, const DecodeConfig& decode);

/// Summary block of "key\tvalue" lines.
void write_report(std::ostream& out, const EvalReport& report);
/// Header plus one tab-separated row per PSM.
void write_details(std::ostream& out, const Vocabulary& vocab, const EvalReport& report);

}  // namespace rnovo
