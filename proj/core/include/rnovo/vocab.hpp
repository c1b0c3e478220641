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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace rnovo {

using TokenId = int;

namespace mass {
inline constexpr double kProton = 1.007276;
inline constexpr double kWater = 18.0105646837;
}  // namespace mass

/// A residue token: one-letter amino acid code with an optional
/// "+<delta>" modification suffix, and its monoisotopic residue mass in Da.
struct Residue {
  std::string symbol;
  double mass = 0.0;

  friend bool operator==(const Residue&, const Residue&) = default;
};

struct VocabConfig {
  /// Either "full20" or an explicit ordered list of residue symbols.
  std::variant<std::string, std::vector<std::string>> alphabet = std::string("full20");
  /// Modifications enabled for full20. C+57.021 is always on.
  std::vector<std::string> modifications = {"C+57.021", "M+15.995"};
};

/// Token alphabet: four special tokens followed by the residue tokens.
/// Ids are contiguous from 0. Immutable once built.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kSos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kReflect = 3;
  static constexpr TokenId kFirstResidue = 4;

  static constexpr std::string_view kReflectSymbol = "<reflect>";
  static constexpr std::string_view kEosSymbol = "$";

  /// Builds from an explicit residue list (as stored in checkpoints).
  explicit Vocabulary(std::vector<Residue> residues);

  std::size_t size() const noexcept { return residues_.size() + kFirstResidue; }
  std::size_t residue_count() const noexcept { return residues_.size(); }
  std::span<const Residue> residues() const noexcept { return residues_; }

  bool contains(TokenId id) const noexcept { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  bool is_residue(TokenId id) const noexcept { return id >= kFirstResidue && contains(id); }

  const std::string& symbol(TokenId id) const;
  std::optional<TokenId> find(std::string_view symbol) const;
  TokenId index(std::string_view symbol) const;

  /// Throws UsageError for special tokens.
  double residue_mass(TokenId id) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.residues_ == b.residues_; }

 private:
  std::vector<Residue> residues_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Throws UsageError on duplicate symbols or unknown modification names.
Vocabulary build_vocabulary(const VocabConfig& config = {});

/// Residue masses keyed by symbol for every token build_vocabulary knows.
const std::vector<Residue>& known_residues();

/// A label: residue tokens only, no specials.
struct Peptide {
  std::vector<TokenId> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  friend bool operator==(const Peptide&, const Peptide&) = default;
};

/// Splits case-study notation ("KDF", "M+15.995N", "RL<reflect>", "KD$") into
/// token ids. Throws DataError on unknown symbols.
std::vector<TokenId> parse_tokens(const Vocabulary& vocab, std::string_view text);

/// Like parse_tokens but only residue symbols are accepted, and at least one.
Peptide encode_peptide(const Vocabulary& vocab, std::string_view text);

/// Renders ids in case-study notation; special tokens print as "<reflect>",
/// "$", "<sos>", "<pad>".
std::string decode_tokens(const Vocabulary& vocab, std::span<const TokenId> tokens);
inline std::string decode_tokens(const Vocabulary& vocab, const Peptide& p) {
  return decode_tokens(vocab, std::span<const TokenId>(p.tokens));
}

/// Sum of residue masses plus one water. Throws DataError when empty.
double peptide_neutral_mass(const Vocabulary& vocab, const Peptide& peptide);

}  // namespace rnovo
