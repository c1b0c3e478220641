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

#include "rnovo/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "rnovo/error.hpp"

namespace rnovo {

namespace {

// Monoisotopic residue masses (amino acid minus water).
constexpr double kCarbamidomethyl = 57.021464;
constexpr double kOxidation = 15.994915;

const std::vector<Residue>& unmodified_residues() {
  static const std::vector<Residue> table = {
      {"G", 57.021464},  {"A", 71.037114},  {"S", 87.032028},  {"P", 97.052764},
      {"V", 99.068414},  {"T", 101.047679}, {"C", 103.009185}, {"L", 113.084064},
      {"I", 113.084064}, {"N", 114.042927}, {"D", 115.026943}, {"Q", 128.058578},
      {"K", 128.094963}, {"E", 129.042593}, {"M", 131.040485}, {"H", 137.058912},
      {"F", 147.068414}, {"R", 156.101111}, {"Y", 163.063329}, {"W", 186.079313},
  };
  return table;
}

const std::string kSpecialSymbols[] = {"<pad>", "<sos>", "$", "<reflect>"};

}  // namespace

const std::vector<Residue>& known_residues() {
  static const std::vector<Residue> table = [] {
    std::vector<Residue> out;
    for (const auto& r : unmodified_residues()) {
      if (r.symbol == "C") {
        out.push_back({"C+57.021", r.mass + kCarbamidomethyl});
      } else {
        out.push_back(r);
      }
    }
    out.push_back({"M+15.995", 131.040485 + kOxidation});
    return out;
  }();
  return table;
}

Vocabulary::Vocabulary(std::vector<Residue> residues) : residues_(std::move(residues)) {
  symbols_.assign(std::begin(kSpecialSymbols), std::end(kSpecialSymbols));
  for (TokenId id = 0; id < kFirstResidue; ++id) index_.emplace(symbols_[id], id);
  for (const auto& r : residues_) {
    if (r.symbol.empty()) throw UsageError("empty residue symbol");
    if (!(r.mass > 0.0) || !std::isfinite(r.mass)) {
      throw UsageError("residue " + r.symbol + " must have a positive mass");
    }
    const auto id = static_cast<TokenId>(symbols_.size());
    if (!index_.emplace(r.symbol, id).second) {
      throw UsageError("duplicate residue symbol: " + r.symbol);
    }
    symbols_.push_back(r.symbol);
  }
}

const std::string& Vocabulary::symbol(TokenId id) const {
  if (!contains(id)) throw UsageError("token id out of range: " + std::to_string(id));
  return symbols_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::index(std::string_view symbol) const {
  if (auto id = find(symbol)) return *id;
  throw DataError("unknown token: " + std::string(symbol));
}

double Vocabulary::residue_mass(TokenId id) const {
  if (!is_residue(id)) {
    throw UsageError("token " + (contains(id) ? symbols_[id] : std::to_string(id)) +
                     " has no mass");
  }
  return residues_[static_cast<std::size_t>(id - kFirstResidue)].mass;
}

Vocabulary build_vocabulary(const VocabConfig& config) {
  const auto& known = known_residues();
  auto lookup = [&](const std::string& symbol) -> const Residue& {
    auto it = std::find_if(known.begin(), known.end(),
                           [&](const Residue& r) { return r.symbol == symbol; });
    if (it == known.end()) throw UsageError("unknown residue symbol: " + symbol);
    return *it;
  };

  bool oxidation = false;
  for (const auto& mod : config.modifications) {
    if (mod == "M+15.995") {
      oxidation = true;
    } else if (mod != "C+57.021") {
      throw UsageError("unknown modification: " + mod);
    }
  }

  std::vector<Residue> residues;
  if (const auto* name = std::get_if<std::string>(&config.alphabet)) {
    if (*name != "full20") throw UsageError("unknown alphabet: " + *name);
    for (const auto& r : known) {
      if (r.symbol == "M+15.995" && !oxidation) continue;
      residues.push_back(r);
    }
  } else {
    std::set<std::string> seen;
    for (const auto& s : std::get<std::vector<std::string>>(config.alphabet)) {
      if (!seen.insert(s).second) throw UsageError("duplicate residue symbol: " + s);
      // Bare "C" always means the carbamidomethylated residue.
      residues.push_back(s == "C" ? lookup("C+57.021") : lookup(s));
    }
    if (residues.empty()) throw UsageError("alphabet must contain at least one residue");
  }
  return Vocabulary(std::move(residues));
}

std::vector<TokenId> parse_tokens(const Vocabulary& vocab, std::string_view text) {
  std::vector<TokenId> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '<') {
      const auto close = text.find('>', i);
      if (close == std::string_view::npos) {
        throw DataError("unterminated special token at offset " + std::to_string(i));
      }
      out.push_back(vocab.index(text.substr(i, close - i + 1)));
      i = close + 1;
      continue;
    }
    if (c == '$') {
      out.push_back(Vocabulary::kEos);
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    if (end < text.size() && (text[end] == '+' || text[end] == '-')) {
      ++end;
      while (end < text.size() &&
             (std::isdigit(static_cast<unsigned char>(text[end])) || text[end] == '.')) {
        ++end;
      }
      const auto symbol = text.substr(i, end - i);
      auto id = vocab.find(symbol);
      if (!id) throw DataError("unknown modification: " + std::string(symbol));
      out.push_back(*id);
    } else {
      const auto symbol = text.substr(i, 1);
      auto id = vocab.find(symbol);
      if (!id) throw DataError("unknown residue symbol: " + std::string(symbol));
      out.push_back(*id);
    }
    i = end;
  }
  return out;
}

Peptide encode_peptide(const Vocabulary& vocab, std::string_view text) {
  Peptide p{parse_tokens(vocab, text)};
  if (p.tokens.empty()) throw DataError("empty peptide");
  for (auto id : p.tokens) {
    if (!vocab.is_residue(id)) {
      throw DataError("special token " + vocab.symbol(id) + " is not allowed in a peptide");
    }
  }
  return p;
}

std::string decode_tokens(const Vocabulary& vocab, std::span<const TokenId> tokens) {
  std::string out;
  for (auto id : tokens) out += vocab.symbol(id);
  return out;
}

double peptide_neutral_mass(const Vocabulary& vocab, const Peptide& peptide) {
  if (peptide.tokens.empty()) throw DataError("empty peptide has no mass");
  double total = mass::kWater;
  for (auto id : peptide.tokens) total += vocab.residue_mass(id);
  return total;
}

}  // namespace rnovo
