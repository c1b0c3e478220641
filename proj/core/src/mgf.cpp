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

#include "rnovo/mgf.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "rnovo/error.hpp"

namespace rnovo {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct Block {
  std::size_t begin_line = 0;
  Psm psm;
  std::optional<double> pepmass;
  std::optional<int> charge;
};

Psm finish(Block& block) {
  if (!block.pepmass) throw ParseError(block.begin_line, "block is missing PEPMASS");
  const int c = block.charge.value_or(1);
  block.psm.spectrum.precursor_charge = c;
  block.psm.spectrum.precursor_mass = *block.pepmass * c - c * mass::kProton;
  return std::move(block.psm);
}

}  // namespace

std::vector<Psm> parse_mgf(std::istream& in, const Vocabulary& vocab) {
  std::vector<Psm> out;
  std::optional<Block> block;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;

    if (text == "BEGIN IONS") {
      if (block) throw ParseError(block->begin_line, "BEGIN IONS without matching END IONS");
      block.emplace();
      block->begin_line = lineno;
      continue;
    }
    if (text == "END IONS") {
      if (!block) throw ParseError(lineno, "END IONS outside of a block");
      out.push_back(finish(*block));
      block.reset();
      continue;
    }
    if (!block) throw ParseError(lineno, "content outside of BEGIN IONS/END IONS");

    if (const auto eq = text.find('='); eq != std::string_view::npos) {
      const auto key = text.substr(0, eq);
      const auto value = trim(text.substr(eq + 1));
      if (key == "TITLE") {
        block->psm.id = std::string(value);
      } else if (key == "PEPMASS") {
        // PEPMASS may carry a second (intensity) field.
        double mz = 0.0;
        if (!parse_double(value.substr(0, value.find_first_of(" \t")), mz) || !(mz > 0.0)) {
          throw ParseError(lineno, "invalid PEPMASS: " + std::string(value));
        }
        block->pepmass = mz;
      } else if (key == "CHARGE") {
        auto digits = value;
        if (!digits.empty() && digits.back() == '+') digits.remove_suffix(1);
        int c = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), c);
        if (ec != std::errc() || ptr != digits.data() + digits.size() || c < 1) {
          throw ParseError(lineno, "invalid CHARGE: " + std::string(value));
        }
        block->charge = c;
      } else if (key == "SEQ") {
        if (value.empty()) throw ParseError(lineno, "empty SEQ");
        try {
          block->psm.label = encode_peptide(vocab, value);
        } catch (const DataError& e) {
          throw ParseError(lineno, e.what());
        }
      }
      continue;
    }

    const auto split = text.find_first_of(" \t");
    double mz = 0.0;
    double intensity = 0.0;
    if (split == std::string_view::npos || !parse_double(text.substr(0, split), mz) ||
        !parse_double(text.substr(split + 1), intensity) || intensity < 0.0) {
      throw ParseError(lineno, "invalid peak line: " + std::string(text));
    }
    block->psm.spectrum.peaks.push_back({mz, intensity});
  }
  if (block) throw ParseError(block->begin_line, "unterminated block (missing END IONS)");
  return out;
}

std::vector<Psm> read_mgf(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return parse_mgf(in, vocab);
  } catch (const ParseError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void emit_mgf(std::ostream& out, const Vocabulary& vocab, std::span<const Psm> psms) {
  char buf[96];
  for (const auto& psm : psms) {
    const auto& s = psm.spectrum;
    const int c = s.precursor_charge;
    out << "BEGIN IONS\n";
    out << "TITLE=" << psm.id << '\n';
    std::snprintf(buf, sizeof buf, "%.8f", (s.precursor_mass + c * mass::kProton) / c);
    out << "PEPMASS=" << buf << '\n';
    out << "CHARGE=" << c << "+\n";
    if (psm.label) out << "SEQ=" << decode_tokens(vocab, *psm.label) << '\n';
    for (const auto& p : s.peaks) {
      std::snprintf(buf, sizeof buf, "%.5f %.6e\n", p.mz, p.intensity);
      out << buf;
    }
    out << "END IONS\n\n";
  }
}

void write_mgf(const std::filesystem::path& path, const Vocabulary& vocab, std::span<const Psm> psms) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  emit_mgf(out, vocab, psms);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace rnovo
