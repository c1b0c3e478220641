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

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "rnovo/spectrum.hpp"

namespace rnovo {

// MGF subset:
//
//   BEGIN IONS
//   TITLE=<id>
//   PEPMASS=<precursor m/z>
//   CHARGE=<n>+
//   SEQ=<peptide>            (optional)
//   <mz> <intensity>
//   ...
//   END IONS
//
// Other KEY=VALUE lines inside a block are ignored. The neutral precursor mass
// is pepmass * c - c * proton.

/// Throws ParseError carrying the offending line number.
std::vector<Psm> parse_mgf(std::istream& in, const Vocabulary& vocab);
std::vector<Psm> read_mgf(const std::filesystem::path& path, const Vocabulary& vocab);

/// m/z with 5 decimals; intensities in scientific notation with 6 mantissa decimals.
void emit_mgf(std::ostream& out, const Vocabulary& vocab, std::span<const Psm> psms);
void write_mgf(const std::filesystem::path& path, const Vocabulary& vocab, std::span<const Psm> psms);

}  // namespace rnovo
