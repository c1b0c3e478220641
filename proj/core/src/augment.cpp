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

#include "rnovo/augment.hpp"

#include <algorithm>
#include <numeric>

#include "rnovo/error.hpp"

namespace rnovo {

const char* to_string(Strategy s) noexcept {
  return s == Strategy::kRple ? "RPLE" : "RPRE";
}

void AugmentConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  if (!(strategy_mix >= 0.0 && strategy_mix <= 1.0)) {
    throw UsageError("strategy mix must lie in [0, 1]");
  }
  if (max_injections < 1) throw UsageError("max injections must be >= 1");
}

AugmentedTarget plain_target(const Peptide& label) {
  AugmentedTarget out;
  out.tokens = label.tokens;
  out.loss_mask.assign(label.tokens.size(), 1);
  return out;
}

AugmentedTarget apply_injections(const Peptide& label, std::vector<InjectionRecord> records) {
  const auto n = label.tokens.size();
  std::sort(records.begin(), records.end(),
            [](const InjectionRecord& a, const InjectionRecord& b) { return a.position > b.position; });
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto t = records[i].position;
    if (t < 1 || t > n) throw UsageError("injection position out of range");
    if (i > 0 && records[i - 1].position == t) throw UsageError("duplicate injection position");
    records[i].is_noop = records[i].error_token == label.tokens[t - 1];
  }

  AugmentedTarget out = plain_target(label);
  for (const auto& r : records) {
    const auto at = static_cast<std::ptrdiff_t>(r.position - 1);
    out.tokens.insert(out.tokens.begin() + at, {r.error_token, Vocabulary::kReflect});
    out.loss_mask.insert(out.loss_mask.begin() + at, {0, 1});
  }
  std::reverse(records.begin(), records.end());
  out.records = std::move(records);
  return out;
}

namespace {

TokenId random_residue(const Vocabulary& vocab, Rng& rng) {
  std::uniform_int_distribution<TokenId> pick(
      Vocabulary::kFirstResidue, Vocabulary::kFirstResidue + static_cast<TokenId>(vocab.residue_count()) - 1);
  return pick(rng);
}

// Distinct positions in [1, limit], ascending.
std::vector<std::size_t> sample_positions(std::size_t limit, std::size_t count, Rng& rng) {
  std::vector<std::size_t> all(limit);
  std::iota(all.begin(), all.end(), std::size_t{1});
  count = std::min(count, limit);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, limit - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

AugmentedTarget inject(const Peptide& label, const Vocabulary& vocab, Strategy strategy,
                       std::size_t count, Rng& rng) {
  const auto n = label.tokens.size();
  if (n == 0) throw DataError("cannot inject into an empty label");
  if (n < 2) strategy = Strategy::kRpre;

  const auto limit = strategy == Strategy::kRple ? n - 1 : n;
  std::vector<InjectionRecord> records;
  for (auto t : sample_positions(limit, count, rng)) {
    InjectionRecord r;
    r.position = t;
    r.strategy = strategy;
    if (strategy == Strategy::kRple) {
      // Uniform over the multiset a_{t+1..n}; 0-based that is [t, n-1].
      std::uniform_int_distribution<std::size_t> later(t, n - 1);
      r.error_token = label.tokens[later(rng)];
    } else {
      r.error_token = random_residue(vocab, rng);
    }
    records.push_back(r);
  }
  return apply_injections(label, std::move(records));
}

}  // namespace

AugmentedTarget inject_rpre(const Peptide& label, const Vocabulary& vocab, Rng& rng) {
  return inject(label, vocab, Strategy::kRpre, 1, rng);
}

AugmentedTarget inject_rple(const Peptide& label, const Vocabulary& vocab, Rng& rng) {
  return inject(label, vocab, Strategy::kRple, 1, rng);
}

std::vector<AugmentedTarget> augment_batch(std::span<const Peptide> labels, const AugmentConfig& config,
                                           const Vocabulary& vocab, Rng& rng) {
  config.validate();
  std::vector<AugmentedTarget> out;
  out.reserve(labels.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& label : labels) {
    // Both draws happen for every item so the stream advances uniformly.
    const bool injected = unit(rng) < config.alpha;
    const auto strategy = unit(rng) < config.strategy_mix ? Strategy::kRple : Strategy::kRpre;
    if (!injected) {
      out.push_back(plain_target(label));
      continue;
    }
    out.push_back(inject(label, vocab, strategy, static_cast<std::size_t>(config.max_injections), rng));
  }
  return out;
}

TargetTensors finalize_target(const AugmentedTarget& target) {
  if (target.loss_mask.size() != target.tokens.size()) {
    throw UsageError("loss mask length does not match target length");
  }
  TargetTensors out;
  out.decoder_input.reserve(target.tokens.size() + 1);
  out.decoder_input.push_back(Vocabulary::kSos);
  out.decoder_input.insert(out.decoder_input.end(), target.tokens.begin(), target.tokens.end());
  out.supervision = target.tokens;
  out.supervision.push_back(Vocabulary::kEos);
  out.loss_mask = target.loss_mask;
  out.loss_mask.push_back(1);
  return out;
}

std::string format_augmented(const Vocabulary& vocab, const AugmentedTarget& target) {
  std::string out = decode_tokens(vocab, target.tokens);
  out += '\t';
  for (auto m : target.loss_mask) out += m ? '1' : '0';
  return out;
}

}  // namespace rnovo
