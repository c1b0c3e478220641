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

#include "rnovo/decode.hpp"

#include <algorithm>

#include "rnovo/error.hpp"

namespace rnovo {

void DecodeConfig::validate() const {
  if (beam < 1) throw UsageError("beam must be >= 1");
  if (max_len < 0) throw UsageError("max_len must be >= 0");
}

namespace {

int resolve_max_len(const ModelConfig& config, int max_len) {
  if (max_len < 0) throw UsageError("max_len must be >= 0");
  if (max_len == 0) return config.max_decode_len;
  if (max_len > config.max_decode_len) {
    throw UsageError("max_len " + std::to_string(max_len) + " exceeds max_decode_len " +
                     std::to_string(config.max_decode_len));
  }
  return max_len;
}

bool emittable(TokenId id) { return id != Vocabulary::kPad && id != Vocabulary::kSos; }

std::vector<TokenId> decoder_input(std::span<const TokenId> raw) {
  std::vector<TokenId> in;
  in.reserve(raw.size() + 1);
  in.push_back(Vocabulary::kSos);
  in.insert(in.end(), raw.begin(), raw.end());
  return in;
}

// Higher score first, then lexicographically smaller token ids.
bool ranks_before(const RawPrediction& a, const RawPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

// Seeds a hypothesis with the forced prefix and the model's log-probabilities for it.
RawPrediction seed(const DecodingContext& ctx, std::span<const TokenId> prefix) {
  RawPrediction h;
  for (auto id : prefix) {
    const std::vector<std::vector<TokenId>> in{decoder_input(h.tokens)};
    const double lp = ctx.next_log_probs(in)(0, id);
    h.tokens.push_back(id);
    h.log_probs.push_back(lp);
    h.score += lp;
  }
  return h;
}

RawPrediction greedy_from(const DecodingContext& ctx, RawPrediction h, int max_len) {
  while (static_cast<int>(h.tokens.size()) < max_len) {
    const std::vector<std::vector<TokenId>> in{decoder_input(h.tokens)};
    const auto lp = ctx.next_log_probs(in);
    TokenId best = -1;
    for (TokenId id = 0; id < lp.cols(); ++id) {
      if (emittable(id) && (best < 0 || lp(0, id) > lp(0, best))) best = id;
    }
    h.tokens.push_back(best);
    h.log_probs.push_back(lp(0, best));
    h.score += lp(0, best);
    if (best == Vocabulary::kEos) {
      h.terminated = true;
      break;
    }
  }
  return h;
}

std::vector<RawPrediction> beam_from(const DecodingContext& ctx, RawPrediction start, int beam, int max_len) {
  std::vector<RawPrediction> live{std::move(start)};
  std::vector<RawPrediction> finished;
  std::vector<RawPrediction> candidates;
  while (!live.empty() && static_cast<int>(live.front().tokens.size()) < max_len) {
    // Extensions only lower a score, so once `beam` finished hypotheses beat
    // every live one the result is settled.
    if (static_cast<int>(finished.size()) >= beam) {
      std::sort(finished.begin(), finished.end(), ranks_before);
      const double bar = finished[static_cast<std::size_t>(beam) - 1].score;
      if (std::all_of(live.begin(), live.end(), [&](const RawPrediction& h) { return h.score < bar; })) break;
    }
    std::vector<std::vector<TokenId>> inputs;
    for (const auto& h : live) inputs.push_back(decoder_input(h.tokens));
    const auto lp = ctx.next_log_probs(inputs);

    candidates.clear();
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (TokenId id = 0; id < lp.cols(); ++id) {
        if (!emittable(id)) continue;
        RawPrediction c = live[b];
        const double l = lp(static_cast<Eigen::Index>(b), id);
        c.tokens.push_back(id);
        c.log_probs.push_back(l);
        c.score += l;
        c.terminated = id == Vocabulary::kEos;
        candidates.push_back(std::move(c));
      }
    }
    const auto keep = std::min(candidates.size(), static_cast<std::size_t>(beam));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      ranks_before);
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      (candidates[i].terminated ? finished : live).push_back(std::move(candidates[i]));
    }
  }
  // Whatever is still live was truncated at max_len.
  finished.insert(finished.end(), std::make_move_iterator(live.begin()), std::make_move_iterator(live.end()));
  std::sort(finished.begin(), finished.end(), ranks_before);
  if (static_cast<int>(finished.size()) > beam) finished.resize(static_cast<std::size_t>(beam));
  return finished;
}

}  // namespace

RawPrediction greedy_decode(const ModelParameters<float>& params, const Spectrum& spectrum, int max_len) {
  const int limit = resolve_max_len(params.config, max_len);
  DecodingContext ctx(params, spectrum);
  return greedy_from(ctx, {}, limit);
}

std::vector<RawPrediction> beam_decode(const ModelParameters<float>& params, const Spectrum& spectrum, int beam,
                                       int max_len) {
  if (beam < 1) throw UsageError("beam must be >= 1");
  const int limit = resolve_max_len(params.config, max_len);
  DecodingContext ctx(params, spectrum);
  return beam_from(ctx, {}, beam, limit);
}

void validate_prefix(const Vocabulary& vocab, std::span<const TokenId> prefix) {
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const auto id = prefix[i];
    if (!vocab.is_residue(id) && id != Vocabulary::kReflect) {
      const auto what = vocab.contains(id) ? "'" + vocab.symbol(id) + "'" : std::to_string(id);
      throw DataError("invalid prefix token " + what + " at position " + std::to_string(i));
    }
  }
}

std::vector<RawPrediction> forced_prefix_decode(const ModelParameters<float>& params, const Spectrum& spectrum,
                                                std::span<const TokenId> prefix, const DecodeConfig& config) {
  config.validate();
  const int limit = resolve_max_len(params.config, config.max_len);
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const auto id = prefix[i];
    if (id < Vocabulary::kReflect || id >= params.config.vocab_size) {
      throw DataError("invalid prefix token id " + std::to_string(id) + " at position " + std::to_string(i));
    }
  }
  if (static_cast<int>(prefix.size()) >= limit) {
    throw UsageError("prefix length " + std::to_string(prefix.size()) + " leaves no room below max_len " +
                     std::to_string(limit));
  }
  DecodingContext ctx(params, spectrum);
  auto start = seed(ctx, prefix);
  if (config.beam == 1) return {greedy_from(ctx, std::move(start), limit)};
  return beam_from(ctx, std::move(start), config.beam, limit);
}

std::vector<TokenId> postprocess_reflection(std::span<const TokenId> raw) {
  std::vector<TokenId> out;
  out.reserve(raw.size());
  for (auto id : raw) {
    if (id == Vocabulary::kReflect) {
      if (!out.empty()) out.pop_back();
    } else if (id >= Vocabulary::kFirstResidue) {
      out.push_back(id);
    }
  }
  return out;
}

}  // namespace rnovo
