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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "rnovo/decode.hpp"
#include "rnovo/error.hpp"
#include "test_support.hpp"

using namespace rnovo;
using rnovo::testing::recursive_strip;
using rnovo::testing::reduced_vocab;
using rnovo::testing::tiny_config;

namespace {

const Vocabulary& full() {
  static const Vocabulary v = build_vocabulary();
  return v;
}

std::vector<TokenId> ids(const std::string& text) { return parse_tokens(full(), text); }

Spectrum simple_spectrum(double shift = 0.0) {
  Spectrum s;
  s.peaks = {{130.0 + shift, 0.4}, {260.2, 0.9}, {388.1 + shift, 0.2}};
  s.precursor_mass = 700.0 + shift;
  s.precursor_charge = 2;
  return s;
}

// Output logits that ignore the input: out.weight = 0, out.bias = `bias`.
ModelParameters<float> constant_model(const Vocabulary& vocab, const std::vector<float>& bias) {
  auto params = init_model(tiny_config(vocab), 1);
  params.tensors.at("out.weight").setZero();
  auto& b = params.tensors.at("out.bias");
  for (Eigen::Index i = 0; i < b.cols(); ++i) b(0, i) = bias[static_cast<std::size_t>(i)];
  return params;
}

std::vector<float> favor(const Vocabulary& vocab, TokenId id, float value = 5.0f) {
  std::vector<float> bias(vocab.size(), 0.0f);
  bias[static_cast<std::size_t>(id)] = value;
  return bias;
}

double log_softmax_at(const std::vector<float>& bias, TokenId id) {
  double denom = 0;
  for (float b : bias) denom += std::exp(static_cast<double>(b));
  return bias[static_cast<std::size_t>(id)] - std::log(denom);
}

}  // namespace

TEST(Postprocess, CaseStudies) {
  const auto one = ids("R<reflect>KYFHNELM+15.995NYVQEC+57.021QFDSETSL$");
  EXPECT_EQ(decode_tokens(full(), postprocess_reflection(one)), "KYFHNELM+15.995NYVQEC+57.021QFDSETSL");
  const auto two = ids("KDFFTYME<reflect>E$");
  EXPECT_EQ(decode_tokens(full(), postprocess_reflection(two)), "KDFFTYME");
}

TEST(Postprocess, LeadingAndConsecutiveReflects) {
  EXPECT_EQ(postprocess_reflection(ids("<reflect>KD$")), ids("KD"));
  EXPECT_EQ(postprocess_reflection(ids("KDF<reflect><reflect>A")), ids("KA"));
  EXPECT_EQ(postprocess_reflection(ids("K<reflect><reflect>A")), ids("A"));
  EXPECT_TRUE(postprocess_reflection(ids("$")).empty());
  EXPECT_TRUE(postprocess_reflection({}).empty());
}

TEST(PostprocessProperty, ExhaustiveAgainstRecursiveOracle) {
  const std::vector<TokenId> alphabet{4, 5, Vocabulary::kReflect};
  std::size_t cases = 0;
  for (std::size_t n = 0; n <= 6; ++n) {
    std::vector<std::size_t> digits(n, 0);
    for (;;) {
      std::vector<TokenId> raw;
      for (auto d : digits) raw.push_back(alphabet[d]);
      const auto answer = postprocess_reflection(raw);
      EXPECT_EQ(answer, recursive_strip(raw));
      auto with_eos = raw;
      with_eos.push_back(Vocabulary::kEos);
      EXPECT_EQ(postprocess_reflection(with_eos), answer);
      EXPECT_EQ(postprocess_reflection(answer), answer);
      for (auto t : answer) EXPECT_GE(t, Vocabulary::kFirstResidue);
      ++cases;
      std::size_t i = 0;
      while (i < n && ++digits[i] == alphabet.size()) digits[i++] = 0;
      if (i == n) break;
    }
  }
  EXPECT_EQ(cases, 1u + 3u + 9u + 27u + 81u + 243u + 729u);
}

TEST(PostprocessProperty, InvertsAugmentation) {
  Rng rng(41);
  AugmentConfig c;
  c.alpha = 1.0;
  c.max_injections = 3;
  std::vector<Peptide> labels;
  for (int i = 0; i < 2000; ++i) labels.push_back(rnovo::testing::random_peptide(full(), 1 + i % 15, rng));
  const auto out = augment_batch(labels, c, full(), rng);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_EQ(postprocess_reflection(out[i].tokens), labels[i].tokens);
  }
}

TEST(GreedyDecode, EosFavoringModelGivesEmptyAnswer) {
  const auto v = reduced_vocab({"G", "A", "S"});
  const auto params = constant_model(v, favor(v, Vocabulary::kEos));
  const auto p = greedy_decode(params, simple_spectrum());
  EXPECT_EQ(p.tokens, (std::vector<TokenId>{Vocabulary::kEos}));
  EXPECT_TRUE(p.terminated);
  EXPECT_TRUE(postprocess_reflection(p.tokens).empty());
}

TEST(GreedyDecode, TruncatesAtMaxLen) {
  const auto v = reduced_vocab({"G", "A", "S"});
  const auto bias = favor(v, 5);
  const auto params = constant_model(v, bias);
  const auto p = greedy_decode(params, simple_spectrum(), 3);
  EXPECT_EQ(p.tokens, (std::vector<TokenId>{5, 5, 5}));
  EXPECT_FALSE(p.terminated);
  ASSERT_EQ(p.log_probs.size(), 3u);
  for (double lp : p.log_probs) EXPECT_NEAR(lp, log_softmax_at(bias, 5), 1e-5);
  EXPECT_NEAR(p.score, 3 * log_softmax_at(bias, 5), 1e-5);

  const auto capped = greedy_decode(params, simple_spectrum());
  EXPECT_EQ(capped.tokens.size(), static_cast<std::size_t>(params.config.max_decode_len));
}

TEST(GreedyDecode, NeverEmitsPadOrSos) {
  const auto v = reduced_vocab({"G", "A", "S"});
  auto bias = favor(v, Vocabulary::kPad, 9.0f);
  bias[Vocabulary::kSos] = 9.0f;
  bias[Vocabulary::kEos] = 1.0f;
  const auto p = greedy_decode(constant_model(v, bias), simple_spectrum());
  EXPECT_EQ(p.tokens, (std::vector<TokenId>{Vocabulary::kEos}));
}

TEST(GreedyDecode, TiesGoToLowestId) {
  const auto v = reduced_vocab({"G", "A", "S"});
  std::vector<float> bias(v.size(), 0.0f);
  bias[6] = 2.0f;
  bias[5] = 2.0f;
  const auto p = greedy_decode(constant_model(v, bias), simple_spectrum(), 2);
  EXPECT_EQ(p.tokens, (std::vector<TokenId>{5, 5}));
}

TEST(DecodeConfig, Validation) {
  DecodeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.beam = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.max_len = -1;
  EXPECT_THROW(c.validate(), UsageError);
  const auto v = reduced_vocab({"G", "A"});
  const auto params = init_model(tiny_config(v), 1);
  EXPECT_THROW(greedy_decode(params, simple_spectrum(), 1000), UsageError);
  EXPECT_THROW(beam_decode(params, simple_spectrum(), 0), UsageError);
}

TEST(BeamDecode, BeamOneEqualsGreedy) {
  const auto v = reduced_vocab({"G", "A", "S", "P", "V"});
  const auto params = init_model(tiny_config(v), 21);
  for (int i = 0; i < 100; ++i) {
    const auto s = simple_spectrum(0.37 * i);
    const auto g = greedy_decode(params, s, 12);
    const auto b = beam_decode(params, s, 1, 12);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(b[0].tokens, g.tokens);
    EXPECT_NEAR(b[0].score, g.score, 1e-9);
  }
}

TEST(BeamDecode, SortedWellFormedHypotheses) {
  const auto v = reduced_vocab({"G", "A", "S", "P", "V"});
  const auto params = init_model(tiny_config(v), 22);
  for (int i = 0; i < 20; ++i) {
    const auto s = simple_spectrum(1.3 * i);
    const auto beams = beam_decode(params, s, 5, 10);
    ASSERT_FALSE(beams.empty());
    ASSERT_LE(beams.size(), 5u);
    for (std::size_t k = 1; k < beams.size(); ++k) EXPECT_GE(beams[k - 1].score, beams[k].score);
    for (const auto& h : beams) {
      double sum = 0;
      for (double lp : h.log_probs) sum += lp;
      EXPECT_NEAR(h.score, sum, 1e-9);
      EXPECT_EQ(h.tokens.size(), h.log_probs.size());
      for (std::size_t k = 0; k + 1 < h.tokens.size(); ++k) EXPECT_NE(h.tokens[k], Vocabulary::kEos);
      EXPECT_EQ(h.terminated, h.tokens.back() == Vocabulary::kEos);
    }
  }
}

TEST(BeamDecode, MatchesExhaustiveSearchOnShortHorizon) {
  const auto v = reduced_vocab({"G", "A"});
  const auto params = init_model(tiny_config(v), 23);
  const auto s = simple_spectrum();
  const int max_len = 3;
  // Enumerate every sequence over {eos, reflect, G, A} up to max_len.
  const DecodingContext ctx(params, s);
  struct Seq {
    std::vector<TokenId> tokens;
    double score;
  };
  std::vector<Seq> all;
  std::vector<Seq> frontier{{{}, 0.0}};
  for (int step = 0; step < max_len; ++step) {
    std::vector<Seq> next;
    for (const auto& f : frontier) {
      std::vector<TokenId> prefix{Vocabulary::kSos};
      prefix.insert(prefix.end(), f.tokens.begin(), f.tokens.end());
      const auto lp = ctx.next_log_probs(std::span(&prefix, 1));
      for (TokenId t = Vocabulary::kEos; t < static_cast<TokenId>(v.size()); ++t) {
        Seq ext{f.tokens, f.score + lp(0, t)};
        ext.tokens.push_back(t);
        if (t == Vocabulary::kEos || step + 1 == max_len) {
          all.push_back(ext);
        } else {
          next.push_back(ext);
        }
      }
    }
    frontier = std::move(next);
  }
  const auto best = std::max_element(all.begin(), all.end(), [](const Seq& a, const Seq& b) { return a.score < b.score; });
  const auto beams = beam_decode(params, s, 64, max_len);
  EXPECT_EQ(beams[0].tokens, best->tokens);
  EXPECT_NEAR(beams[0].score, best->score, 1e-5);
}

TEST(ForcedPrefix, AppendixSteeringCase) {
  const auto params = init_model(tiny_config(full()), 31);
  const auto prefix = ids("RL<reflect>");
  const auto out = forced_prefix_decode(params, simple_spectrum(), prefix, {});
  ASSERT_EQ(out.size(), 1u);
  ASSERT_GE(out[0].tokens.size(), prefix.size());
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), out[0].tokens.begin()));
  EXPECT_EQ(out[0].log_probs.size(), out[0].tokens.size());

  // The answer keeps R and drops the retracted L.
  auto raw = ids("RL<reflect>MNFYGFL$");
  EXPECT_EQ(decode_tokens(full(), postprocess_reflection(raw)), "RMNFYGFL");
}

TEST(ForcedPrefix, EmptyPrefixIsGreedy) {
  const auto params = init_model(tiny_config(full()), 32);
  const auto out = forced_prefix_decode(params, simple_spectrum(), {}, {});
  EXPECT_EQ(out.at(0), greedy_decode(params, simple_spectrum()));
}

TEST(ForcedPrefix, ContinuationMatchesTeacherForcedArgmax) {
  const auto params = init_model(tiny_config(full()), 33);
  const auto s = simple_spectrum();
  const auto prefix = ids("KD<reflect>");
  DecodeConfig c;
  c.max_len = 8;
  const auto out = forced_prefix_decode(params, s, prefix, c).at(0);
  std::vector<TokenId> input{Vocabulary::kSos};
  input.insert(input.end(), out.tokens.begin(), out.tokens.end());
  const auto fwd = forward(params, s, std::span<const TokenId>(input.data(), out.tokens.size()));
  const auto lsm = ad::log_softmax_rows<float>(fwd.logits);
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    EXPECT_NEAR(out.log_probs[i], lsm(static_cast<Eigen::Index>(i), out.tokens[i]), 1e-4);
    if (i < prefix.size()) continue;
    Eigen::Index best = 0;
    float top = -1e30f;
    for (Eigen::Index k = Vocabulary::kEos; k < lsm.cols(); ++k) {
      if (lsm(static_cast<Eigen::Index>(i), k) > top) {
        top = lsm(static_cast<Eigen::Index>(i), k);
        best = k;
      }
    }
    EXPECT_EQ(out.tokens[i], static_cast<TokenId>(best));
  }
}

TEST(ForcedPrefix, BeamKeepsPrefix) {
  const auto params = init_model(tiny_config(full()), 34);
  const auto prefix = ids("GA");
  DecodeConfig c;
  c.beam = 4;
  c.max_len = 8;
  const auto out = forced_prefix_decode(params, simple_spectrum(), prefix, c);
  ASSERT_FALSE(out.empty());
  for (const auto& h : out) EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), h.tokens.begin()));
}

TEST(ForcedPrefix, Errors) {
  const auto params = init_model(tiny_config(full()), 35);
  const std::vector<TokenId> with_eos{4, Vocabulary::kEos};
  EXPECT_THROW(forced_prefix_decode(params, simple_spectrum(), with_eos, {}), DataError);
  const std::vector<TokenId> with_sos{Vocabulary::kSos};
  EXPECT_THROW(forced_prefix_decode(params, simple_spectrum(), with_sos, {}), DataError);
  DecodeConfig c;
  c.max_len = 3;
  EXPECT_THROW(forced_prefix_decode(params, simple_spectrum(), ids("GAS"), c), UsageError);
  EXPECT_NO_THROW(forced_prefix_decode(params, simple_spectrum(), ids("GA"), c));
}

TEST(ValidatePrefix, NamesOffendingToken) {
  try {
    validate_prefix(full(), ids("GA$"));
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'$' at position 2"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(validate_prefix(full(), ids("G<reflect>A")));
}
