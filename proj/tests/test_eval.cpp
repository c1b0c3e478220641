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

#include <cmath>
#include <sstream>

#include "rnovo/error.hpp"
#include "rnovo/eval.hpp"
#include "test_support.hpp"

using namespace rnovo;
using rnovo::testing::reduced_vocab;
using rnovo::testing::tiny_config;

namespace {

const Vocabulary& full() {
  static const Vocabulary v = build_vocabulary();
  return v;
}

std::vector<TokenId> ids(const std::string& text) { return parse_tokens(full(), text); }

Peptide pep(const std::string& text) { return encode_peptide(full(), text); }

RawPrediction raw(const std::string& text) {
  RawPrediction p;
  p.tokens = ids(text);
  p.log_probs.assign(p.tokens.size(), std::log(0.5));
  p.terminated = !p.tokens.empty() && p.tokens.back() == Vocabulary::kEos;
  return p;
}

}  // namespace

TEST(AaPrecision, PositionalExamples) {
  auto c = aa_precision(ids("KYF"), ids("KDF"));
  EXPECT_EQ(c.matched, 2u);
  EXPECT_EQ(c.predicted, 3u);
  c = aa_precision(ids("KD"), ids("KDF"));
  EXPECT_EQ(c.matched, 2u);
  EXPECT_EQ(c.predicted, 2u);
  EXPECT_FALSE(peptide_match(ids("KD"), ids("KDF")));
  c = aa_precision(ids("KDFA"), ids("KDF"));
  EXPECT_EQ(c.matched, 3u);
  EXPECT_EQ(c.predicted, 4u);
  c = aa_precision({}, ids("KDF"));
  EXPECT_EQ(c.predicted, 0u);
}

TEST(PeptideMatch, TokenLevel) {
  EXPECT_TRUE(peptide_match(postprocess_reflection(ids("R<reflect>KYFHNELM+15.995NYVQEC+57.021QFDSETSL$")),
                            ids("KYFHNELM+15.995NYVQEC+57.021QFDSETSL")));
  EXPECT_FALSE(peptide_match(ids("KDL"), ids("KDI")));
  EXPECT_FALSE(peptide_match(ids("KDF"), ids("KDY")));
}

TEST(ReflectionEvents, Classification) {
  const auto label = ids("KDFA");
  auto e = reflection_events(ids("KD<reflect>DFA$"), label);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kSame);

  e = reflection_events(ids("KY<reflect>DFA$"), label);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kCorrected);
  EXPECT_EQ(e[0].answer_position, 1u);
  EXPECT_EQ(e[0].retracted, full().index("Y"));
  EXPECT_EQ(e[0].restored, full().index("D"));

  e = reflection_events(ids("KY<reflect>EFA$"), label);
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kChangedUncorrected);

  // Correct token retracted and replaced with a wrong one.
  e = reflection_events(ids("KD<reflect>EFA$"), label);
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kChangedUncorrected);

  e = reflection_events(ids("<reflect>KDFA$"), label);
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kUnpaired);
  e = reflection_events(ids("KDFA<reflect>$"), label);
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kUnpaired);
  EXPECT_EQ(std::string(to_string(ReflectOutcome::kCorrected)), "corrected");
}

TEST(ReflectionEvents, PositionBeyondLabel) {
  const auto e = reflection_events(ids("KDFAG<reflect>S$"), ids("KDFA"));
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].answer_position, 4u);
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kChangedUncorrected);
}

TEST(ReflectionEvents, StackSemanticsForConsecutiveReflects) {
  const auto e = reflection_events(ids("KYE<reflect><reflect>DF$"), ids("KDF"));
  ASSERT_EQ(e.size(), 2u);
  // The first reflect retracts E and is followed by another reflect.
  EXPECT_EQ(e[0].outcome, ReflectOutcome::kUnpaired);
  EXPECT_EQ(e[1].retracted, full().index("Y"));
  EXPECT_EQ(e[1].outcome, ReflectOutcome::kCorrected);
}

TEST(ReflectionUsage, Rates) {
  const std::vector<std::vector<TokenId>> raws{ids("K<reflect>RD"), ids("AG")};
  const std::vector<Peptide> labels{pep("RD"), pep("AG")};
  const auto u = reflection_usage(raws, labels);
  EXPECT_DOUBLE_EQ(u.use(), 0.5);
  EXPECT_EQ(u.events, 1u);
  EXPECT_EQ(u.corrected, 1u);
  EXPECT_DOUBLE_EQ(u.corrected_rate(), 1.0);
  EXPECT_DOUBLE_EQ(u.same_rate(), 0.0);

  const ReflectionUsage empty;
  EXPECT_EQ(empty.use(), 0.0);
  EXPECT_EQ(empty.corrected_rate(), 0.0);
  EXPECT_THROW(reflection_usage(raws, std::span<const Peptide>(labels.data(), 1)), UsageError);
}

TEST(EvalReport, Aggregation) {
  EvalReport r;
  r.add("a", raw("KDF$"), pep("KDF"));
  r.add("b", raw("KY<reflect>DF$"), pep("KDF"));
  r.add("c", raw("KYF$"), pep("KDF"));
  r.add("d", raw("$"), pep("KDF"));
  EXPECT_EQ(r.spectra, 4u);
  EXPECT_EQ(r.aa_matched, 3u + 3u + 2u);
  EXPECT_EQ(r.aa_predicted, 9u);
  EXPECT_EQ(r.peptide_matched, 2u);
  EXPECT_EQ(r.peptide_predicted, 3u);
  EXPECT_DOUBLE_EQ(r.aa_precision(), 8.0 / 9.0);
  EXPECT_DOUBLE_EQ(r.peptide_precision(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.peptide_recall(), 0.5);
  EXPECT_DOUBLE_EQ(r.usage.use(), 0.25);
  EXPECT_EQ(r.usage.corrected, 1u);
  ASSERT_EQ(r.details.size(), 4u);
  EXPECT_EQ(r.details[1].answer, ids("KDF"));
  EXPECT_NEAR(r.details[1].probabilities[0], 0.5, 1e-12);
}

TEST(EvalReport, Invariants) {
  Rng rng(4);
  EvalReport r;
  for (int i = 0; i < 300; ++i) {
    const auto label = rnovo::testing::random_peptide(full(), 1 + i % 8, rng);
    RawPrediction p;
    p.tokens = rnovo::testing::random_peptide(full(), static_cast<std::size_t>(i % 5), rng).tokens;
    if (i % 3 == 0) p.tokens = label.tokens;
    if (i % 7 == 0 && !p.tokens.empty()) p.tokens.insert(p.tokens.begin() + 1, Vocabulary::kReflect);
    p.tokens.push_back(Vocabulary::kEos);
    p.log_probs.assign(p.tokens.size(), -0.1);
    r.add(std::to_string(i), p, label);
  }
  EXPECT_LE(r.aa_matched, r.aa_predicted);
  EXPECT_LE(r.peptide_matched, r.peptide_predicted);
  EXPECT_LE(r.peptide_predicted, r.spectra);
  for (double x : {r.aa_precision(), r.peptide_precision(), r.peptide_recall(), r.usage.use(),
                   r.usage.corrected_rate(), r.usage.same_rate()}) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  EXPECT_EQ(r.usage.same + r.usage.corrected + r.usage.changed_uncorrected + r.usage.unpaired, r.usage.events);
}

TEST(EvalReport, AllExactGivesOnes) {
  EvalReport r;
  r.add("a", raw("GAS$"), pep("GAS"));
  r.add("b", raw("KD$"), pep("KD"));
  EXPECT_EQ(r.aa_precision(), 1.0);
  EXPECT_EQ(r.peptide_precision(), 1.0);
}

TEST(Evaluate, Errors) {
  const auto v = reduced_vocab({"G", "A"});
  const auto params = init_model(tiny_config(v), 1);
  EXPECT_THROW(evaluate(params, {}, {}, {}), DataError);
  Psm unlabeled;
  unlabeled.spectrum.peaks = {{100.0, 1.0}};
  unlabeled.spectrum.precursor_mass = 200;
  EXPECT_THROW(evaluate(params, std::span<const Psm>(&unlabeled, 1), {}, {}), DataError);
}

TEST(Evaluate, EmptySpectrumCountsAsEmptyPrediction) {
  const auto v = reduced_vocab({"G", "A"});
  const auto params = init_model(tiny_config(v), 1);
  Psm psm;
  psm.id = "x";
  psm.spectrum.peaks = {{10.0, 1.0}};
  psm.spectrum.precursor_mass = 200;
  psm.label = encode_peptide(v, "GA");
  const auto r = evaluate(params, std::span<const Psm>(&psm, 1), {}, {});
  EXPECT_EQ(r.spectra, 1u);
  EXPECT_EQ(r.peptide_predicted, 0u);
  EXPECT_TRUE(r.details[0].raw.empty());
}

TEST(Evaluate, MatchesManualDecoding) {
  const auto v = reduced_vocab({"G", "A", "S"});
  const auto params = init_model(tiny_config(v), 7);
  SynthConfig sc;
  sc.min_length = 3;
  sc.max_length = 5;
  const auto corpus = generate_corpus(v, sc, 20, 3);
  DecodeConfig dc;
  dc.max_len = 10;
  const auto r = evaluate(params, corpus.train, {}, dc);
  ASSERT_EQ(r.details.size(), corpus.train.size());
  for (std::size_t i = 0; i < corpus.train.size(); ++i) {
    const auto g = greedy_decode(params, preprocess_spectrum(corpus.train[i].spectrum), 10);
    EXPECT_EQ(r.details[i].raw, g.tokens);
    EXPECT_EQ(r.details[i].id, corpus.train[i].id);
  }
}

TEST(WriteReport, Format) {
  EvalReport r;
  r.add("a", raw("KY<reflect>DF$"), pep("KDF"));
  std::ostringstream out;
  write_report(out, r);
  const auto text = out.str();
  EXPECT_NE(text.find("aa_precision\t1.000000\n"), std::string::npos);
  EXPECT_NE(text.find("reflect_use\t1.000000\n"), std::string::npos);
  EXPECT_NE(text.find("reflect_corrected\t1.000000\n"), std::string::npos);
  EXPECT_EQ(text.rfind("spectra\t1\n", 0), 0u);

  std::ostringstream details;
  write_details(details, full(), r);
  EXPECT_EQ(details.str(),
            "id\traw\tanswer\tlabel\taa_matched\taa_predicted\tmatch\tprobabilities\n"
            "a\tKY<reflect>DF$\tKDF\tKDF\t3\t3\t1\t0.5000,0.5000,0.5000,0.5000,0.5000,0.5000\n");
}
