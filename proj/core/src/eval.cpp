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

#include "rnovo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "rnovo/error.hpp"

namespace rnovo {

AaCount aa_precision(std::span<const TokenId> pred, std::span<const TokenId> label) {
  AaCount c;
  c.predicted = pred.size();
  const auto n = std::min(pred.size(), label.size());
  for (std::size_t i = 0; i < n; ++i) c.matched += pred[i] == label[i] ? 1 : 0;
  return c;
}

bool peptide_match(std::span<const TokenId> pred, std::span<const TokenId> label) {
  return std::equal(pred.begin(), pred.end(), label.begin(), label.end());
}

const char* to_string(ReflectOutcome o) noexcept {
  switch (o) {
    case ReflectOutcome::kSame:
      return "same";
    case ReflectOutcome::kCorrected:
      return "corrected";
    case ReflectOutcome::kChangedUncorrected:
      return "changed-uncorrected";
    case ReflectOutcome::kUnpaired:
      break;
  }
  return "unpaired";
}

std::vector<ReflectEvent> reflection_events(std::span<const TokenId> raw, std::span<const TokenId> label) {
  std::vector<ReflectEvent> events;
  std::vector<TokenId> stack;
  for (std::size_t r = 0; r < raw.size(); ++r) {
    const auto id = raw[r];
    if (id >= Vocabulary::kFirstResidue) {
      stack.push_back(id);
      continue;
    }
    if (id != Vocabulary::kReflect) continue;

    ReflectEvent e;
    e.raw_position = r;
    if (!stack.empty()) {
      e.retracted = stack.back();
      stack.pop_back();
    }
    e.answer_position = stack.size();
    if (r + 1 < raw.size() && raw[r + 1] >= Vocabulary::kFirstResidue) e.restored = raw[r + 1];

    if (e.retracted < 0 || e.restored < 0) {
      e.outcome = ReflectOutcome::kUnpaired;
    } else if (e.restored == e.retracted) {
      e.outcome = ReflectOutcome::kSame;
    } else if (e.answer_position < label.size() && label[e.answer_position] == e.restored) {
      e.outcome = ReflectOutcome::kCorrected;
    } else {
      e.outcome = ReflectOutcome::kChangedUncorrected;
    }
    events.push_back(e);
  }
  return events;
}

namespace {

double ratio(std::size_t num, std::size_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double ReflectionUsage::use() const noexcept { return ratio(sequences_with_reflect, sequences); }
double ReflectionUsage::corrected_rate() const noexcept { return ratio(corrected, events); }
double ReflectionUsage::same_rate() const noexcept { return ratio(same, events); }
double ReflectionUsage::changed_uncorrected_rate() const noexcept { return ratio(changed_uncorrected, events); }

void ReflectionUsage::add(std::span<const TokenId> raw, std::span<const TokenId> label) {
  ++sequences;
  const auto events_here = reflection_events(raw, label);
  if (!events_here.empty()) ++sequences_with_reflect;
  for (const auto& e : events_here) {
    ++events;
    switch (e.outcome) {
      case ReflectOutcome::kSame:
        ++same;
        break;
      case ReflectOutcome::kCorrected:
        ++corrected;
        break;
      case ReflectOutcome::kChangedUncorrected:
        ++changed_uncorrected;
        break;
      case ReflectOutcome::kUnpaired:
        ++unpaired;
        break;
    }
  }
}

ReflectionUsage reflection_usage(std::span<const std::vector<TokenId>> raws, std::span<const Peptide> labels) {
  if (raws.size() != labels.size()) throw UsageError("prediction and label counts differ");
  ReflectionUsage u;
  for (std::size_t i = 0; i < raws.size(); ++i) u.add(raws[i], labels[i].tokens);
  return u;
}

double EvalReport::aa_precision() const noexcept { return ratio(aa_matched, aa_predicted); }
double EvalReport::peptide_precision() const noexcept { return ratio(peptide_matched, peptide_predicted); }
double EvalReport::peptide_recall() const noexcept { return ratio(peptide_matched, spectra); }

void EvalReport::add(std::string id, const RawPrediction& prediction, const Peptide& label) {
  DetailRow row;
  row.id = std::move(id);
  row.raw = prediction.tokens;
  row.answer = postprocess_reflection(prediction.tokens);
  row.label = label.tokens;
  for (auto lp : prediction.log_probs) row.probabilities.push_back(std::exp(lp));
  row.aa = rnovo::aa_precision(row.answer, row.label);
  row.match = peptide_match(row.answer, row.label);

  ++spectra;
  aa_matched += row.aa.matched;
  aa_predicted += row.aa.predicted;
  if (!row.answer.empty()) ++peptide_predicted;
  if (row.match) ++peptide_matched;
  usage.add(row.raw, row.label);
  details.push_back(std::move(row));
}

EvalReport evaluate(const ModelParameters<float>& params, std::span<const Psm> psms, const PreprocessConfig& preprocess,
                    const DecodeConfig& decode) {
  decode.validate();
  if (psms.empty()) throw DataError("no PSMs to evaluate");
  for (const auto& psm : psms) {
    if (!psm.label) throw DataError("PSM " + psm.id + " has no label");
  }
  EvalReport report;
  for (const auto& psm : psms) {
    RawPrediction top;
    std::optional<Spectrum> spectrum;
    try {
      spectrum = preprocess_spectrum(psm.spectrum, preprocess);
    } catch (const DataError&) {
      spectrum.reset();
    }
    if (spectrum) top = forced_prefix_decode(params, *spectrum, {}, decode).front();
    report.add(psm.id, top, *psm.label);
  }
  return report;
}

void write_report(std::ostream& out, const EvalReport& r) {
  char buf[64];
  auto fixed = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  out << "spectra\t" << r.spectra << '\n'
      << "aa_matched\t" << r.aa_matched << '\n'
      << "aa_predicted\t" << r.aa_predicted << '\n'
      << "aa_precision\t" << fixed(r.aa_precision()) << '\n'
      << "peptide_matched\t" << r.peptide_matched << '\n'
      << "peptide_predicted\t" << r.peptide_predicted << '\n'
      << "peptide_precision\t" << fixed(r.peptide_precision()) << '\n'
      << "peptide_recall\t" << fixed(r.peptide_recall()) << '\n'
      << "reflect_use\t" << fixed(r.usage.use()) << '\n'
      << "reflect_events\t" << r.usage.events << '\n'
      << "reflect_corrected\t" << fixed(r.usage.corrected_rate()) << '\n'
      << "reflect_same\t" << fixed(r.usage.same_rate()) << '\n'
      << "reflect_changed_uncorrected\t" << fixed(r.usage.changed_uncorrected_rate()) << '\n'
      << "reflect_unpaired\t" << r.usage.unpaired << '\n';
}

void write_details(std::ostream& out, const Vocabulary& vocab, const EvalReport& r) {
  out << "id\traw\tanswer\tlabel\taa_matched\taa_predicted\tmatch\tprobabilities\n";
  char buf[32];
  for (const auto& row : r.details) {
    out << row.id << '\t' << decode_tokens(vocab, row.raw) << '\t' << decode_tokens(vocab, row.answer) << '\t'
        << decode_tokens(vocab, row.label) << '\t' << row.aa.matched << '\t' << row.aa.predicted << '\t'
        << (row.match ? 1 : 0) << '\t';
    for (std::size_t i = 0; i < row.probabilities.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.4f", i ? "," : "", row.probabilities[i]);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace rnovo
