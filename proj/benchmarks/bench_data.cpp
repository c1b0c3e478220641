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

#include <benchmark/benchmark.h>

#include <sstream>

#include "rnovo/augment.hpp"
#include "rnovo/mgf.hpp"
#include "rnovo/spectrum.hpp"

using namespace rnovo;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = build_vocabulary();
  return v;
}

void BM_Synthesize(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(generate_corpus(vocab(), SynthConfig{}, 100, 7));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_Synthesize)->Unit(benchmark::kMillisecond);

void BM_Preprocess(benchmark::State& state) {
  SynthConfig sc;
  sc.noise_peaks_mean = static_cast<double>(state.range(0));
  const auto psm = generate_corpus(vocab(), sc, 10, 7).train[0];
  for (auto _ : state) benchmark::DoNotOptimize(preprocess_spectrum(psm.spectrum));
}
BENCHMARK(BM_Preprocess)->Arg(10)->Arg(500);

void BM_MgfParse(benchmark::State& state) {
  const auto corpus = generate_corpus(vocab(), SynthConfig{}, 200, 7);
  std::ostringstream out;
  emit_mgf(out, vocab(), corpus.train);
  const auto text = out.str();
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(parse_mgf(in, vocab()));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_MgfParse)->Unit(benchmark::kMillisecond);

void BM_AugmentBatch(benchmark::State& state) {
  const auto corpus = generate_corpus(vocab(), SynthConfig{}, 72, 7);
  std::vector<Peptide> labels;
  for (const auto& p : corpus.train) labels.push_back(*p.label);
  AugmentConfig ac;
  ac.alpha = 0.9;
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(augment_batch(labels, ac, vocab(), rng));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(labels.size()));
}
BENCHMARK(BM_AugmentBatch);

}  // namespace

BENCHMARK_MAIN();
