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

#include "rnovo/decode.hpp"
#include "rnovo/spectrum.hpp"

using namespace rnovo;

namespace {

struct Setup {
  Vocabulary vocab = build_vocabulary(VocabConfig{std::vector<std::string>{"G", "A", "S", "P", "V", "T", "L", "D", "E", "K"}, {}});
  ModelParameters<float> params;
  Spectrum spectrum;

  Setup() {
    ModelConfig c;
    c.d_model = 64;
    c.layers = 2;
    c.heads = 4;
    c.ffn = 128;
    c.max_decode_len = 40;
    params = init_model(bind_vocabulary(c, vocab), 1);
    SynthConfig sc;
    sc.min_length = 6;
    sc.max_length = 12;
    spectrum = preprocess_spectrum(generate_corpus(vocab, sc, 10, 3).train[0].spectrum);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

// Untrained weights rarely pick eos, so each decode runs to max_len.
void BM_Greedy(benchmark::State& state) {
  const auto& s = setup();
  const int max_len = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(greedy_decode(s.params, s.spectrum, max_len));
}
BENCHMARK(BM_Greedy)->Arg(13)->Arg(40)->Unit(benchmark::kMicrosecond);

void BM_Beam(benchmark::State& state) {
  const auto& s = setup();
  const int beam = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(beam_decode(s.params, s.spectrum, beam, 13));
}
BENCHMARK(BM_Beam)->Arg(1)->Arg(5)->Arg(10)->Unit(benchmark::kMicrosecond);

void BM_Postprocess(benchmark::State& state) {
  std::vector<TokenId> raw;
  for (int i = 0; i < 40; ++i) raw.push_back(i % 5 == 4 ? Vocabulary::kReflect : 4 + i % 7);
  for (auto _ : state) benchmark::DoNotOptimize(postprocess_reflection(raw));
}
BENCHMARK(BM_Postprocess);

}  // namespace

BENCHMARK_MAIN();
