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

#include "rnovo/augment.hpp"
#include "rnovo/model.hpp"
#include "rnovo/spectrum.hpp"

using namespace rnovo;

namespace {

struct Setup {
  Vocabulary vocab = build_vocabulary(VocabConfig{std::vector<std::string>{"G", "A", "S", "P", "V", "T", "L", "D", "E", "K"}, {}});
  ModelParameters<float> params;
  std::vector<Spectrum> spectra;
  std::vector<TargetTensors> targets;

  explicit Setup(int d_model, std::size_t batch) {
    ModelConfig c;
    c.d_model = d_model;
    c.layers = 2;
    c.heads = 4;
    c.ffn = 2 * d_model;
    c.max_decode_len = 40;
    params = init_model(bind_vocabulary(c, vocab), 1);
    SynthConfig sc;
    sc.min_length = 6;
    sc.max_length = 12;
    const auto corpus = generate_corpus(vocab, sc, batch * 10, 3);
    std::vector<Peptide> labels;
    for (std::size_t i = 0; i < batch; ++i) {
      spectra.push_back(preprocess_spectrum(corpus.train[i].spectrum));
      labels.push_back(*corpus.train[i].label);
    }
    AugmentConfig ac;
    ac.alpha = 0.9;
    Rng rng(5);
    for (const auto& t : augment_batch(labels, ac, vocab, rng)) targets.push_back(finalize_target(t));
  }

  std::vector<TrainingExample> batch() const {
    std::vector<TrainingExample> b;
    for (std::size_t i = 0; i < spectra.size(); ++i) b.push_back({&spectra[i], &targets[i]});
    return b;
  }
};

void BM_LossAndGradients(benchmark::State& state) {
  const Setup s(static_cast<int>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto batch = s.batch();
  for (auto _ : state) {
    auto r = loss_and_gradients(s.params, std::span<const TrainingExample>(batch));
    benchmark::DoNotOptimize(r.loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_LossAndGradients)->Args({64, 8})->Args({64, 64})->Args({128, 64})->Unit(benchmark::kMillisecond);

void BM_BatchLoss(benchmark::State& state) {
  const Setup s(64, static_cast<std::size_t>(state.range(0)));
  const auto batch = s.batch();
  for (auto _ : state) benchmark::DoNotOptimize(batch_loss(s.params, std::span<const TrainingExample>(batch)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchLoss)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Encode(benchmark::State& state) {
  const Setup s(64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(encode(s.params, s.spectra[0]));
}
BENCHMARK(BM_Encode)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
