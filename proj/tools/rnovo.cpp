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

// rnovo: generate | augment | train | eval | predict | serve
// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime error.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <thread>

#include "rnovo/augment.hpp"
#include "rnovo/checkpoint.hpp"
#include "rnovo/config.hpp"
#include "rnovo/decode.hpp"
#include "rnovo/error.hpp"
#include "rnovo/eval.hpp"
#include "rnovo/mgf.hpp"
#include "rnovo/serve.hpp"
#include "rnovo/train.hpp"

namespace fs = std::filesystem;
using namespace rnovo;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

// Values shared by several subcommands. Optional fields override the config.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> strategy_mix;
  std::optional<int> injections;
  std::optional<int> beam;
  std::optional<int> max_len;
  std::optional<int> steps;
  std::optional<std::size_t> count;
  std::string mode;
  std::string from;
  std::string prefix;
  std::string emit_detail;
  std::string bind = "127.0.0.1:8080";
  std::string checkpoint;
  std::string mgf;
  std::string train_mgf;
  std::string val_mgf;
  std::string out;
  std::string metrics;
  std::string dataset;
  std::string id;
  std::size_t threads = 4;
};

RunConfig resolve(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.alpha) c.train.augment.alpha = *f.alpha;
  if (f.strategy_mix) c.train.augment.strategy_mix = *f.strategy_mix;
  if (f.injections) c.train.augment.max_injections = *f.injections;
  if (f.beam) c.decode.beam = *f.beam;
  if (f.max_len) c.decode.max_len = *f.max_len;
  if (f.steps) c.train.total_steps = *f.steps;
  if (f.count) c.corpus_size = *f.count;
  if (!f.mode.empty()) c.train.mode = parse_train_mode(f.mode);
  return c;
}

void log_config(const RunConfig& c) { std::cerr << "resolved config: " << to_json(c).dump() << '\n'; }

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

int cmd_generate(const Flags& f) {
  require(f.out, "--out");
  auto c = resolve(f);
  if (f.seed) c.corpus_seed = *f.seed;
  log_config(c);
  const auto vocab = build_vocabulary(c.vocab);
  const auto corpus = generate_corpus(vocab, c.synth, c.corpus_size, c.corpus_seed);
  fs::create_directories(f.out);
  write_mgf(fs::path(f.out) / "train.mgf", vocab, corpus.train);
  write_mgf(fs::path(f.out) / "test.mgf", vocab, corpus.test);
  std::cerr << "wrote " << corpus.train.size() << " train and " << corpus.test.size() << " test PSMs to " << f.out
            << '\n';
  return kOk;
}

int cmd_augment(const Flags& f) {
  require(f.mgf, "--mgf");
  auto c = resolve(f);
  log_config(c);
  const auto vocab = build_vocabulary(c.vocab);
  const auto psms = read_mgf(f.mgf, vocab);
  std::vector<Peptide> labels;
  for (const auto& psm : psms) {
    if (!psm.label) throw DataError("PSM " + psm.id + " has no label");
    labels.push_back(*psm.label);
  }
  auto rng = derive_stream(f.seed.value_or(c.train.augment_seed), {0});
  const auto targets = augment_batch(labels, c.train.augment, vocab, rng);

  std::ofstream file;
  if (!f.out.empty()) {
    file.open(f.out);
    if (!file) throw RuntimeError("cannot write " + f.out);
  }
  std::ostream& out = f.out.empty() ? std::cout : file;
  for (const auto& t : targets) out << format_augmented(vocab, t) << '\n';
  return kOk;
}

int cmd_train(const Flags& f) {
  require(f.train_mgf, "--train");
  require(f.out, "--out");
  auto c = resolve(f);
  if (f.seed) apply_seed(c.train, *f.seed);
  if (c.train.mode == TrainMode::kFinetune && f.from.empty()) {
    throw UsageError("--mode finetune requires --from <checkpoint>");
  }

  std::optional<Checkpoint> source;
  Vocabulary vocab = build_vocabulary(c.vocab);
  if (c.train.mode == TrainMode::kFinetune) {
    source = load_checkpoint(f.from);
    vocab = source->vocab;
    c.model = source->model.config;
  }
  c.model = bind_vocabulary(c.model, vocab);
  log_config(c);

  const auto train_psms = read_mgf(f.train_mgf, vocab);
  const auto train_set = prepare_examples(train_psms, c.preprocess);
  std::vector<LabeledSpectrum> val_set;
  if (!f.val_mgf.empty()) val_set = prepare_examples(read_mgf(f.val_mgf, vocab), c.preprocess);

  const fs::path out(f.out);
  const fs::path metrics_path = f.metrics.empty() ? fs::path(out.string() + ".metrics.tsv") : fs::path(f.metrics);
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw RuntimeError("cannot write " + metrics_path.string());

  const auto result = train(vocab, c.model, c.train, train_set, val_set, source ? &*source : nullptr, &metrics);
  save_checkpoint(result.final_checkpoint, out);
  if (result.best_checkpoint) {
    auto best = out;
    best.replace_extension(".best" + out.extension().string());
    save_checkpoint(*result.best_checkpoint, best);
  }
  std::cerr << "final train loss " << result.final_train_loss;
  if (result.final_val_loss) std::cerr << ", validation loss " << *result.final_val_loss;
  std::cerr << "\nwrote " << out.string() << '\n';
  return kOk;
}

int cmd_eval(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  require(f.mgf, "--mgf");
  auto c = resolve(f);
  log_config(c);
  const auto ckpt = load_checkpoint(f.checkpoint);
  auto psms = read_mgf(f.mgf, ckpt.vocab);
  if (c.eval_limit > 0 && psms.size() > c.eval_limit) psms.resize(c.eval_limit);
  const auto report = evaluate(ckpt.model, psms, c.preprocess, c.decode);
  write_report(std::cout, report);
  if (!f.emit_detail.empty()) {
    std::ofstream detail(f.emit_detail);
    if (!detail) throw RuntimeError("cannot write " + f.emit_detail);
    write_details(detail, ckpt.vocab, report);
  }
  return kOk;
}

int cmd_predict(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  require(f.mgf, "--mgf");
  auto c = resolve(f);
  const auto ckpt = load_checkpoint(f.checkpoint);
  const auto& vocab = ckpt.vocab;
  const auto prefix = parse_tokens(vocab, f.prefix);
  validate_prefix(vocab, prefix);
  const auto psms = read_mgf(f.mgf, vocab);
  bool found = f.id.empty();
  for (const auto& psm : psms) {
    if (!f.id.empty() && psm.id != f.id) continue;
    found = true;
    const auto spectrum = preprocess_spectrum(psm.spectrum, c.preprocess);
    const auto top = forced_prefix_decode(ckpt.model, spectrum, prefix, c.decode).front();
    std::cout << "ID\t" << psm.id << '\n'
              << "Raw\t" << decode_tokens(vocab, top.tokens) << '\n'
              << "Post-processed\t" << decode_tokens(vocab, postprocess_reflection(top.tokens)) << '\n';
    if (psm.label) std::cout << "Label\t" << decode_tokens(vocab, *psm.label) << '\n';
    std::cout << '\n';
  }
  if (!found) throw DataError("no PSM with id " + f.id);
  return kOk;
}

int cmd_serve(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  auto c = resolve(f);
  auto options = parse_bind(f.bind);
  options.threads = std::max<std::size_t>(1, f.threads);
  auto ckpt = load_checkpoint(f.checkpoint);
  std::vector<Psm> dataset;
  if (!f.dataset.empty()) dataset = read_mgf(f.dataset, ckpt.vocab);

  // Route SIGTERM/SIGINT to a watcher thread instead of an async handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const SteerService service(std::move(ckpt), std::move(dataset), c.preprocess, c.decode);
  Server server(service, options);
  const int port = server.bind();
  std::cerr << "listening on " << options.host << ":" << port << '\n';

  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    std::cerr << "signal " << sig << ", shutting down\n";
    server.stop();
  });
  server.listen();
  // listen() can also return on its own; wake the watcher so it can exit.
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"De novo peptide sequencing with reflection tokens"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Flags f;

  auto common = [&](CLI::App* sub) { sub->add_option("--config", f.config, "JSON run configuration"); };
  auto seed = [&](CLI::App* sub) { sub->add_option("--seed", f.seed, "base seed (default: from config)"); };
  auto augment_flags = [&](CLI::App* sub) {
    sub->add_option("--alpha", f.alpha, "injection ratio in [0,1] (default: from config)");
    sub->add_option("--strategy-mix", f.strategy_mix, "RPLE probability given injection (default: from config)");
    sub->add_option("--injections", f.injections, "max injected errors per sequence (default: from config)");
  };
  auto decode_flags = [&](CLI::App* sub) {
    sub->add_option("--beam", f.beam, "beam width; 1 is greedy (default: from config)");
    sub->add_option("--max-len", f.max_len, "max raw tokens including eos (default: from config)");
  };

  auto* generate = app.add_subcommand("generate", "write a synthetic train/test MGF corpus");
  common(generate);
  seed(generate);
  generate->add_option("--count", f.count, "number of PSMs (default: from config)");
  generate->add_option("--out", f.out, "output directory")->required();

  auto* augment = app.add_subcommand("augment", "print augmented targets and loss masks");
  common(augment);
  seed(augment);
  augment_flags(augment);
  augment->add_option("--mgf", f.mgf, "labeled MGF input")->required();
  augment->add_option("--out", f.out, "output file (default: stdout)");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  common(train_cmd);
  seed(train_cmd);
  augment_flags(train_cmd);
  train_cmd->add_option("--train", f.train_mgf, "training MGF")->required();
  train_cmd->add_option("--val", f.val_mgf, "validation MGF");
  train_cmd->add_option("--out", f.out, "checkpoint path")->required();
  train_cmd->add_option("--metrics", f.metrics, "metrics log (default: <out>.metrics.tsv)");
  train_cmd->add_option("--steps", f.steps, "optimizer steps (default: from config)");
  train_cmd->add_option("--mode", f.mode, "pretrain or finetune (default: from config)");
  train_cmd->add_option("--from", f.from, "source checkpoint for finetune mode");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on labeled spectra");
  common(eval);
  decode_flags(eval);
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint path")->required();
  eval->add_option("--mgf", f.mgf, "labeled MGF")->required();
  eval->add_option("--emit-detail", f.emit_detail, "write per-PSM detail rows here");

  auto* predict = app.add_subcommand("predict", "decode spectra and print raw and post-processed output");
  common(predict);
  decode_flags(predict);
  predict->add_option("--checkpoint", f.checkpoint, "checkpoint path")->required();
  predict->add_option("--mgf", f.mgf, "MGF input")->required();
  predict->add_option("--id", f.id, "only this PSM id");
  predict->add_option("--prefix", f.prefix, "forced prefix, e.g. \"RL<reflect>\"");

  auto* serve = app.add_subcommand("serve", "run the JSON/HTTP steering service");
  common(serve);
  decode_flags(serve);
  serve->add_option("--checkpoint", f.checkpoint, "checkpoint path")->required();
  serve->add_option("--dataset", f.dataset, "MGF exposed under /dataset");
  serve->add_option("--bind", f.bind, "listen address host:port");
  serve->add_option("--threads", f.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) return cmd_generate(f);
    if (*augment) return cmd_augment(f);
    if (*train_cmd) return cmd_train(f);
    if (*eval) return cmd_eval(f);
    if (*predict) return cmd_predict(f);
    if (*serve) return cmd_serve(f);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
