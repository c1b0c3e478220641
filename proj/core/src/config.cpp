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

#include "rnovo/config.hpp"

#include <fstream>
#include <set>

#include "rnovo/checkpoint.hpp"
#include "rnovo/error.hpp"

namespace rnovo {

using Json = nlohmann::ordered_json;

namespace {

// Reads known keys from one object and rejects whatever is left over.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError("config " + label() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError("config key " + qualified(key) + " has the wrong type");
    }
  }

  const Json* section(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) throw UsageError("unknown config key " + qualified(item.key()));
    }
  }

 private:
  std::string label() const { return path_.empty() ? "root" : "section " + path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig run_config_from_json(const Json& j, RunConfig c) {
  Reader root(j, "");
  if (const auto* s = root.section("vocab")) {
    Reader r(*s, "vocab");
    if (const auto* a = r.section("alphabet")) {
      if (a->is_string()) {
        c.vocab.alphabet = a->get<std::string>();
      } else if (a->is_array()) {
        try {
          c.vocab.alphabet = a->get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception&) {
          throw UsageError("config key vocab.alphabet must list strings");
        }
      } else {
        throw UsageError("config key vocab.alphabet must be \"full20\" or a list of symbols");
      }
    }
    r.get("modifications", c.vocab.modifications);
    r.finish();
  }
  if (const auto* s = root.section("synth")) {
    Reader r(*s, "synth");
    r.get("count", c.corpus_size);
    r.get("seed", c.corpus_seed);
    r.get("min_length", c.synth.min_length);
    r.get("max_length", c.synth.max_length);
    r.get("noise_peaks_mean", c.synth.noise_peaks_mean);
    r.get("dropout", c.synth.dropout);
    r.get("intensity_min", c.synth.intensity_min);
    r.get("intensity_max", c.synth.intensity_max);
    r.get("mz_jitter", c.synth.mz_jitter);
    r.get("fixed_charge", c.synth.fixed_charge);
    r.finish();
  }
  if (const auto* s = root.section("preprocess")) {
    Reader r(*s, "preprocess");
    r.get("mz_min", c.preprocess.mz_min);
    r.get("mz_max", c.preprocess.mz_max);
    r.get("top_k", c.preprocess.top_k);
    r.finish();
  }
  if (const auto* s = root.section("model")) {
    Reader r(*s, "model");
    r.get("d_model", c.model.d_model);
    r.get("layers", c.model.layers);
    r.get("heads", c.model.heads);
    r.get("ffn", c.model.ffn);
    r.get("max_decode_len", c.model.max_decode_len);
    r.get("mz_wavelength_min", c.model.mz_wavelength_min);
    r.get("mz_wavelength_max", c.model.mz_wavelength_max);
    r.get("max_charge", c.model.max_charge);
    r.get("prefix_mass", c.model.prefix_mass);
    r.finish();
  }
  if (const auto* s = root.section("train")) {
    Reader r(*s, "train");
    auto& t = c.train;
    r.get("batch_size", t.batch_size);
    r.get("epochs", t.epochs);
    r.get("total_steps", t.total_steps);
    r.get("learning_rate", t.learning_rate);
    r.get("warmup_steps", t.warmup_steps);
    r.get("weight_decay", t.weight_decay);
    r.get("beta1", t.beta1);
    r.get("beta2", t.beta2);
    r.get("epsilon", t.epsilon);
    r.get("clip_norm", t.clip_norm);
    r.get("init_seed", t.init_seed);
    r.get("data_seed", t.data_seed);
    r.get("augment_seed", t.augment_seed);
    r.get("validation_interval", t.validation_interval);
    std::string mode = to_string(t.mode);
    r.get("mode", mode);
    t.mode = parse_train_mode(mode);
    r.finish();
  }
  if (const auto* s = root.section("augment")) {
    Reader r(*s, "augment");
    r.get("alpha", c.train.augment.alpha);
    r.get("strategy_mix", c.train.augment.strategy_mix);
    r.get("max_injections", c.train.augment.max_injections);
    r.finish();
  }
  if (const auto* s = root.section("decode")) {
    Reader r(*s, "decode");
    r.get("beam", c.decode.beam);
    r.get("max_len", c.decode.max_len);
    r.finish();
  }
  if (const auto* s = root.section("eval")) {
    Reader r(*s, "eval");
    r.get("limit", c.eval_limit);
    r.finish();
  }
  root.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

Json to_json(const RunConfig& c) {
  Json alphabet = std::holds_alternative<std::string>(c.vocab.alphabet)
                      ? Json(std::get<std::string>(c.vocab.alphabet))
                      : Json(std::get<std::vector<std::string>>(c.vocab.alphabet));
  auto model = to_json(c.model);
  model.erase("vocab_size");
  model.erase("token_masses");
  const auto& t = c.train;
  return Json{
      {"vocab", {{"alphabet", std::move(alphabet)}, {"modifications", c.vocab.modifications}}},
      {"synth",
       {{"count", c.corpus_size},
        {"seed", c.corpus_seed},
        {"min_length", c.synth.min_length},
        {"max_length", c.synth.max_length},
        {"noise_peaks_mean", c.synth.noise_peaks_mean},
        {"dropout", c.synth.dropout},
        {"intensity_min", c.synth.intensity_min},
        {"intensity_max", c.synth.intensity_max},
        {"mz_jitter", c.synth.mz_jitter},
        {"fixed_charge", c.synth.fixed_charge}}},
      {"preprocess", {{"mz_min", c.preprocess.mz_min}, {"mz_max", c.preprocess.mz_max}, {"top_k", c.preprocess.top_k}}},
      {"model", std::move(model)},
      {"train",
       {{"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"total_steps", t.total_steps},
        {"learning_rate", t.learning_rate},
        {"warmup_steps", t.warmup_steps},
        {"weight_decay", t.weight_decay},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon},
        {"clip_norm", t.clip_norm},
        {"init_seed", t.init_seed},
        {"data_seed", t.data_seed},
        {"augment_seed", t.augment_seed},
        {"validation_interval", t.validation_interval},
        {"mode", to_string(t.mode)}}},
      {"augment",
       {{"alpha", t.augment.alpha},
        {"strategy_mix", t.augment.strategy_mix},
        {"max_injections", t.augment.max_injections}}},
      {"decode", {{"beam", c.decode.beam}, {"max_len", c.decode.max_len}}},
      {"eval", {{"limit", c.eval_limit}}}};
}

void apply_seed(TrainConfig& config, std::uint64_t seed) {
  config.init_seed = seed;
  config.data_seed = seed + 1;
  config.augment_seed = seed + 2;
}

}  // namespace rnovo
