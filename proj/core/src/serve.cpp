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

#include "rnovo/serve.hpp"

#include <httplib.h>

#include <cmath>

#include "rnovo/error.hpp"

namespace rnovo {

using Json = nlohmann::ordered_json;

namespace {

struct HttpError {
  int status;
  std::string at;
  std::string message;
};

Response error_response(const HttpError& e) { return {e.status, Json{{"error", e.message}, {"at", e.at}}}; }

double number(const Json& j, const std::string& at) {
  if (!j.is_number()) throw HttpError{400, at, "expected a number"};
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw HttpError{400, at, "expected a finite number"};
  return v;
}

Spectrum parse_spectrum(const Json& j) {
  if (!j.is_object()) throw HttpError{400, "spectrum", "spectrum must be an object"};
  Spectrum s;
  if (!j.contains("peaks") || !j.at("peaks").is_array()) {
    throw HttpError{400, "spectrum.peaks", "peaks must be a list of [mz, intensity] pairs"};
  }
  const auto& peaks = j.at("peaks");
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    const auto at = "spectrum.peaks[" + std::to_string(i) + "]";
    const auto& p = peaks[i];
    Peak pk;
    if (p.is_array() && p.size() == 2) {
      pk = {number(p[0], at), number(p[1], at)};
    } else if (p.is_object() && p.contains("mz") && p.contains("intensity")) {
      pk = {number(p.at("mz"), at), number(p.at("intensity"), at)};
    } else {
      throw HttpError{400, at, "peak must be [mz, intensity]"};
    }
    if (pk.intensity < 0.0) throw HttpError{400, at, "intensity must be >= 0"};
    s.peaks.push_back(pk);
  }
  if (!j.contains("charge") || !j.at("charge").is_number_integer() || j.at("charge").get<int>() < 1) {
    throw HttpError{400, "spectrum.charge", "charge must be a positive integer"};
  }
  s.precursor_charge = j.at("charge").get<int>();
  if (!j.contains("precursor_mass")) throw HttpError{400, "spectrum.precursor_mass", "precursor_mass is required"};
  s.precursor_mass = number(j.at("precursor_mass"), "spectrum.precursor_mass");
  if (!(s.precursor_mass > 0.0)) throw HttpError{400, "spectrum.precursor_mass", "precursor_mass must be > 0"};
  return s;
}

std::vector<TokenId> parse_prefix(const Vocabulary& vocab, const Json& j) {
  std::vector<TokenId> prefix;
  if (j.is_string()) {
    try {
      prefix = parse_tokens(vocab, j.get<std::string>());
    } catch (const DataError& e) {
      throw HttpError{400, "prefix", e.what()};
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_string()) throw HttpError{400, "prefix", "prefix tokens must be strings"};
      const auto symbol = j[i].get<std::string>();
      const auto id = vocab.find(symbol);
      if (!id) {
        throw HttpError{400, "prefix", "invalid prefix token '" + symbol + "' at position " + std::to_string(i)};
      }
      prefix.push_back(*id);
    }
  } else if (!j.is_null()) {
    throw HttpError{400, "prefix", "prefix must be a string or a list of token strings"};
  }
  try {
    validate_prefix(vocab, prefix);
  } catch (const DataError& e) {
    throw HttpError{400, "prefix", e.what()};
  }
  return prefix;
}

Json vocabulary_json(const Vocabulary& vocab) {
  Json out = Json::array();
  for (TokenId id = 0; static_cast<std::size_t>(id) < vocab.size(); ++id) {
    Json entry{{"id", id}, {"symbol", vocab.symbol(id)}};
    entry["mass"] = vocab.is_residue(id) ? Json(vocab.residue_mass(id)) : Json(nullptr);
    out.push_back(std::move(entry));
  }
  return out;
}

Json tokens_json(const Vocabulary& vocab, std::span<const TokenId> ids) {
  Json out = Json::array();
  for (auto id : ids) out.push_back(vocab.symbol(id));
  return out;
}

}  // namespace

SteerService::SteerService(Checkpoint checkpoint, std::vector<Psm> dataset, PreprocessConfig preprocess,
                           DecodeConfig decode)
    : checkpoint_(std::move(checkpoint)),
      digest_(checkpoint_digest(checkpoint_)),
      dataset_(std::move(dataset)),
      preprocess_(preprocess),
      decode_(decode) {
  decode_.validate();
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    if (!by_id_.emplace(dataset_[i].id, i).second) throw DataError("duplicate PSM id " + dataset_[i].id);
  }
}

Response SteerService::info() const {
  return {200, Json{{"service", "rnovo"},
                    {"version", checkpoint_.version},
                    {"digest", digest_},
                    {"model", to_json(checkpoint_.model.config)},
                    {"vocabulary", vocabulary_json(checkpoint_.vocab)},
                    {"metadata", checkpoint_.metadata},
                    {"decode", {{"beam", decode_.beam}, {"max_len", decode_.max_len}}},
                    {"dataset_size", dataset_.size()}}};
}

Response SteerService::dataset_list() const {
  Json items = Json::array();
  for (const auto& psm : dataset_) {
    items.push_back({{"id", psm.id},
                     {"has_label", psm.label.has_value()},
                     {"charge", psm.spectrum.precursor_charge},
                     {"precursor_mass", psm.spectrum.precursor_mass},
                     {"peak_count", psm.spectrum.peaks.size()}});
  }
  return {200, Json{{"psms", std::move(items)}}};
}

Response SteerService::dataset_get(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return error_response({404, "id", "unknown PSM id '" + id + "'"});
  const auto& psm = dataset_[it->second];
  Json peaks = Json::array();
  for (const auto& p : psm.spectrum.peaks) peaks.push_back({p.mz, p.intensity});
  Json out{{"id", psm.id},
           {"charge", psm.spectrum.precursor_charge},
           {"precursor_mass", psm.spectrum.precursor_mass},
           {"peaks", std::move(peaks)}};
  out["label"] = psm.label ? Json(decode_tokens(checkpoint_.vocab, *psm.label)) : Json(nullptr);
  return {200, std::move(out)};
}

Response SteerService::predict(const std::string& body) const { return run(body, false); }
Response SteerService::steer(const std::string& body) const { return run(body, true); }

Response SteerService::run(const std::string& body, bool with_prefix) const {
  try {
    Json req;
    try {
      req = Json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw HttpError{400, "body", std::string("malformed JSON: ") + e.what()};
    }
    if (!req.is_object()) throw HttpError{400, "body", "request must be a JSON object"};

    const auto& vocab = checkpoint_.vocab;
    Spectrum raw;
    const Psm* psm = nullptr;
    if (req.contains("psm_id")) {
      if (!req.at("psm_id").is_string()) throw HttpError{400, "psm_id", "psm_id must be a string"};
      const auto id = req.at("psm_id").get<std::string>();
      const auto it = by_id_.find(id);
      if (it == by_id_.end()) throw HttpError{404, "psm_id", "unknown PSM id '" + id + "'"};
      psm = &dataset_[it->second];
      raw = psm->spectrum;
    } else if (req.contains("spectrum")) {
      raw = parse_spectrum(req.at("spectrum"));
    } else {
      throw HttpError{400, "spectrum", "request needs a spectrum or a psm_id"};
    }

    DecodeConfig decode = decode_;
    if (req.contains("beam")) {
      const auto& b = req.at("beam");
      if (!b.is_number_integer() || b.get<int>() < 1) throw HttpError{400, "beam", "beam must be an integer >= 1"};
      decode.beam = b.get<int>();
    }
    if (req.contains("max_len")) {
      const auto& m = req.at("max_len");
      if (!m.is_number_integer() || m.get<int>() < 0 ||
          m.get<int>() > checkpoint_.model.config.max_decode_len) {
        throw HttpError{400, "max_len", "max_len must be an integer in [0, max_decode_len]"};
      }
      decode.max_len = m.get<int>();
    }

    std::vector<TokenId> prefix;
    if (with_prefix && req.contains("prefix")) prefix = parse_prefix(vocab, req.at("prefix"));

    Spectrum spectrum;
    try {
      spectrum = preprocess_spectrum(raw, preprocess_);
    } catch (const DataError& e) {
      throw HttpError{422, psm ? "psm_id" : "spectrum.peaks", e.what()};
    }

    std::vector<RawPrediction> hyps;
    try {
      hyps = forced_prefix_decode(checkpoint_.model, spectrum, prefix, decode);
    } catch (const UsageError& e) {
      throw HttpError{400, "prefix", e.what()};
    }
    const auto& top = hyps.front();
    const auto answer = postprocess_reflection(top.tokens);

    Json raw_tokens = Json::array();
    for (std::size_t i = 0; i < top.tokens.size(); ++i) {
      raw_tokens.push_back({{"token", vocab.symbol(top.tokens[i])}, {"probability", std::exp(top.log_probs[i])}});
    }
    Json out{{"raw", std::move(raw_tokens)},
             {"raw_text", decode_tokens(vocab, top.tokens)},
             {"answer", tokens_json(vocab, answer)},
             {"answer_text", decode_tokens(vocab, answer)},
             {"prefix_length", prefix.size()},
             {"terminated", top.terminated},
             {"score", top.score},
             {"beam", decode.beam}};

    Json mass{{"precursor", raw.precursor_mass}};
    if (answer.empty()) {
      mass["predicted"] = nullptr;
      mass["delta"] = nullptr;
    } else {
      const double predicted = peptide_neutral_mass(vocab, Peptide{answer});
      mass["predicted"] = predicted;
      mass["delta"] = predicted - raw.precursor_mass;
    }
    out["mass"] = std::move(mass);

    if (psm && psm->label) {
      const auto& label = psm->label->tokens;
      Json matches = Json::array();
      for (std::size_t i = 0; i < answer.size(); ++i) matches.push_back(i < label.size() && answer[i] == label[i]);
      out["label"] = decode_tokens(vocab, *psm->label);
      out["matches"] = std::move(matches);
      out["exact"] = answer == label;
    }
    if (hyps.size() > 1) {
      Json alternatives = Json::array();
      for (std::size_t i = 1; i < hyps.size(); ++i) {
        alternatives.push_back({{"raw_text", decode_tokens(vocab, hyps[i].tokens)},
                                {"answer_text", decode_tokens(vocab, postprocess_reflection(hyps[i].tokens))},
                                {"score", hyps[i].score}});
      }
      out["alternatives"] = std::move(alternatives);
    }
    return {200, std::move(out)};
  } catch (const HttpError& e) {
    return error_response(e);
  } catch (const DataError& e) {
    return error_response({422, "spectrum", e.what()});
  }
}

ServerOptions parse_bind(const std::string& text) {
  ServerOptions o;
  const auto colon = text.rfind(':');
  std::string port = text;
  if (colon != std::string::npos) {
    if (colon > 0) o.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    o.port = std::stoi(port, &used);
    if (used != port.size() || o.port < 0 || o.port > 65535) throw std::invalid_argument(port);
  } catch (const std::exception&) {
    throw UsageError("bind address must look like host:port, got '" + text + "'");
  }
  return o;
}

struct Server::Impl {
  const SteerService& service;
  ServerOptions options;
  httplib::Server http;

  Impl(const SteerService& s, ServerOptions o) : service(s), options(std::move(o)) {}

  static void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }
};

Server::Server(const SteerService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& http = impl_->http;
  const auto threads = impl_->options.threads;
  const auto queued = impl_->options.max_queued;
  http.new_task_queue = [threads, queued] { return new httplib::ThreadPool(threads, queued); };
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Headers", "Content-Type"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  http.set_payload_max_length(16u << 20);

  const SteerService* svc = &service;
  http.Get("/info", [svc](const httplib::Request&, httplib::Response& res) { Impl::reply(res, svc->info()); });
  http.Get("/dataset",
           [svc](const httplib::Request&, httplib::Response& res) { Impl::reply(res, svc->dataset_list()); });
  http.Get(R"(/dataset/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
    Impl::reply(res, svc->dataset_get(req.matches[1].str()));
  });
  http.Post("/predict",
            [svc](const httplib::Request& req, httplib::Response& res) { Impl::reply(res, svc->predict(req.body)); });
  http.Post("/steer",
            [svc](const httplib::Request& req, httplib::Response& res) { Impl::reply(res, svc->steer(req.body)); });
  http.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    Impl::reply(res, {res.status, Json{{"error", "no route for " + req.method + " " + req.path}, {"at", "path"}}});
  });
  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    Impl::reply(res, {500, Json{{"error", what}, {"at", "server"}}});
  });
}

Server::~Server() { stop(); }

int Server::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    const int port = impl_->http.bind_to_any_port(o.host);
    if (port < 0) throw RuntimeError("cannot bind " + o.host);
    o.port = port;
  } else if (!impl_->http.bind_to_port(o.host, o.port)) {
    throw RuntimeError("cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return o.port;
}

void Server::listen() {
  if (!impl_->http.listen_after_bind()) throw RuntimeError("server stopped with an error");
}

void Server::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

bool Server::running() const { return impl_->http.is_running(); }

}  // namespace rnovo
