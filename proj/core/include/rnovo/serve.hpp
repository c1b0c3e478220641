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

#pragma once

// JSON-over-HTTP inference and steering service.
//
//   GET  /info           model config, vocabulary, checkpoint version and digest
//   GET  /dataset        [{id, has_label, charge, precursor_mass, peak_count}]
//   GET  /dataset/{id}   {id, label?, charge, precursor_mass, peaks: [[mz, intensity]]}
//   POST /predict        {spectrum | psm_id, beam?, max_len?}
//   POST /steer          {spectrum | psm_id, prefix, beam?, max_len?}
//
// spectrum = {peaks: [[mz, intensity], ...], charge, precursor_mass}; prefix
// is either a notation string ("RL<reflect>") or a list of token strings.
// Errors carry {error, at} where `at` names the offending field.

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rnovo/checkpoint.hpp"
#include "rnovo/decode.hpp"
#include "rnovo/spectrum.hpp"

namespace rnovo {

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
};

/// Request handlers over one immutable model snapshot. Every method is
/// const and safe to call concurrently.
class SteerService {
 public:
  SteerService(Checkpoint checkpoint, std::vector<Psm> dataset, PreprocessConfig preprocess = {},
               DecodeConfig decode = {});

  Response info() const;
  Response dataset_list() const;
  Response dataset_get(const std::string& id) const;
  Response predict(const std::string& body) const;
  Response steer(const std::string& body) const;

  const Checkpoint& checkpoint() const noexcept { return checkpoint_; }

 private:
  Response run(const std::string& body, bool with_prefix) const;

  Checkpoint checkpoint_;
  std::string digest_;
  std::vector<Psm> dataset_;
  std::unordered_map<std::string, std::size_t> by_id_;
  PreprocessConfig preprocess_;
  DecodeConfig decode_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  std::size_t threads = 4;
  /// Requests waiting beyond the busy workers; excess connections are refused.
  std::size_t max_queued = 64;
};

/// Parses "host:port", ":port" or "port".
ServerOptions parse_bind(const std::string& text);

class Server {
 public:
  Server(const SteerService& service, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the socket; returns the bound port. Throws RuntimeError on failure.
  int bind();
  /// Serves until stop(); call bind() first.
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rnovo
