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

#include "rnovo/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rnovo/error.hpp"

namespace rnovo {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using Json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'R', 'N', 'V', 'O'};
constexpr std::string_view kFirstMoment = "adam.m/";
constexpr std::string_view kSecondMoment = "adam.v/";

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(std::string_view bytes, std::size_t at) {
  U value;
  std::memcpy(&value, bytes.data() + at, sizeof(U));
  return value;
}

}  // namespace

OptimizerState OptimizerState::zeros_for(const ParameterSet<float>& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

Json to_json(const ModelConfig& c) {
  return Json{{"d_model", c.d_model},
              {"layers", c.layers},
              {"heads", c.heads},
              {"ffn", c.ffn},
              {"max_decode_len", c.max_decode_len},
              {"vocab_size", c.vocab_size},
              {"mz_wavelength_min", c.mz_wavelength_min},
              {"mz_wavelength_max", c.mz_wavelength_max},
              {"max_charge", c.max_charge},
              {"prefix_mass", c.prefix_mass},
              {"token_masses", c.token_masses}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn = j.at("ffn").get<int>();
  c.max_decode_len = j.at("max_decode_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.mz_wavelength_min = j.at("mz_wavelength_min").get<double>();
  c.mz_wavelength_max = j.at("mz_wavelength_max").get<double>();
  c.max_charge = j.at("max_charge").get<int>();
  c.prefix_mass = j.at("prefix_mass").get<bool>();
  c.token_masses = j.at("token_masses").get<std::vector<double>>();
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& params = ckpt.model.tensors;
  const auto& opt = ckpt.optimizer;
  if (opt.first_moment.size() != params.size() || opt.second_moment.size() != params.size()) {
    throw UsageError("optimizer state does not match the parameter set");
  }

  std::vector<std::pair<std::string, const Matrix<float>*>> tensors;
  for (std::size_t i = 0; i < params.size(); ++i) tensors.emplace_back(params.name(i), &params[i]);
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.emplace_back(std::string(kFirstMoment) + params.name(i), &opt.first_moment[i]);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.emplace_back(std::string(kSecondMoment) + params.name(i), &opt.second_moment[i]);
  }

  Json manifest = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    manifest.push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m->size()) * sizeof(float);
  }
  Json vocab = Json::array();
  for (const auto& r : ckpt.vocab.residues()) vocab.push_back({{"symbol", r.symbol}, {"mass", r.mass}});

  const Json header{{"model", to_json(ckpt.model.config)},
                    {"vocabulary", std::move(vocab)},
                    {"optimizer", {{"step", opt.step}}},
                    {"tensors", std::move(manifest)},
                    {"metadata", ckpt.metadata}};
  const auto text = header.dump();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& [name, m] : tensors) {
    out.append(reinterpret_cast<const char*>(m->data()), static_cast<std::size_t>(m->size()) * sizeof(float));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("bad magic");
  if (bytes.size() < 16) throw DataError("truncated checkpoint");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 16) throw DataError("truncated checkpoint header");

  Json header;
  try {
    header = Json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = version;
  try {
    std::vector<Residue> residues;
    for (const auto& r : header.at("vocabulary")) {
      residues.push_back({r.at("symbol").get<std::string>(), r.at("mass").get<double>()});
    }
    ckpt.vocab = Vocabulary(std::move(residues));
    ckpt.model.config = model_config_from_json(header.at("model"));
    ckpt.model.config.validate();
    if (static_cast<std::size_t>(ckpt.model.config.vocab_size) != ckpt.vocab.size()) {
      throw DataError("checkpoint vocabulary size does not match model config");
    }
    if (ckpt.model.config.prefix_mass &&
        ckpt.model.config.token_masses != bind_vocabulary(ckpt.model.config, ckpt.vocab).token_masses) {
      throw DataError("checkpoint token masses do not match its vocabulary");
    }
    ckpt.optimizer.step = header.at("optimizer").at("step").get<std::int64_t>();
    ckpt.metadata = header.at("metadata");

    const auto layout = parameter_layout(ckpt.model.config);
    const auto& manifest = header.at("tensors");
    if (manifest.size() != 3 * layout.size()) throw DataError("checkpoint manifest has the wrong tensor count");

    const std::string_view data = bytes.substr(16 + header_len);
    std::uint64_t expected_offset = 0;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      const auto& entry = manifest[i];
      const auto& shape = layout[i % layout.size()];
      const std::string_view group = i < layout.size() ? "" : i < 2 * layout.size() ? kFirstMoment : kSecondMoment;
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      if (name != std::string(group) + shape.name || rows != shape.rows || cols != shape.cols) {
        throw DataError("checkpoint manifest mismatch at tensor " + name);
      }
      if (entry.at("offset").get<std::uint64_t>() != expected_offset) {
        throw DataError("checkpoint manifest offset mismatch at tensor " + name);
      }
      const auto nbytes = static_cast<std::uint64_t>(rows * cols) * sizeof(float);
      if (expected_offset + nbytes > data.size()) throw DataError("truncated checkpoint data");
      Matrix<float> m(rows, cols);
      std::memcpy(m.data(), data.data() + expected_offset, nbytes);
      expected_offset += nbytes;
      auto& target = i < layout.size()       ? ckpt.model.tensors
                     : i < 2 * layout.size() ? ckpt.optimizer.first_moment
                                             : ckpt.optimizer.second_moment;
      target.add(shape.name, std::move(m));
    }
    if (expected_offset != data.size()) throw DataError("trailing bytes after checkpoint data");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RuntimeError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.view());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string checkpoint_digest(const Checkpoint& ckpt) { return fnv1a_hex(serialize_checkpoint(ckpt)); }

}  // namespace rnovo
