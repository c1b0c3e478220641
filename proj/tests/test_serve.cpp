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

#include <atomic>
#include <thread>

#include "rnovo/error.hpp"
#include "rnovo/serve.hpp"
#include "test_support.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen.
#include <httplib.h>

using namespace rnovo;
using Json = nlohmann::ordered_json;
using rnovo::testing::tiny_config;

namespace {

Checkpoint tiny_checkpoint() {
  Checkpoint c;
  c.vocab = build_vocabulary();
  c.model = init_model(tiny_config(c.vocab), 5);
  c.optimizer = OptimizerState::zeros_for(c.model.tensors);
  c.metadata = {{"mode", "pretrain"}};
  return c;
}

std::vector<Psm> dataset() {
  SynthConfig sc;
  sc.min_length = 4;
  sc.max_length = 8;
  auto corpus = generate_corpus(build_vocabulary(), sc, 6, 3);
  auto all = corpus.train;
  Psm unlabeled = corpus.test.front();
  unlabeled.id = "unlabeled";
  unlabeled.label.reset();
  all.push_back(unlabeled);
  return all;
}

const SteerService& service() {
  static const SteerService s(tiny_checkpoint(), dataset(), {}, {});
  return s;
}

const std::string kSpectrum =
    R"("spectrum": {"peaks": [[120.5, 0.4], [250.25, 1.0], [377.1, 0.3]], "charge": 2, "precursor_mass": 600.3})";

void expect_error(const Response& r, int status, const std::string& at) {
  EXPECT_EQ(r.status, status) << r.body.dump();
  EXPECT_EQ(r.body.value("at", ""), at) << r.body.dump();
  EXPECT_TRUE(r.body.contains("error"));
}

}  // namespace

TEST(SteerService, Info) {
  const auto r = service().info();
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["service"], "rnovo");
  EXPECT_EQ(r.body["version"], kCheckpointVersion);
  EXPECT_EQ(r.body["digest"], checkpoint_digest(service().checkpoint()));
  EXPECT_EQ(r.body["vocabulary"].size(), 25u);
  EXPECT_EQ(r.body["vocabulary"][3]["symbol"], "<reflect>");
  EXPECT_TRUE(r.body["vocabulary"][3]["mass"].is_null());
  EXPECT_EQ(r.body["dataset_size"], dataset().size());
  EXPECT_EQ(r.body["model"]["d_model"], 16);
}

TEST(SteerService, Dataset) {
  const auto list = service().dataset_list();
  const auto n = dataset().size();
  ASSERT_EQ(list.body["psms"].size(), n);
  EXPECT_TRUE(list.body["psms"][0]["has_label"].get<bool>());
  EXPECT_FALSE(list.body["psms"][n - 1]["has_label"].get<bool>());

  const auto id = list.body["psms"][0]["id"].get<std::string>();
  const auto one = service().dataset_get(id);
  EXPECT_EQ(one.status, 200);
  EXPECT_EQ(one.body["id"], id);
  EXPECT_TRUE(one.body["label"].is_string());
  EXPECT_EQ(one.body["peaks"].size(), list.body["psms"][0]["peak_count"].get<std::size_t>());
  EXPECT_TRUE(service().dataset_get("unlabeled").body["label"].is_null());
  expect_error(service().dataset_get("nope"), 404, "id");
}

TEST(SteerService, PredictMatchesLibrary) {
  const auto r = service().predict("{" + kSpectrum + "}");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  Spectrum s;
  s.peaks = {{120.5, 0.4}, {250.25, 1.0}, {377.1, 0.3}};
  s.precursor_charge = 2;
  s.precursor_mass = 600.3;
  const auto& ckpt = service().checkpoint();
  const auto expected = greedy_decode(ckpt.model, preprocess_spectrum(s));
  EXPECT_EQ(r.body["raw_text"], decode_tokens(ckpt.vocab, expected.tokens));
  EXPECT_EQ(r.body["answer_text"], decode_tokens(ckpt.vocab, postprocess_reflection(expected.tokens)));
  EXPECT_EQ(r.body["raw"].size(), expected.tokens.size());
  EXPECT_EQ(r.body["prefix_length"], 0);
  EXPECT_EQ(r.body["beam"], 1);
  EXPECT_DOUBLE_EQ(r.body["mass"]["precursor"].get<double>(), 600.3);
  EXPECT_FALSE(r.body.contains("alternatives"));
  for (const auto& t : r.body["raw"]) {
    EXPECT_GT(t["probability"].get<double>(), 0.0);
    EXPECT_LE(t["probability"].get<double>(), 1.0);
  }
}

TEST(SteerService, SteerKeepsPrefix) {
  const auto r = service().steer(R"({"prefix": "RL<reflect>", "max_len": 12, )" + kSpectrum + "}");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const auto raw_text = r.body["raw_text"].get<std::string>();
  EXPECT_EQ(raw_text.rfind("RL<reflect>", 0), 0u) << raw_text;
  EXPECT_EQ(r.body["prefix_length"], 3);
  const auto& vocab = service().checkpoint().vocab;
  EXPECT_EQ(r.body["answer_text"], decode_tokens(vocab, postprocess_reflection(parse_tokens(vocab, raw_text))));
  EXPECT_EQ(r.body["raw"][0]["token"], "R");

  const auto listed = service().steer(R"({"prefix": ["R", "L", "<reflect>"], "max_len": 12, )" + kSpectrum + "}");
  EXPECT_EQ(listed.body["raw_text"], r.body["raw_text"]);
}

TEST(SteerService, LabeledPsmReportsMatches) {
  const auto id = service().dataset_list().body["psms"][0]["id"].get<std::string>();
  const auto r = service().predict(R"({"psm_id": ")" + id + R"(", "beam": 3})");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_TRUE(r.body["label"].is_string());
  EXPECT_EQ(r.body["matches"].size(), r.body["answer"].size());
  EXPECT_TRUE(r.body["exact"].is_boolean());
  EXPECT_EQ(r.body["beam"], 3);
  ASSERT_TRUE(r.body.contains("alternatives"));
  for (const auto& alt : r.body["alternatives"]) {
    EXPECT_LE(alt["score"].get<double>(), r.body["score"].get<double>());
  }
  const auto unlabeled = service().predict(R"({"psm_id": "unlabeled"})");
  EXPECT_EQ(unlabeled.status, 200);
  EXPECT_FALSE(unlabeled.body.contains("label"));
}

TEST(SteerService, RequestErrors) {
  expect_error(service().predict("{not json"), 400, "body");
  expect_error(service().predict("[]"), 400, "body");
  expect_error(service().predict("{}"), 400, "spectrum");
  expect_error(service().predict(R"({"psm_id": "missing"})"), 404, "psm_id");
  expect_error(service().predict(R"({"psm_id": 3})"), 400, "psm_id");
  expect_error(service().predict(R"({"spectrum": {"peaks": [[1, 2]], "charge": 0, "precursor_mass": 5}})"), 400,
               "spectrum.charge");
  expect_error(service().predict(R"({"spectrum": {"peaks": [[1, 2]], "charge": 1}})"), 400,
               "spectrum.precursor_mass");
  expect_error(service().predict(R"({"spectrum": {"peaks": [[1]], "charge": 1, "precursor_mass": 5}})"), 400,
               "spectrum.peaks[0]");
  expect_error(service().predict(R"({"beam": 0, )" + kSpectrum + "}"), 400, "beam");
  expect_error(service().predict(R"({"max_len": 1000, )" + kSpectrum + "}"), 400, "max_len");
  expect_error(service().steer(R"({"prefix": "GA$", )" + kSpectrum + "}"), 400, "prefix");
  expect_error(service().steer(R"({"prefix": "GZ", )" + kSpectrum + "}"), 400, "prefix");
  expect_error(service().steer(R"({"prefix": "GASPVTLDEK", "max_len": 5, )" + kSpectrum + "}"), 400, "prefix");
  expect_error(service().predict(R"({"spectrum": {"peaks": [[10.0, 1.0]], "charge": 1, "precursor_mass": 500}})"),
               422, "spectrum.peaks");
}

TEST(SteerService, ObjectPeaksAccepted) {
  const auto r = service().predict(
      R"({"spectrum": {"peaks": [{"mz": 120.5, "intensity": 0.4}, {"mz": 250.25, "intensity": 1.0}, {"mz": 377.1, "intensity": 0.3}], "charge": 2, "precursor_mass": 600.3}})");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["raw_text"], service().predict("{" + kSpectrum + "}").body["raw_text"]);
}

TEST(ParseBind, Forms) {
  auto o = parse_bind("0.0.0.0:9000");
  EXPECT_EQ(o.host, "0.0.0.0");
  EXPECT_EQ(o.port, 9000);
  o = parse_bind(":81");
  EXPECT_EQ(o.host, "127.0.0.1");
  EXPECT_EQ(o.port, 81);
  EXPECT_EQ(parse_bind("0").port, 0);
  EXPECT_THROW(parse_bind("host:port"), UsageError);
  EXPECT_THROW(parse_bind("host:70000"), UsageError);
  EXPECT_THROW(parse_bind("12ab"), UsageError);
}

class LiveServer : public ::testing::Test {
 protected:
  void SetUp() override {
    ServerOptions o;
    o.port = 0;
    o.threads = 4;
    server_ = std::make_unique<Server>(service(), o);
    port_ = server_->bind();
    thread_ = std::thread([this] { server_->listen(); });
    for (int i = 0; i < 200 && !server_->running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  std::unique_ptr<Server> server_;
  int port_ = 0;
  std::thread thread_;
};

TEST_F(LiveServer, RoutesAndCors) {
  ASSERT_GT(port_, 0);
  auto c = client();
  auto info = c.Get("/info");
  ASSERT_TRUE(info);
  EXPECT_EQ(info->status, 200);
  EXPECT_EQ(info->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(info->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(Json::parse(info->body)["service"], "rnovo");

  auto list = c.Get("/dataset");
  ASSERT_TRUE(list);
  const auto id = Json::parse(list->body)["psms"][0]["id"].get<std::string>();
  auto one = c.Get("/dataset/" + id);
  ASSERT_TRUE(one);
  EXPECT_EQ(one->status, 200);

  auto steer = c.Post("/steer", R"({"prefix": "RL<reflect>", "psm_id": ")" + id + R"("})", "application/json");
  ASSERT_TRUE(steer);
  EXPECT_EQ(steer->status, 200);
  EXPECT_EQ(Json::parse(steer->body)["raw_text"].get<std::string>().rfind("RL<reflect>", 0), 0u);

  auto bad = c.Post("/predict", "{", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(Json::parse(bad->body)["at"], "body");

  auto missing = c.Get("/nowhere");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  auto preflight = c.Options("/predict");
  ASSERT_TRUE(preflight);
  EXPECT_EQ(preflight->status, 204);
}

TEST_F(LiveServer, ConcurrentRequestsAgree) {
  const auto expected = service().predict("{" + kSpectrum + "}").body.dump();
  std::atomic<int> agree{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < 8; ++w) {
    workers.emplace_back([&] {
      auto c = client();
      for (int i = 0; i < 5; ++i) {
        auto r = c.Post("/predict", "{" + kSpectrum + "}", "application/json");
        if (r && r->status == 200 && Json::parse(r->body).dump() == expected) ++agree;
      }
    });
  }
  for (auto& t : workers) t.join();
  EXPECT_EQ(agree.load(), 40);
}
