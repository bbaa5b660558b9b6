#include <unistd.h>

#include <thread>

#include <fmt/format.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "httplib.h"
#include "martlens/fileio.hpp"
#include "martlens/hashing.hpp"
#include "martlens/mart_data.hpp"
#include "martlens/service.hpp"
#include "martlens/wire.hpp"
#include "oracles.hpp"

using namespace martlens;
using namespace martlens::service;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = oracle::temp_dir("svc");
    svc_ = make();
  }
  void TearDown() override {
    svc_.reset();
    std::filesystem::remove_all(root_);
  }

  std::unique_ptr<PricingService> make() {
    ServiceConfig cfg;
    cfg.data_root = root_;
    cfg.explainer.num_samples = 1000;
    return std::make_unique<PricingService>(cfg);
  }

  std::string upload(std::size_t n = 800, std::uint64_t seed = 2) {
    const auto r = svc_->upload_dataset(to_csv(gen_synthetic_mart(n, seed).data));
    EXPECT_EQ(r.status, 201) << r.body;
    return json::parse(r.body).at("dataset_id");
  }

  std::string train(const std::string& dataset_id) {
    const auto r = svc_->train(json{{"dataset_id", dataset_id}}.dump());
    EXPECT_EQ(r.status, 201) << r.body;
    return json::parse(r.body).at("model_id");
  }

  json instance() const {
    const auto mart = gen_synthetic_mart(1, 99);
    json inst;
    for (std::size_t j = 0; j < mart.data.schema().size(); ++j) {
      inst[mart.data.schema().feature_names[j]] = mart.data.records()[0].values[j];
    }
    return inst;
  }

  static void expect_api_error(const Response& r, int status, const std::string& code) {
    EXPECT_EQ(r.status, status) << r.body;
    const auto j = json::parse(r.body);
    ASSERT_TRUE(j.contains("error")) << r.body;
    EXPECT_EQ(j.at("error").at("code"), code);
    EXPECT_TRUE(j.at("error").at("message").is_string());
  }

  std::filesystem::path root_;
  std::unique_ptr<PricingService> svc_;
};

}  // namespace

TEST_F(ServiceTest, Health) {
  const auto r = svc_->health();
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body), json({{"status", "ok"}}));
}

TEST_F(ServiceTest, UploadIsContentAddressed) {
  const std::string a = upload();
  const std::string b = upload();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 64u);
  EXPECT_TRUE(std::filesystem::exists(root_ / "datasets" / (a + ".csv")));
  expect_api_error(svc_->upload_dataset("WT,PPK\n1,abc\n"), 400, "bad_request");
  const auto j = json::parse(svc_->upload_dataset("WT,PPK\n1,abc\n").body);
  EXPECT_EQ(j["error"]["detail"]["row"], 1);
  EXPECT_EQ(j["error"]["detail"]["column"], "PPK");
}

TEST_F(ServiceTest, TrainReturnsMetricsAndStableId) {
  const std::string ds = upload();
  const auto r = svc_->train(json{{"dataset_id", ds}}.dump());
  ASSERT_EQ(r.status, 201) << r.body;
  const auto j = json::parse(r.body);
  const double r2 = j.at("metrics").at("r2");
  EXPECT_GE(r2, 0.0);
  EXPECT_LE(r2, 1.0);
  EXPECT_GE(j.at("metrics").at("rmse").get<double>(), 0.0);
  EXPECT_EQ(train(ds), j.at("model_id"));
  const std::string id = j.at("model_id");
  const auto stored = read_file(root_ / "models" / (id + ".json"));
  EXPECT_EQ(sha256_hex(stored), id);
  EXPECT_TRUE(std::filesystem::exists(root_ / "models" / (id + ".meta.json")));
}

TEST_F(ServiceTest, TrainErrors) {
  expect_api_error(svc_->train(json{{"dataset_id", std::string(64, 'a')}}.dump()), 404,
                   "not_found");
  expect_api_error(svc_->train("not json"), 400, "bad_request");
  expect_api_error(svc_->train("{}"), 400, "bad_request");
  // Two identical feature columns: singular at lambda 0, with diagnostics.
  std::string csv = "a,b,c,total_price\n";
  for (int i = 0; i < 20; ++i) {
    csv += fmt::format("{},{},{},{}\n", i, i, (i * 7) % 5, 3 * i + 1);
  }
  const auto ds = json::parse(svc_->upload_dataset(csv).body).at("dataset_id");
  const auto r = svc_->train(json{{"dataset_id", ds}}.dump());
  expect_api_error(r, 422, "unprocessable");
  const auto detail = json::parse(r.body)["error"]["detail"];
  EXPECT_EQ(detail["kind"], "SingularMatrix");
  EXPECT_EQ(detail["duplicate_feature_pairs"], json::array({json::array({"a", "b"})}));
  expect_api_error(svc_->train(json{{"dataset_id", ds}, {"target_name", "price"}}.dump()), 422,
                   "unprocessable");
  EXPECT_EQ(svc_->train(json{{"dataset_id", ds}, {"lambda", 1.0}}.dump()).status, 201);
}

TEST_F(ServiceTest, PredictExplainWhatif) {
  const std::string id = train(upload());
  const json inst = instance();
  const auto p = svc_->predict(id, json{{"instance", inst}}.dump());
  ASSERT_EQ(p.status, 200) << p.body;
  EXPECT_TRUE(json::parse(p.body).at("price").is_number());

  const std::string body = json{{"instance", inst}, {"seed", 7}}.dump();
  const auto e1 = svc_->explain(id, body);
  const auto e2 = svc_->explain(id, body);
  ASSERT_EQ(e1.status, 200) << e1.body;
  EXPECT_EQ(e1.body, e2.body);
  const auto ej = json::parse(e1.body);
  EXPECT_EQ(ej.at("contributions").size(), lime::ExplainerConfig{}.num_features);
  EXPECT_EQ(ej.at("seed"), 7);
  EXPECT_EQ(json::parse(svc_->explain(id, json{{"instance", inst}}.dump()).body).at("seed"),
            lime::kDefaultSeed);

  json missing = inst;
  missing.erase("WT");
  const auto bad = svc_->explain(id, json{{"instance", missing}}.dump());
  expect_api_error(bad, 422, "unprocessable");
  EXPECT_EQ(json::parse(bad.body)["error"]["detail"]["missing"], json::array({"WT"}));

  const auto same = json::parse(svc_->whatif(id, json{{"instance", inst}, {"overrides", json::object()}}.dump()).body);
  EXPECT_EQ(same.at("delta"), 0.0);
  EXPECT_EQ(same.at("before"), same.at("after"));

  const auto model = json::parse(svc_->get_model(id).body);
  double wt_coef = 0.0;
  for (const auto& c : model["model"]["coefficients"]) {
    if (c["feature"] == "WT") wt_coef = c["value"];
  }
  ASSERT_GT(wt_coef, 0.0);
  const double wt = inst.at("WT");
  const auto up = svc_->whatif(id, json{{"instance", inst}, {"overrides", {{"WT", wt + 50}}}}.dump());
  ASSERT_EQ(up.status, 200) << up.body;
  EXPECT_GT(json::parse(up.body).at("delta").get<double>(), 0.0);

  expect_api_error(svc_->whatif(id, json{{"instance", inst}, {"overrides", {{"color", 1}}}}.dump()),
                   422, "unprocessable");
  expect_api_error(svc_->explain(std::string(64, 'f'), body), 404, "not_found");
  expect_api_error(svc_->get_model("../../etc/passwd"), 404, "not_found");
}

TEST_F(ServiceTest, TamperedModelFailsHashCheck) {
  const std::string id = train(upload());
  svc_ = make();  // fresh cache
  const auto path = root_ / "models" / (id + ".json");
  std::string text = read_file(path);
  text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
  write_file_atomic(path, text);
  expect_api_error(svc_->get_model(id), 500, "internal");
}

TEST_F(ServiceTest, IngestAcksDedupsAndNacks) {
  const auto frames = edge::gen_synthetic_stream({});
  auto packets = wire::packetize("cow-7", {frames.begin(), frames.begin() + 3});
  auto r = svc_->ingest(wire::encode_records(packets));
  ASSERT_EQ(r.status, 200) << r.body;
  auto j = json::parse(r.body);
  ASSERT_EQ(j["results"].size(), 3u);
  for (const auto& x : j["results"]) EXPECT_EQ(x["status"], "ack");
  EXPECT_EQ(j["highest_contiguous_seq"]["cow-7"], 2);

  // Duplicate of seq 1 plus a corrupted seq 3.
  auto bad = wire::make_frame_packet("cow-7", 3, frames[3]);
  bad.payload[bad.payload.size() - 1] ^= 0x40;
  std::vector<wire::FramePacket> second = {packets[1], bad};
  j = json::parse(svc_->ingest(wire::encode_records(second)).body);
  EXPECT_EQ(j["results"][0]["status"], "ack");
  EXPECT_EQ(j["results"][0]["duplicate"], true);
  EXPECT_EQ(j["results"][1]["status"], "nack");
  EXPECT_EQ(j["results"][1]["reason"], "checksum");
  EXPECT_EQ(j["highest_contiguous_seq"]["cow-7"], 2);

  const auto rows = parse_csv_table(read_file(root_ / "streams" / "cow-7" / "rows.csv"));
  EXPECT_EQ(rows.header, (std::vector<std::string>{"seq", "WT", "height_cm"}));
  EXPECT_EQ(rows.rows.rows(), 3u);
  const auto animals = json::parse(svc_->animals().body);
  EXPECT_EQ(animals["animals"].size(), 3u);
  EXPECT_EQ(animals["animals"][0]["features"]["WT"],
            edge::SyntheticExtractor{}.extract(frames[0])[0]);

  expect_api_error(svc_->ingest(std::string("\0\0\0\x09{}", 6)), 400, "bad_request");
  const auto evil = wire::make_features_packet("../x", 0, std::vector<double>{1, 2});
  j = json::parse(svc_->ingest(wire::encode_record(evil)).body);
  EXPECT_EQ(j["results"][0]["reason"], "invalid_stream_id");
  const auto wrong_len = wire::make_features_packet("cow-8", 0, std::vector<double>{1});
  j = json::parse(svc_->ingest(wire::encode_record(wrong_len)).body);
  EXPECT_EQ(j["results"][0]["reason"], "dimension");
}

TEST_F(ServiceTest, IngestSurvivesRestart) {
  const auto frames = edge::gen_synthetic_stream({});
  svc_->ingest(wire::encode_records(wire::packetize("a", {frames.begin(), frames.begin() + 4})));
  svc_ = make();
  const auto j = json::parse(svc_->ingest(wire::encode_records(wire::packetize("a", frames))).body);
  std::size_t dup = 0;
  for (const auto& r : j["results"]) dup += r.value("duplicate", false) ? 1 : 0;
  EXPECT_EQ(dup, 4u);
  EXPECT_EQ(j["highest_contiguous_seq"]["a"], static_cast<int>(frames.size()) - 1);
  EXPECT_EQ(json::parse(svc_->animals().body)["animals"].size(), frames.size());
}

TEST_F(ServiceTest, ConcurrentIngestAcrossStreams) {
  const auto frames = edge::gen_synthetic_stream({});
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      const auto p = wire::packetize(fmt::format("s{}", t), frames);
      for (std::size_t i = 0; i < p.size(); i += 5) {
        svc_->ingest(wire::encode_records(std::span(p).subspan(i, std::min<std::size_t>(5, p.size() - i))));
        svc_->ingest(wire::encode_record(p[i]));  // resend
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(json::parse(svc_->animals().body)["animals"].size(), 4 * frames.size());
}

// ---------------------------------------------------------------------------
// Over a real socket.

TEST_F(ServiceTest, HttpRoutes) {
  HttpServer server(*svc_);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->body, R"({"status":"ok"})");

  auto up = cli.Post("/datasets", to_csv(gen_synthetic_mart(500, 1).data), "text/csv");
  ASSERT_TRUE(up);
  EXPECT_EQ(up->status, 201);
  const std::string ds = json::parse(up->body)["dataset_id"];
  auto tr = cli.Post("/models", json{{"dataset_id", ds}}.dump(), "application/json");
  ASSERT_EQ(tr->status, 201) << tr->body;
  const std::string id = json::parse(tr->body)["model_id"];
  auto got = cli.Get("/models/" + id);
  ASSERT_EQ(got->status, 200);
  EXPECT_EQ(sha256_hex(got->body), id);
  EXPECT_EQ(got->get_header_value("Content-Type"), "application/json");

  const std::string body = json{{"instance", instance()}}.dump();
  for (const char* op : {"predict", "explain", "whatif"}) {
    auto r = cli.Post(fmt::format("/models/{}/{}", id, op), body, "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200) << op << " " << r->body;
  }
  auto ing = cli.Post("/ingest/frames",
                      wire::encode_records(wire::packetize("h", edge::gen_synthetic_stream({}))),
                      "application/octet-stream");
  ASSERT_EQ(ing->status, 200);
  auto animals = cli.Get("/animals");
  EXPECT_EQ(json::parse(animals->body)["animals"].size(), 30u);

  auto missing = cli.Get("/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["code"], "not_found");
  auto notfound = cli.Post("/models/" + std::string(64, '0') + "/explain", body, "application/json");
  EXPECT_EQ(notfound->status, 404);
  EXPECT_EQ(json::parse(notfound->body)["error"]["code"], "not_found");
  server.stop();
}

TEST_F(ServiceTest, HealthFailsWhenRootUnwritable) {
  ServiceConfig cfg;
  cfg.data_root = root_ / "ro";
  PricingService svc(cfg);
  std::filesystem::permissions(cfg.data_root, std::filesystem::perms::owner_read |
                                                  std::filesystem::perms::owner_exec);
  const bool root_user = ::geteuid() == 0;
  const auto r = svc.health();
  std::filesystem::permissions(cfg.data_root, std::filesystem::perms::owner_all);
  if (root_user) GTEST_SKIP() << "permission bits do not bind root";
  EXPECT_EQ(r.status, 503);
  EXPECT_TRUE(json::parse(r.body).contains("error"));
}

// ---------------------------------------------------------------------------
// Edge-side delivery.

TEST(Transmit, RetriesTransientFailuresThenDelivers) {
  const auto root = oracle::temp_dir("tx");
  ServiceConfig cfg;
  cfg.data_root = root;
  PricingService svc(cfg);
  int calls = 0;
  Transport flaky = [&](const std::string& body) -> std::optional<TransportReply> {
    ++calls;
    if (calls == 1) return std::nullopt;
    if (calls == 2) return TransportReply{503, "{}"};
    const auto r = svc.ingest(body);
    return TransportReply{r.status, r.body};
  };
  const auto packets = wire::packetize("t", edge::gen_synthetic_stream({}));
  TransmitOptions opt;
  opt.batch_size = 5;
  opt.initial_backoff_ms = 1;
  const auto report = transmit(packets, flaky, opt);
  EXPECT_EQ(report.sent, 30u);
  EXPECT_EQ(report.acked, 30u);
  EXPECT_EQ(report.failed, 0u);
  EXPECT_EQ(report.attempts, 8u);
  EXPECT_EQ(report.highest_contiguous_seq.at("t"), 29);
  std::filesystem::remove_all(root);
}

TEST(Transmit, GivesUpAfterBudget) {
  Transport dead = [](const std::string&) -> std::optional<TransportReply> { return std::nullopt; };
  TransmitOptions opt;
  opt.max_attempts = 3;
  opt.initial_backoff_ms = 1;
  const auto packets = wire::packetize("t", edge::gen_synthetic_stream({}));
  try {
    transmit(packets, dead, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEndpointUnreachable);
  }
  try {
    transmit(packets, "http://127.0.0.1:1", opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEndpointUnreachable);
  }
}

TEST(Transmit, FivePacketsOverHttp) {
  const auto root = oracle::temp_dir("tx5");
  ServiceConfig cfg;
  cfg.data_root = root;
  PricingService svc(cfg);
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  const auto frames = edge::gen_synthetic_stream({});
  const auto packets = wire::packetize("five", {frames.begin(), frames.begin() + 5});
  const auto report = transmit(packets, fmt::format("http://127.0.0.1:{}", port));
  EXPECT_EQ(report.sent, 5u);
  EXPECT_EQ(report.acked, 5u);
  EXPECT_EQ(report.failed, 0u);
  const auto j = report.to_json();
  EXPECT_EQ(j["sent"], 5);
  server.stop();
  std::filesystem::remove_all(root);
}
