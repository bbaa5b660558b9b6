#include "martlens/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"
#include "martlens/error.hpp"
#include "martlens/fileio.hpp"
#include "martlens/hashing.hpp"
#include "martlens/mart_data.hpp"
#include "martlens/render.hpp"
#include "martlens/wire.hpp"

namespace martlens::service {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view api_code_name(ApiCode code) {
  switch (code) {
    case ApiCode::kBadRequest: return "bad_request";
    case ApiCode::kNotFound: return "not_found";
    case ApiCode::kConflict: return "conflict";
    case ApiCode::kUnprocessable: return "unprocessable";
    case ApiCode::kInternal: return "internal";
  }
  return "internal";
}

int http_status(ApiCode code) {
  switch (code) {
    case ApiCode::kBadRequest: return 400;
    case ApiCode::kNotFound: return 404;
    case ApiCode::kConflict: return 409;
    case ApiCode::kUnprocessable: return 422;
    case ApiCode::kInternal: return 500;
  }
  return 500;
}

Response api_error(ApiCode code, std::string_view message, const json& detail) {
  json err = {{"code", api_code_name(code)}, {"message", message}};
  if (!detail.is_null()) err["detail"] = detail;
  return {http_status(code), json{{"error", err}}.dump()};
}

namespace {

struct ApiException {
  ApiCode code;
  std::string message;
  json detail;
};

ApiCode code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kBadFraming:
      return ApiCode::kBadRequest;
    case ErrorKind::kNotFound:
      return ApiCode::kNotFound;
    case ErrorKind::kIo:
    case ErrorKind::kEndpointUnreachable:
      return ApiCode::kInternal;
    default:
      return ApiCode::kUnprocessable;
  }
}

template <typename Fn>
Response guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ApiException& e) {
    return api_error(e.code, e.message, e.detail);
  } catch (const SchemaMismatch& e) {
    return api_error(ApiCode::kUnprocessable, e.what(),
                     {{"kind", error_kind_name(e.kind())},
                      {"missing", e.missing()},
                      {"extra", e.extra()}});
  } catch (const ParseError& e) {
    return api_error(ApiCode::kBadRequest, e.what(),
                     {{"kind", "ParseError"}, {"row", e.row()}, {"column", e.column()}});
  } catch (const Error& e) {
    return api_error(code_for(e.kind()), e.what(), {{"kind", error_kind_name(e.kind())}});
  } catch (const std::exception& e) {
    return api_error(ApiCode::kInternal, e.what());
  }
}

json parse_json_body(std::string_view body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw ApiException{ApiCode::kBadRequest, "body must be a JSON object", nullptr};
    return j;
  } catch (const json::exception& e) {
    throw ApiException{ApiCode::kBadRequest, fmt::format("invalid JSON: {}", e.what()), nullptr};
  }
}

std::map<std::string, double> parse_instance(const json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_object()) {
    throw ApiException{ApiCode::kBadRequest,
                       fmt::format("'{}' must be a JSON object of feature values", key),
                       {{"field", key}}};
  }
  std::map<std::string, double> out;
  for (const auto& [name, v] : body.at(key).items()) {
    if (!v.is_number()) {
      throw ApiException{ApiCode::kUnprocessable,
                         fmt::format("feature '{}' must be a number", name),
                         {{"field", name}}};
    }
    out.emplace(name, v.get<double>());
  }
  return out;
}

bool is_content_id(std::string_view id) {
  return id.size() == 64 && std::all_of(id.begin(), id.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

bool valid_stream_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

std::string utc_now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json metrics_json(const linreg::RegressionMetrics& m) {
  return {{"rmse", m.rmse}, {"mae", m.mae}, {"r2", m.r2}};
}

json singular_diagnostics(const Dataset& train) {
  const Matrix x = train.design();
  const auto& names = train.schema().feature_names;
  const StandardizationStats stats = fit_standardization(x);
  json constant = json::array();
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (stats.constant[j]) constant.push_back(names[j]);
  }
  json duplicates = json::array();
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      bool same = true;
      for (std::size_t i = 0; i < x.rows() && same; ++i) same = x(i, a) == x(i, b);
      if (same && !stats.constant[a]) duplicates.push_back({names[a], names[b]});
    }
  }
  return {{"kind", "SingularMatrix"},
          {"n_train", train.size()},
          {"n_features", names.size()},
          {"constant_features", constant},
          {"duplicate_feature_pairs", duplicates}};
}

}  // namespace

struct PricingService::ModelEntry {
  ModelBundle bundle;
  std::string serialized;
};

struct PricingService::StreamState {
  std::mutex mutex;
  bool loaded = false;
  std::vector<std::string> columns;
  std::vector<std::pair<std::uint64_t, std::vector<double>>> rows;
  std::set<std::uint64_t> seen;

  std::int64_t highest_contiguous() const {
    std::int64_t h = -1;
    while (seen.contains(static_cast<std::uint64_t>(h + 1))) ++h;
    return h;
  }
};

PricingService::PricingService(ServiceConfig config) : config_(std::move(config)) {
  if (!config_.extractor) config_.extractor = std::make_shared<edge::SyntheticExtractor>();
  config_.explainer.validate();
  fs::create_directories(config_.data_root / "datasets");
  fs::create_directories(config_.data_root / "models");
  fs::create_directories(config_.data_root / "streams");
}

PricingService::~PricingService() = default;

Response PricingService::health() const {
  try {
    const fs::path probe = config_.data_root / ".health";
    write_file_atomic(probe, "ok");
    fs::remove(probe);
    return {200, json{{"status", "ok"}}.dump()};
  } catch (const std::exception& e) {
    Response r = api_error(ApiCode::kInternal,
                           fmt::format("data root not writable: {}", e.what()));
    r.status = 503;
    return r;
  }
}

Response PricingService::upload_dataset(std::string_view csv) {
  return guarded([&] {
    const CsvTable table = parse_csv_table(csv);
    const std::string canonical = format_csv_table(table);
    const std::string id = content_id(canonical);
    const fs::path path = config_.data_root / "datasets" / (id + ".csv");
    {
      std::lock_guard lock(write_mutex_);
      if (!fs::exists(path)) write_file_atomic(path, canonical);
    }
    return Response{201, json{{"dataset_id", id},
                              {"rows", table.rows.rows()},
                              {"columns", table.header}}
                             .dump()};
  });
}

Response PricingService::train(std::string_view body) {
  return guarded([&] {
    const json req = parse_json_body(body);
    if (!req.contains("dataset_id") || !req.at("dataset_id").is_string()) {
      throw ApiException{ApiCode::kBadRequest, "'dataset_id' is required", nullptr};
    }
    const std::string dataset_id = req.at("dataset_id").get<std::string>();
    const std::string target = req.value("target_name", std::string(kDefaultTarget));
    const double lambda = req.value("lambda", 0.0);
    const int n_bins = req.value("n_bins", config_.n_bins);

    const fs::path dpath = config_.data_root / "datasets" / (dataset_id + ".csv");
    if (!is_content_id(dataset_id) || !fs::exists(dpath)) {
      throw ApiException{ApiCode::kNotFound,
                         fmt::format("dataset '{}' not found", dataset_id),
                         {{"dataset_id", dataset_id}}};
    }
    const Dataset data = parse_csv(read_file(dpath), target);
    const auto [train_set, test_set] =
        split_train_test(data, config_.train_fraction, config_.split_seed);

    ModelBundle bundle;
    bundle.dataset_id = dataset_id;
    try {
      bundle.model = linreg::fit(train_set, lambda);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kSingularMatrix) throw;
      throw ApiException{ApiCode::kUnprocessable, e.what(), singular_diagnostics(train_set)};
    }
    bundle.discretization = discretize::Discretization::fit(
        train_set.design(), train_set.schema().feature_names, n_bins);

    const std::string serialized = serialize_bundle(bundle);
    const std::string id = content_id(serialized);
    {
      std::lock_guard lock(write_mutex_);
      const fs::path mpath = config_.data_root / "models" / (id + ".json");
      if (!fs::exists(mpath)) {
        write_file_atomic(config_.data_root / "models" / (id + ".meta.json"),
                          json{{"model_id", id},
                               {"dataset_id", dataset_id},
                               {"created_at", utc_now_iso8601()}}
                                  .dump(2));
        write_file_atomic(mpath, serialized);
      }
    }
    json test_metrics = nullptr;
    try {
      test_metrics = metrics_json(linreg::evaluate(bundle.model, test_set));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kScoreUndefined) throw;
    }
    return Response{201, json{{"model_id", id},
                              {"dataset_id", dataset_id},
                              {"target_name", target},
                              {"n_train", train_set.size()},
                              {"n_test", test_set.size()},
                              {"metrics", metrics_json(bundle.model.train_metrics)},
                              {"test_metrics", test_metrics}}
                             .dump()};
  });
}

std::shared_ptr<const PricingService::ModelEntry> PricingService::load_model(
    std::string_view model_id) {
  {
    std::shared_lock lock(models_mutex_);
    auto it = models_.find(model_id);
    if (it != models_.end()) return it->second;
  }
  const fs::path path = config_.data_root / "models" / (std::string(model_id) + ".json");
  if (!is_content_id(model_id) || !fs::exists(path)) {
    throw ApiException{ApiCode::kNotFound, fmt::format("model '{}' not found", model_id),
                       {{"model_id", model_id}}};
  }
  auto entry = std::make_shared<ModelEntry>();
  entry->serialized = read_file(path);
  if (content_id(entry->serialized) != model_id) {
    throw ApiException{ApiCode::kInternal,
                       fmt::format("model '{}' failed its content hash check", model_id),
                       {{"model_id", model_id}}};
  }
  entry->bundle = parse_bundle(entry->serialized);
  std::unique_lock lock(models_mutex_);
  auto [it, inserted] = models_.emplace(std::string(model_id), std::move(entry));
  return it->second;
}

Response PricingService::get_model(std::string_view model_id) {
  return guarded([&] { return Response{200, load_model(model_id)->serialized}; });
}

Response PricingService::predict(std::string_view model_id, std::string_view body) {
  return guarded([&] {
    const auto entry = load_model(model_id);
    const json req = parse_json_body(body);
    const auto instance = entry->bundle.model.align(parse_instance(req, "instance"));
    return Response{200, json{{"model_id", model_id},
                              {"price", entry->bundle.model.predict(instance)}}
                             .dump()};
  });
}

namespace {

lime::ExplainerConfig explainer_for(const lime::ExplainerConfig& base, const json& req) {
  lime::ExplainerConfig cfg = base;
  if (req.contains("seed")) {
    if (!req.at("seed").is_number_unsigned()) {
      throw ApiException{ApiCode::kBadRequest, "'seed' must be a non-negative integer",
                         {{"field", "seed"}}};
    }
    cfg.seed = req.at("seed").get<std::uint64_t>();
  }
  if (req.contains("num_samples")) cfg.num_samples = req.at("num_samples").get<std::size_t>();
  if (req.contains("num_features")) cfg.num_features = req.at("num_features").get<std::size_t>();
  cfg.validate();
  return cfg;
}

}  // namespace

Response PricingService::explain(std::string_view model_id, std::string_view body) {
  return guarded([&] {
    const auto entry = load_model(model_id);
    const json req = parse_json_body(body);
    const auto cfg = explainer_for(config_.explainer, req);
    const auto instance = parse_instance(req, "instance");
    const lime::Explanation e = lime::explain(entry->bundle.model,
                                              entry->bundle.discretization, instance, cfg);
    return Response{200, explanation_to_json_string(e)};
  });
}

Response PricingService::whatif(std::string_view model_id, std::string_view body) {
  return guarded([&] {
    const auto entry = load_model(model_id);
    const linreg::LinearModel& model = entry->bundle.model;
    const json req = parse_json_body(body);
    const auto cfg = explainer_for(config_.explainer, req);
    const auto instance = parse_instance(req, "instance");
    std::map<std::string, double> overrides;
    if (req.contains("overrides")) overrides = parse_instance(req, "overrides");
    json unknown = json::array();
    for (const auto& [name, v] : overrides) {
      if (std::find(model.feature_names.begin(), model.feature_names.end(), name) ==
          model.feature_names.end()) {
        unknown.push_back(name);
      }
    }
    if (!unknown.empty()) {
      throw ApiException{ApiCode::kUnprocessable, "override keys not in the model schema",
                         {{"kind", "SchemaMismatch"}, {"unknown", unknown}}};
    }
    auto changed = instance;
    for (const auto& [name, v] : overrides) changed[name] = v;

    const auto& disc = entry->bundle.discretization;
    const double before = model.predict(model.align(instance));
    const double after = model.predict(model.align(changed));
    const auto e_before = lime::explain(model, disc, instance, cfg);
    const auto e_after = lime::explain(model, disc, changed, cfg);
    nlohmann::ordered_json out;
    out["before"] = {{"price", before}, {"explanation", to_json(e_before)}};
    out["after"] = {{"price", after}, {"explanation", to_json(e_after)}};
    out["delta"] = after - before;
    return Response{200, out.dump()};
  });
}

std::shared_ptr<PricingService::StreamState> PricingService::stream(
    const std::string& stream_id) {
  std::lock_guard lock(streams_mutex_);
  auto& slot = streams_[stream_id];
  if (!slot) slot = std::make_shared<StreamState>();
  return slot;
}

namespace {

// Caller holds state.mutex.
template <typename State>
void load_stream(State& state, const fs::path& file,
                 const std::vector<std::string>& default_columns) {
  if (state.loaded) return;
  state.columns = default_columns;
  if (fs::exists(file)) {
    const CsvTable t = parse_csv_table(read_file(file));
    if (t.header.empty() || t.header.front() != "seq") {
      throw Error(ErrorKind::kIo, fmt::format("corrupt stream file '{}'", file.string()));
    }
    state.columns.assign(t.header.begin() + 1, t.header.end());
    for (std::size_t r = 0; r < t.rows.rows(); ++r) {
      const auto seq = static_cast<std::uint64_t>(t.rows(r, 0));
      std::vector<double> values(t.rows.row(r).begin() + 1, t.rows.row(r).end());
      state.rows.emplace_back(seq, std::move(values));
      state.seen.insert(seq);
    }
  }
  state.loaded = true;
}

template <typename State>
std::string stream_csv(const State& state) {
  CsvTable t;
  t.header.push_back("seq");
  t.header.insert(t.header.end(), state.columns.begin(), state.columns.end());
  t.rows = Matrix(state.rows.size(), t.header.size());
  for (std::size_t r = 0; r < state.rows.size(); ++r) {
    t.rows(r, 0) = static_cast<double>(state.rows[r].first);
    for (std::size_t c = 0; c < state.rows[r].second.size(); ++c) {
      t.rows(r, c + 1) = state.rows[r].second[c];
    }
  }
  return format_csv_table(t);
}

}  // namespace

Response PricingService::ingest(std::string_view records) {
  return guarded([&] {
    const std::vector<wire::FramePacket> packets = wire::decode_records(records);
    const std::vector<std::string> columns = config_.extractor->feature_names();
    json results = json::array();
    std::map<std::string, std::int64_t> highest;

    // Group by stream so each stream is locked once, in arrival order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> by_stream;
    for (std::size_t i = 0; i < packets.size(); ++i) {
      auto [it, inserted] = by_stream.try_emplace(packets[i].stream_id);
      if (inserted) order.push_back(packets[i].stream_id);
      it->second.push_back(i);
    }
    std::vector<json> per_packet(packets.size());

    for (const std::string& sid : order) {
      const auto& indices = by_stream[sid];
      if (!valid_stream_id(sid)) {
        for (std::size_t i : indices) {
          per_packet[i] = {{"stream_id", sid}, {"seq", packets[i].seq},
                           {"status", "nack"}, {"reason", "invalid_stream_id"}};
        }
        continue;
      }
      auto state = stream(sid);
      std::lock_guard lock(state->mutex);
      const fs::path file = config_.data_root / "streams" / sid / "rows.csv";
      load_stream(*state, file, columns);
      bool dirty = false;
      for (std::size_t i : indices) {
        const wire::FramePacket& p = packets[i];
        json r = {{"stream_id", sid}, {"seq", p.seq}};
        if (!p.checksum_ok()) {
          r["status"] = "nack";
          r["reason"] = "checksum";
        } else if (state->seen.contains(p.seq)) {
          r["status"] = "ack";
          r["duplicate"] = true;
        } else {
          std::vector<double> row;
          std::string reason;
          try {
            if (p.kind == wire::PacketKind::kFrame) {
              row = config_.extractor->extract(edge::decode_pgm(p.payload));
            } else {
              row = wire::decode_features_payload(p.payload);
            }
            if (row.size() != state->columns.size()) {
              reason = "dimension";
            } else if (!std::all_of(row.begin(), row.end(),
                                    [](double v) { return std::isfinite(v); })) {
              reason = "non_finite";
            }
          } catch (const Error&) {
            reason = "payload";
          }
          if (reason.empty()) {
            state->rows.emplace_back(p.seq, std::move(row));
            state->seen.insert(p.seq);
            dirty = true;
            r["status"] = "ack";
            r["duplicate"] = false;
          } else {
            r["status"] = "nack";
            r["reason"] = reason;
          }
        }
        per_packet[i] = std::move(r);
      }
      if (dirty) write_file_atomic(file, stream_csv(*state));
      highest[sid] = state->highest_contiguous();
    }
    for (auto& r : per_packet) results.push_back(std::move(r));
    return Response{200, json{{"results", results}, {"highest_contiguous_seq", highest}}.dump()};
  });
}

Response PricingService::animals() {
  return guarded([&] {
    const std::vector<std::string> columns = config_.extractor->feature_names();
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(config_.data_root / "streams")) {
      if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    json rows = json::array();
    for (const auto& sid : ids) {
      if (!valid_stream_id(sid)) continue;
      auto state = stream(sid);
      std::lock_guard lock(state->mutex);
      load_stream(*state, config_.data_root / "streams" / sid / "rows.csv", columns);
      for (const auto& [seq, values] : state->rows) {
        json features = json::object();
        for (std::size_t c = 0; c < values.size() && c < state->columns.size(); ++c) {
          features[state->columns[c]] = values[c];
        }
        rows.push_back({{"stream_id", sid}, {"seq", seq}, {"features", features}});
      }
    }
    return Response{200, json{{"animals", rows}}.dump()};
  });
}

// ---------------------------------------------------------------------------
// HTTP adapter

struct HttpServer::Impl {
  explicit Impl(PricingService& s) : service(s) {}

  PricingService& service;
  httplib::Server server;
  std::thread thread;
};

namespace {

void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(PricingService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  PricingService& s = impl_->service;
  svr.Get("/health", [&s](const httplib::Request&, httplib::Response& res) {
    reply(res, s.health());
  });
  svr.Post("/datasets", [&s](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.upload_dataset(req.body));
  });
  svr.Post("/models", [&s](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.train(req.body));
  });
  svr.Get(R"(/models/([^/]+))", [&s](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.get_model(req.matches[1].str()));
  });
  svr.Post(R"(/models/([^/]+)/predict)",
           [&s](const httplib::Request& req, httplib::Response& res) {
             reply(res, s.predict(req.matches[1].str(), req.body));
           });
  svr.Post(R"(/models/([^/]+)/explain)",
           [&s](const httplib::Request& req, httplib::Response& res) {
             reply(res, s.explain(req.matches[1].str(), req.body));
           });
  svr.Post(R"(/models/([^/]+)/whatif)",
           [&s](const httplib::Request& req, httplib::Response& res) {
             reply(res, s.whatif(req.matches[1].str(), req.body));
           });
  svr.Post("/ingest/frames", [&s](const httplib::Request& req, httplib::Response& res) {
    reply(res, s.ingest(req.body));
  });
  svr.Get("/animals", [&s](const httplib::Request&, httplib::Response& res) {
    reply(res, s.animals());
  });
  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const ApiCode code = res.status == 404 ? ApiCode::kNotFound
                         : res.status >= 500 ? ApiCode::kInternal
                                             : ApiCode::kBadRequest;
    const Response r = api_error(code, fmt::format("no route for {} {}", req.method, req.path));
    res.set_content(r.body, r.content_type);
  });
  svr.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unhandled exception";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        } catch (...) {
        }
        reply(res, api_error(ApiCode::kInternal, what));
      });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  port_ = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) {
    throw Error(ErrorKind::kIo, fmt::format("cannot bind {}:{}", host, port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  while (!svr.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  return port_;
}

void HttpServer::run(const std::string& host, int port) {
  auto& svr = impl_->server;
  port_ = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) {
    throw Error(ErrorKind::kIo, fmt::format("cannot bind {}:{}", host, port));
  }
  svr.listen_after_bind();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace martlens::service
