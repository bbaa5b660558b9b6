#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "martlens/edge_sim.hpp"
#include "martlens/error.hpp"
#include "martlens/lime.hpp"
#include "martlens/model_io.hpp"
#include "martlens/wire.hpp"

namespace martlens::service {

inline constexpr std::string_view kDataRootEnv = "MARTLENS_DATA_ROOT";

enum class ApiCode { kBadRequest, kNotFound, kConflict, kUnprocessable, kInternal };
std::string_view api_code_name(ApiCode code);
int http_status(ApiCode code);

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// {"error": {"code": ..., "message": ..., "detail": ...}}
Response api_error(ApiCode code, std::string_view message,
                   const nlohmann::json& detail = nullptr);

struct ServiceConfig {
  std::filesystem::path data_root;
  lime::ExplainerConfig explainer;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 1;
  int n_bins = discretize::kDefaultBins;
  std::shared_ptr<const edge::FeatureExtractor> extractor;  // null: synthetic
};

// Transport-independent request handlers. On-disk layout under data_root:
//   datasets/<id>.csv, models/<id>.json (+ <id>.meta.json),
//   streams/<stream_id>/rows.csv
// All writes go through temp-file + rename.
class PricingService {
 public:
  explicit PricingService(ServiceConfig config);
  ~PricingService();

  PricingService(const PricingService&) = delete;
  PricingService& operator=(const PricingService&) = delete;

  Response health() const;
  Response upload_dataset(std::string_view csv);
  Response train(std::string_view body);
  Response get_model(std::string_view model_id);
  Response predict(std::string_view model_id, std::string_view body);
  Response explain(std::string_view model_id, std::string_view body);
  Response whatif(std::string_view model_id, std::string_view body);
  Response ingest(std::string_view records);
  Response animals();

  const ServiceConfig& config() const { return config_; }

 private:
  struct ModelEntry;
  struct StreamState;

  std::shared_ptr<const ModelEntry> load_model(std::string_view model_id);
  std::shared_ptr<StreamState> stream(const std::string& stream_id);

  ServiceConfig config_;
  std::shared_mutex models_mutex_;
  std::map<std::string, std::shared_ptr<const ModelEntry>, std::less<>> models_;
  std::mutex write_mutex_;
  std::mutex streams_mutex_;
  std::map<std::string, std::shared_ptr<StreamState>, std::less<>> streams_;
};

// Binds PricingService onto an HTTP/1.1 listener running on its own thread.
class HttpServer {
 public:
  explicit HttpServer(PricingService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread or a signal.
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

// ---------------------------------------------------------------------------
// Edge-side delivery

struct TransportReply {
  int status = 0;
  std::string body;
};

// Posts one body of length-prefixed records to the ingestion endpoint;
// nullopt on transport failure.
using Transport = std::function<std::optional<TransportReply>(const std::string&)>;

Transport http_transport(const std::string& endpoint);

struct TransmitOptions {
  std::size_t batch_size = 8;
  int max_attempts = 4;
  int initial_backoff_ms = 20;
  int max_backoff_ms = 500;
};

struct Rejection {
  std::string stream_id;
  std::uint64_t seq = 0;
  ErrorKind kind = ErrorKind::kChecksumRejected;
  std::string reason;
};

struct DeliveryReport {
  std::size_t sent = 0;
  std::size_t acked = 0;
  std::size_t failed = 0;
  std::size_t duplicates = 0;  // acked as already stored
  std::size_t attempts = 0;    // HTTP requests issued, retries included
  std::vector<Rejection> rejected;
  std::map<std::string, std::int64_t> highest_contiguous_seq;

  nlohmann::json to_json() const;
};

// In-order, at-least-once delivery in batches. Transient failures (no
// reply or 5xx) are retried with doubling backoff; exhausting the budget
// throws Error(kEndpointUnreachable). A 4xx reply throws Error(kBadFraming).
// Per-packet NACKs are reported, not thrown.
DeliveryReport transmit(std::span<const wire::FramePacket> packets,
                        const Transport& transport,
                        const TransmitOptions& options = {});
DeliveryReport transmit(std::span<const wire::FramePacket> packets,
                        const std::string& endpoint,
                        const TransmitOptions& options = {});

}  // namespace martlens::service
