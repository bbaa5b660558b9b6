#include <algorithm>
#include <chrono>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"
#include "martlens/service.hpp"

namespace martlens::service {

using nlohmann::json;

Transport http_transport(const std::string& endpoint) {
  std::string base = endpoint;
  std::string path = "/ingest/frames";
  const auto scheme = endpoint.find("://");
  const auto slash = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash != std::string::npos) {
    base = endpoint.substr(0, slash);
    if (slash + 1 < endpoint.size()) path = endpoint.substr(slash);
  }
  auto client = std::make_shared<httplib::Client>(base);
  client->set_connection_timeout(2, 0);
  client->set_read_timeout(30, 0);
  auto mutex = std::make_shared<std::mutex>();
  return [client, mutex, path](const std::string& body) -> std::optional<TransportReply> {
    std::lock_guard lock(*mutex);
    auto res = client->Post(path, body, "application/octet-stream");
    if (!res) return std::nullopt;
    return TransportReply{res->status, res->body};
  };
}

json DeliveryReport::to_json() const {
  json rej = json::array();
  for (const auto& r : rejected) {
    rej.push_back({{"stream_id", r.stream_id},
                   {"seq", r.seq},
                   {"kind", error_kind_name(r.kind)},
                   {"reason", r.reason}});
  }
  return {{"sent", sent},       {"acked", acked},       {"failed", failed},
          {"duplicates", duplicates}, {"attempts", attempts}, {"rejected", rej},
          {"highest_contiguous_seq", highest_contiguous_seq}};
}

DeliveryReport transmit(std::span<const wire::FramePacket> packets,
                        const Transport& transport, const TransmitOptions& options) {
  if (options.batch_size == 0 || options.max_attempts < 1) {
    throw Error(ErrorKind::kInvalidConfig, "batch_size and max_attempts must be positive");
  }
  DeliveryReport report;
  for (std::size_t start = 0; start < packets.size(); start += options.batch_size) {
    const auto batch = packets.subspan(start, std::min(options.batch_size, packets.size() - start));
    const std::string body = wire::encode_records(batch);

    std::optional<TransportReply> reply;
    int backoff = options.initial_backoff_ms;
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
      ++report.attempts;
      reply = transport(body);
      if (reply && reply->status < 500) break;
      if (attempt == options.max_attempts) {
        throw Error(ErrorKind::kEndpointUnreachable,
                    fmt::format("ingestion endpoint unreachable after {} attempts ({})",
                                options.max_attempts,
                                reply ? fmt::format("HTTP {}", reply->status)
                                      : std::string("no reply")));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff = std::min(backoff * 2, options.max_backoff_ms);
    }
    if (reply->status >= 400) {
      throw Error(ErrorKind::kBadFraming,
                  fmt::format("ingestion endpoint rejected batch: HTTP {} {}", reply->status,
                              reply->body));
    }
    report.sent += batch.size();

    json ack;
    try {
      ack = json::parse(reply->body);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kBadFraming, fmt::format("unreadable ack: {}", e.what()));
    }
    for (const auto& r : ack.at("results")) {
      if (r.at("status") == "ack") {
        ++report.acked;
        if (r.value("duplicate", false)) ++report.duplicates;
      } else {
        ++report.failed;
        const std::string reason = r.value("reason", std::string("rejected"));
        report.rejected.push_back(
            {r.at("stream_id").get<std::string>(), r.at("seq").get<std::uint64_t>(),
             reason == "checksum" ? ErrorKind::kChecksumRejected : ErrorKind::kInvalidArgument,
             reason});
      }
    }
    for (const auto& [sid, h] : ack.at("highest_contiguous_seq").items()) {
      report.highest_contiguous_seq[sid] = h.get<std::int64_t>();
    }
  }
  return report;
}

DeliveryReport transmit(std::span<const wire::FramePacket> packets,
                        const std::string& endpoint, const TransmitOptions& options) {
  return transmit(packets, http_transport(endpoint), options);
}

}  // namespace martlens::service
