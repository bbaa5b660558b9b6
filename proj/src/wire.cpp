#include "martlens/wire.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "martlens/error.hpp"
#include "martlens/hashing.hpp"
#include "martlens/mart_data.hpp"

namespace martlens::wire {

std::string_view kind_name(PacketKind kind) {
  return kind == PacketKind::kFrame ? "frame" : "features";
}

bool FramePacket::checksum_ok() const { return martlens::crc32(payload) == crc32; }

FramePacket make_frame_packet(std::string stream_id, std::uint64_t seq,
                              const edge::Frame& frame) {
  FramePacket p;
  p.stream_id = std::move(stream_id);
  p.seq = seq;
  p.kind = PacketKind::kFrame;
  p.payload = edge::encode_pgm(frame);
  p.crc32 = martlens::crc32(p.payload);
  return p;
}

FramePacket make_features_packet(std::string stream_id, std::uint64_t seq,
                                 std::span<const double> features) {
  FramePacket p;
  p.stream_id = std::move(stream_id);
  p.seq = seq;
  p.kind = PacketKind::kFeatures;
  p.payload = "[";
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i) p.payload += ',';
    p.payload += format_number(features[i]);
  }
  p.payload += "]";
  p.crc32 = martlens::crc32(p.payload);
  return p;
}

std::vector<double> decode_features_payload(std::string_view payload) {
  try {
    return nlohmann::json::parse(payload).get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, fmt::format("bad feature payload: {}", e.what()));
  }
}

std::vector<FramePacket> packetize(std::string_view stream_id,
                                   const std::vector<edge::Frame>& frames) {
  std::vector<FramePacket> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.push_back(make_frame_packet(std::string(stream_id), i, frames[i]));
  }
  return out;
}

std::vector<FramePacket> packetize_features(std::string_view stream_id,
                                            const std::vector<edge::Frame>& frames,
                                            const edge::FeatureExtractor& extractor) {
  std::vector<FramePacket> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::vector<double> f = extractor.extract(frames[i]);
    out.push_back(make_features_packet(std::string(stream_id), i, f));
  }
  return out;
}

std::string encode_record(const FramePacket& packet) {
  const auto* raw = reinterpret_cast<const std::uint8_t*>(packet.payload.data());
  const nlohmann::json j = {
      {"stream_id", packet.stream_id},
      {"seq", packet.seq},
      {"kind", kind_name(packet.kind)},
      {"payload_base64", base64_encode({raw, packet.payload.size()})},
      {"crc32", packet.crc32},
  };
  const std::string body = j.dump();
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out += static_cast<char>((n >> 24) & 0xFF);
  out += static_cast<char>((n >> 16) & 0xFF);
  out += static_cast<char>((n >> 8) & 0xFF);
  out += static_cast<char>(n & 0xFF);
  out += body;
  return out;
}

std::string encode_records(std::span<const FramePacket> packets) {
  std::string out;
  for (const auto& p : packets) out += encode_record(p);
  return out;
}

std::vector<FramePacket> decode_records(std::string_view bytes) {
  std::vector<FramePacket> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 4) {
      throw Error(ErrorKind::kBadFraming, "truncated record length");
    }
    const auto b = [&](std::size_t k) {
      return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + k]));
    };
    const std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
    pos += 4;
    if (bytes.size() - pos < n) {
      throw Error(ErrorKind::kBadFraming,
                  fmt::format("record {} declares {} bytes, {} remain", out.size(), n,
                              bytes.size() - pos));
    }
    const std::string_view body = bytes.substr(pos, n);
    pos += n;
    FramePacket p;
    try {
      const nlohmann::json j = nlohmann::json::parse(body);
      p.stream_id = j.at("stream_id").get<std::string>();
      p.seq = j.at("seq").get<std::uint64_t>();
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "frame") {
        p.kind = PacketKind::kFrame;
      } else if (kind == "features") {
        p.kind = PacketKind::kFeatures;
      } else {
        throw Error(ErrorKind::kBadFraming, fmt::format("unknown kind '{}'", kind));
      }
      p.payload = base64_decode(j.at("payload_base64").get<std::string>());
      p.crc32 = j.at("crc32").get<std::uint32_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kBadFraming,
                  fmt::format("record {}: {}", out.size(), e.what()));
    }
    if (p.stream_id.empty()) {
      throw Error(ErrorKind::kBadFraming, "empty stream_id");
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace martlens::wire
