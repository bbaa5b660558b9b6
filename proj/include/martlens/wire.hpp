#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "martlens/edge_sim.hpp"

namespace martlens::wire {

enum class PacketKind { kFrame, kFeatures };
std::string_view kind_name(PacketKind kind);

// Payload is a PGM (P5) file for frames and a JSON array of numbers for
// feature vectors. `crc32` covers the raw payload bytes.
struct FramePacket {
  std::string stream_id;
  std::uint64_t seq = 0;
  PacketKind kind = PacketKind::kFrame;
  std::string payload;
  std::uint32_t crc32 = 0;

  bool checksum_ok() const;

  friend bool operator==(const FramePacket&, const FramePacket&) = default;
};

FramePacket make_frame_packet(std::string stream_id, std::uint64_t seq,
                              const edge::Frame& frame);
FramePacket make_features_packet(std::string stream_id, std::uint64_t seq,
                                 std::span<const double> features);
std::vector<double> decode_features_payload(std::string_view payload);

// Sequential packets (seq 0, 1, ...) for one stream.
std::vector<FramePacket> packetize(std::string_view stream_id,
                                   const std::vector<edge::Frame>& frames);
std::vector<FramePacket> packetize_features(
    std::string_view stream_id, const std::vector<edge::Frame>& frames,
    const edge::FeatureExtractor& extractor);

// One record: 4-byte big-endian length N, then N bytes of compact JSON
// {"crc32":..,"kind":..,"payload_base64":..,"seq":..,"stream_id":..}
// (keys sorted).
std::string encode_record(const FramePacket& packet);
std::string encode_records(std::span<const FramePacket> packets);
// Throws Error(kBadFraming) on truncated lengths, malformed JSON or missing
// fields. Checksums are not verified here.
std::vector<FramePacket> decode_records(std::string_view bytes);

}  // namespace martlens::wire
