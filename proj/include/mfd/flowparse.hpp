#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfd/labels.hpp"

namespace mfd {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::size_t kMaxPayload = 1500;
inline constexpr double kDefaultIdleTimeoutSec = 64.0;

/// One record of a classic pcap file; `data` is the link-layer frame.
struct RawPacket {
  std::int64_t ts_micros = 0;
  std::uint32_t captured_len = 0;
  std::uint32_t orig_len = 0;
  Bytes data;

  bool operator==(const RawPacket&) const = default;
};

enum class Protocol : std::uint8_t { TCP = 6, UDP = 17 };

std::string_view protocol_name(Protocol p);

struct ParsedPacket {
  std::int64_t ts_micros = 0;
  std::uint32_t src_ip = 0;  // host byte order
  std::uint32_t dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Protocol protocol = Protocol::TCP;
  Bytes payload;  // transport payload, at most kMaxPayload bytes

  std::size_t payload_len() const { return payload.size(); }
  bool operator==(const ParsedPacket&) const = default;
};

/// Canonical bidirectional 5-tuple: the (ip, port) endpoint that compares
/// lower is always stored first.
struct FlowKey {
  std::uint32_t lo_ip = 0;
  std::uint16_t lo_port = 0;
  std::uint32_t hi_ip = 0;
  std::uint16_t hi_port = 0;
  Protocol protocol = Protocol::TCP;

  auto operator<=>(const FlowKey&) const = default;

  /// "10.0.0.1:1234-10.0.0.2:80/TCP"
  std::string to_string() const;
  static FlowKey parse(std::string_view text);  // throws BadFormat
};

FlowKey canonical_key(const ParsedPacket& p);
/// True when the packet travels from the key's lower endpoint to its upper one.
bool travels_low_to_high(const ParsedPacket& p);

std::string ipv4_to_string(std::uint32_t ip);
std::uint32_t parse_ipv4(std::string_view text);  // throws BadFormat

enum class Direction : std::uint8_t { Forward, Reverse };

struct FlowRecord {
  FlowKey key;
  std::vector<ParsedPacket> packets;  // nonempty, ordered by ts_micros
  std::vector<Direction> directions;  // relative to packets.front()
  ClassLabel label = ClassLabel::Benign;

  std::int64_t first_ts() const { return packets.front().ts_micros; }
  std::int64_t last_ts() const { return packets.back().ts_micros; }
  std::int64_t duration_micros() const { return last_ts() - first_ts(); }

  bool operator==(const FlowRecord&) const = default;
};

/// Builds a well-formed FlowRecord from time-ordered packets that all share
/// one canonical key. Throws BadFormat otherwise.
FlowRecord make_flow(std::vector<ParsedPacket> packets, ClassLabel label);

// ---- pcap ----------------------------------------------------------------

struct PcapHeader {
  bool swapped = false;  // file written in the opposite byte order
  std::uint16_t version_major = 2;
  std::uint16_t version_minor = 4;
  std::int32_t thiszone = 0;
  std::uint32_t sigfigs = 0;
  std::uint32_t snaplen = 65535;
  std::uint32_t network = 1;  // 1 = Ethernet
};

PcapHeader parse_pcap_header(ByteView bytes);
std::vector<RawPacket> parse_pcap(ByteView bytes);

/// Serializes packets as a classic pcap file; `big_endian` picks the
/// on-disk byte order (magic a1b2c3d4 as read by a big-endian host).
Bytes write_pcap(std::span<const RawPacket> packets, bool big_endian = false);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, ByteView bytes);

// ---- frames --------------------------------------------------------------

struct DecodeStats {
  std::size_t decoded = 0;
  std::size_t non_ipv4 = 0;
  std::size_t unsupported_protocol = 0;
  std::size_t fragments_dropped = 0;
  std::size_t payloads_truncated = 0;
};

/// Ethernet-II / IPv4 / {TCP, UDP} only; anything else yields nullopt.
std::optional<ParsedPacket> decode_frame(const RawPacket& raw, DecodeStats* stats = nullptr);

/// Inverse of decode_frame for synthetic captures: Ethernet-II + IPv4
/// (no options) + UDP or TCP (data offset 5), padded to the 60-byte minimum.
RawPacket encode_frame(const ParsedPacket& p);

// ---- flows ---------------------------------------------------------------

std::vector<FlowRecord> assemble_flows(std::vector<ParsedPacket> packets,
                                       double idle_timeout_sec = kDefaultIdleTimeoutSec);

/// Keeps the packets with ts <= first_ts + fraction * duration.
FlowRecord truncate_flow(const FlowRecord& flow, double fraction);

// Flow JSONL: one object per line
//   {flow_key, label, first_ts, duration_us, initiator, packets:[{ts_us, dir, len, payload_b64}]}
// `initiator` is "lo" or "hi": which key endpoint sent the first packet.
void write_flow_jsonl(std::ostream& out, std::span<const FlowRecord> flows);
std::vector<FlowRecord> read_flow_jsonl(std::istream& in);

std::string base64_encode(ByteView bytes);
Bytes base64_decode(std::string_view text);  // throws BadFormat

}  // namespace mfd
