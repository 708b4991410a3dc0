#pragma once

// Hand-assembled pcap, Ethernet, IPv4, TCP and UDP bytes. These builders
// follow the wire layouts directly and share no code with the library, so
// they serve as an independent oracle for the parser.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fixtures {

using Bytes = std::vector<std::uint8_t>;

inline void put8(Bytes& b, std::uint8_t v) { b.push_back(v); }
inline void put16be(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}
inline void put32be(Bytes& b, std::uint32_t v) {
  put16be(b, static_cast<std::uint16_t>(v >> 16));
  put16be(b, static_cast<std::uint16_t>(v));
}
inline void put16le(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put32le(Bytes& b, std::uint32_t v) {
  put16le(b, static_cast<std::uint16_t>(v));
  put16le(b, static_cast<std::uint16_t>(v >> 16));
}

inline void put32(Bytes& b, std::uint32_t v, bool big_endian) { big_endian ? put32be(b, v) : put32le(b, v); }
inline void put16(Bytes& b, std::uint16_t v, bool big_endian) { big_endian ? put16be(b, v) : put16le(b, v); }

/// 24-byte global header; `big_endian` writes the magic as a1 b2 c3 d4.
inline Bytes global_header(bool big_endian, std::uint32_t magic = 0xa1b2c3d4) {
  Bytes b;
  put32(b, magic, big_endian);
  put16(b, 2, big_endian);
  put16(b, 4, big_endian);
  put32(b, 0, big_endian);      // thiszone
  put32(b, 0, big_endian);      // sigfigs
  put32(b, 65535, big_endian);  // snaplen
  put32(b, 1, big_endian);      // LINKTYPE_ETHERNET
  return b;
}

inline void record(Bytes& file, bool big_endian, std::uint32_t ts_sec, std::uint32_t ts_usec, const Bytes& frame,
                   std::uint32_t incl_len_override = 0) {
  const auto incl = incl_len_override ? incl_len_override : static_cast<std::uint32_t>(frame.size());
  put32(file, ts_sec, big_endian);
  put32(file, ts_usec, big_endian);
  put32(file, incl, big_endian);
  put32(file, static_cast<std::uint32_t>(frame.size()), big_endian);
  file.insert(file.end(), frame.begin(), frame.end());
}

inline void ethernet(Bytes& f, std::uint16_t ethertype) {
  for (std::uint8_t m : {0x00, 0x11, 0x22, 0x33, 0x44, 0x55}) f.push_back(m);  // dst MAC
  for (std::uint8_t m : {0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb}) f.push_back(m);  // src MAC
  put16be(f, ethertype);
}

inline void ipv4_header(Bytes& f, std::uint16_t total_len, std::uint8_t proto, std::uint32_t src, std::uint32_t dst,
                        std::uint16_t flags_frag = 0x4000) {
  put8(f, 0x45);  // version 4, IHL 5
  put8(f, 0);
  put16be(f, total_len);
  put16be(f, 0x1234);  // identification
  put16be(f, flags_frag);
  put8(f, 64);  // TTL
  put8(f, proto);
  put16be(f, 0);  // checksum is not validated by the parser
  put32be(f, src);
  put32be(f, dst);
}

inline void pad_to_60(Bytes& f) {
  while (f.size() < 60) f.push_back(0);
}

inline Bytes udp_frame(std::uint32_t src, std::uint16_t sport, std::uint32_t dst, std::uint16_t dport,
                       std::string_view payload) {
  Bytes f;
  ethernet(f, 0x0800);
  const auto udp_len = static_cast<std::uint16_t>(8 + payload.size());
  ipv4_header(f, static_cast<std::uint16_t>(20 + udp_len), 17, src, dst);
  put16be(f, sport);
  put16be(f, dport);
  put16be(f, udp_len);
  put16be(f, 0);
  f.insert(f.end(), payload.begin(), payload.end());
  pad_to_60(f);
  return f;
}

/// TCP segment with `option_words` 32-bit words of NOP options.
inline Bytes tcp_frame(std::uint32_t src, std::uint16_t sport, std::uint32_t dst, std::uint16_t dport,
                       std::string_view payload, std::uint8_t option_words = 0) {
  Bytes f;
  ethernet(f, 0x0800);
  const std::size_t hdr = 20 + 4 * option_words;
  ipv4_header(f, static_cast<std::uint16_t>(20 + hdr + payload.size()), 6, src, dst);
  put16be(f, sport);
  put16be(f, dport);
  put32be(f, 1000);  // seq
  put32be(f, 0);     // ack
  put8(f, static_cast<std::uint8_t>((5 + option_words) << 4));
  put8(f, 0x18);  // PSH|ACK
  put16be(f, 65535);
  put16be(f, 0);
  put16be(f, 0);
  for (std::size_t i = 0; i < 4u * option_words; ++i) put8(f, 0x01);
  f.insert(f.end(), payload.begin(), payload.end());
  pad_to_60(f);
  return f;
}

inline Bytes arp_frame() {
  Bytes f;
  ethernet(f, 0x0806);
  for (int i = 0; i < 28; ++i) f.push_back(static_cast<std::uint8_t>(i));
  pad_to_60(f);
  return f;
}

inline Bytes icmp_frame(std::uint32_t src, std::uint32_t dst) {
  Bytes f;
  ethernet(f, 0x0800);
  ipv4_header(f, 28, 1, src, dst);
  for (std::uint8_t b : {8, 0, 0, 0, 0, 1, 0, 1}) f.push_back(b);
  pad_to_60(f);
  return f;
}

constexpr std::uint32_t ip(int a, int b, int c, int d) {
  return (static_cast<std::uint32_t>(a) << 24) | (static_cast<std::uint32_t>(b) << 16) |
         (static_cast<std::uint32_t>(c) << 8) | static_cast<std::uint32_t>(d);
}

/// Three flows: a UDP exchange, a TCP exchange, and one more UDP packet on a
/// different port; six records in little-endian order.
inline Bytes three_flow_pcap() {
  Bytes file = global_header(false);
  const auto a = ip(10, 0, 0, 1), b = ip(10, 0, 0, 2), c = ip(192, 168, 1, 9);
  record(file, false, 1000, 0, udp_frame(a, 5000, b, 53, "query"));
  record(file, false, 1000, 10, tcp_frame(a, 40000, c, 443, "hello"));
  record(file, false, 1000, 20, udp_frame(b, 53, a, 5000, "answer"));
  record(file, false, 1000, 30, tcp_frame(c, 443, a, 40000, "world!"));
  record(file, false, 1000, 40, udp_frame(a, 5001, b, 53, "x"));
  record(file, false, 1000, 50, tcp_frame(a, 40000, c, 443, ""));
  return file;
}

}  // namespace fixtures
