#include "mfd/flowparse.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mfd/error.hpp"

namespace mfd {

namespace {

constexpr std::uint32_t kMagic = 0xa1b2c3d4;
constexpr std::uint32_t kMagicSwapped = 0xd4c3b2a1;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;
constexpr std::size_t kEthernetLen = 14;
constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;

/// Reads fixed-width integers in a chosen byte order from a byte span.
class Reader {
public:
  Reader(ByteView bytes, bool big_endian) : bytes_(bytes), big_endian_(big_endian) {}

  std::uint32_t u32(std::size_t at) const {
    std::uint32_t v = 0;
    if (big_endian_) {
      for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | bytes_[at + i];
    } else {
      for (std::size_t i = 4; i-- > 0;) v = (v << 8) | bytes_[at + i];
    }
    return v;
  }

  std::uint16_t u16(std::size_t at) const {
    return big_endian_ ? static_cast<std::uint16_t>((bytes_[at] << 8) | bytes_[at + 1])
                       : static_cast<std::uint16_t>((bytes_[at + 1] << 8) | bytes_[at]);
  }

private:
  ByteView bytes_;
  bool big_endian_;
};

std::uint16_t be16(ByteView b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t be32(ByteView b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put16(Bytes& out, std::uint16_t v, bool big_endian) {
  if (big_endian) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
  } else {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  }
}

void put32(Bytes& out, std::uint32_t v, bool big_endian) {
  if (big_endian) {
    put16(out, static_cast<std::uint16_t>(v >> 16), true);
    put16(out, static_cast<std::uint16_t>(v), true);
  } else {
    put16(out, static_cast<std::uint16_t>(v), false);
    put16(out, static_cast<std::uint16_t>(v >> 16), false);
  }
}

bool detect_big_endian(ByteView bytes) {
  const std::uint32_t magic = Reader(bytes, false).u32(0);
  if (magic == kMagic) return false;
  if (magic == kMagicSwapped) return true;
  std::ostringstream msg;
  msg << "unknown pcap magic 0x" << std::hex << magic;
  throw Error(Errc::BadMagic, msg.str());
}

Error malformed(const std::string& why) { return Error(Errc::MalformedFrame, why); }

std::uint16_t ipv4_checksum(ByteView header) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < header.size(); i += 2) sum += be16(header, i);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace

std::string_view protocol_name(Protocol p) { return p == Protocol::TCP ? "TCP" : "UDP"; }

// ---- addresses and keys ----------------------------------------------------

std::string ipv4_to_string(std::uint32_t ip) {
  return std::to_string(ip >> 24) + '.' + std::to_string((ip >> 16) & 0xff) + '.' +
         std::to_string((ip >> 8) & 0xff) + '.' + std::to_string(ip & 0xff);
}

std::uint32_t parse_ipv4(std::string_view text) {
  std::uint32_t ip = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{} || v > 255 || (octet < 3 && (next == end || *next != '.'))) {
      throw Error(Errc::BadFormat, "bad IPv4 address '" + std::string(text) + "'");
    }
    ip = (ip << 8) | v;
    p = octet < 3 ? next + 1 : next;
  }
  if (p != end) throw Error(Errc::BadFormat, "bad IPv4 address '" + std::string(text) + "'");
  return ip;
}

bool travels_low_to_high(const ParsedPacket& p) {
  return std::pair(p.src_ip, p.src_port) <= std::pair(p.dst_ip, p.dst_port);
}

FlowKey canonical_key(const ParsedPacket& p) {
  if (travels_low_to_high(p)) return {p.src_ip, p.src_port, p.dst_ip, p.dst_port, p.protocol};
  return {p.dst_ip, p.dst_port, p.src_ip, p.src_port, p.protocol};
}

std::string FlowKey::to_string() const {
  return ipv4_to_string(lo_ip) + ':' + std::to_string(lo_port) + '-' + ipv4_to_string(hi_ip) +
         ':' + std::to_string(hi_port) + '/' + std::string(protocol_name(protocol));
}

FlowKey FlowKey::parse(std::string_view text) {
  const auto bad = [&] { return Error(Errc::BadFormat, "bad flow key '" + std::string(text) + "'"); };
  const auto slash = text.rfind('/');
  const auto dash = text.find('-');
  if (slash == std::string_view::npos || dash == std::string_view::npos || dash > slash) throw bad();
  const auto endpoint = [&](std::string_view ep, std::uint32_t& ip, std::uint16_t& port) {
    const auto colon = ep.find(':');
    if (colon == std::string_view::npos) throw bad();
    ip = parse_ipv4(ep.substr(0, colon));
    const auto digits = ep.substr(colon + 1);
    unsigned v = 0;
    auto [next, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc{} || next != digits.data() + digits.size() || v > 65535) throw bad();
    port = static_cast<std::uint16_t>(v);
  };
  FlowKey key;
  endpoint(text.substr(0, dash), key.lo_ip, key.lo_port);
  endpoint(text.substr(dash + 1, slash - dash - 1), key.hi_ip, key.hi_port);
  const auto proto = text.substr(slash + 1);
  if (proto == "TCP") {
    key.protocol = Protocol::TCP;
  } else if (proto == "UDP") {
    key.protocol = Protocol::UDP;
  } else {
    throw bad();
  }
  return key;
}

FlowRecord make_flow(std::vector<ParsedPacket> packets, ClassLabel label) {
  if (packets.empty()) throw Error(Errc::BadFormat, "flow without packets");
  FlowRecord flow;
  flow.key = canonical_key(packets.front());
  flow.label = label;
  const bool initiator_low = travels_low_to_high(packets.front());
  flow.directions.reserve(packets.size());
  std::int64_t prev = packets.front().ts_micros;
  for (const auto& p : packets) {
    if (canonical_key(p) != flow.key) throw Error(Errc::BadFormat, "packet does not belong to flow");
    if (p.ts_micros < prev) throw Error(Errc::BadFormat, "flow timestamps decrease");
    prev = p.ts_micros;
    flow.directions.push_back(travels_low_to_high(p) == initiator_low ? Direction::Forward
                                                                      : Direction::Reverse);
  }
  flow.packets = std::move(packets);
  return flow;
}

// ---- pcap ------------------------------------------------------------------

PcapHeader parse_pcap_header(ByteView bytes) {
  if (bytes.size() < kGlobalHeaderLen) {
    throw Error(Errc::TruncatedHeader, "pcap global header needs 24 bytes, have " +
                                           std::to_string(bytes.size()));
  }
  const bool big = detect_big_endian(bytes);
  const Reader r(bytes, big);
  PcapHeader h;
  h.swapped = big;
  h.version_major = r.u16(4);
  h.version_minor = r.u16(6);
  h.thiszone = static_cast<std::int32_t>(r.u32(8));
  h.sigfigs = r.u32(12);
  h.snaplen = r.u32(16);
  h.network = r.u32(20);
  return h;
}

std::vector<RawPacket> parse_pcap(ByteView bytes) {
  const PcapHeader header = parse_pcap_header(bytes);
  const Reader r(bytes, header.swapped);
  std::vector<RawPacket> packets;
  std::size_t at = kGlobalHeaderLen;
  while (at < bytes.size()) {
    if (bytes.size() - at < kRecordHeaderLen) {
      throw Error(Errc::TruncatedHeader, "record header at offset " + std::to_string(at) +
                                             " cut short");
    }
    RawPacket pkt;
    const std::uint32_t ts_sec = r.u32(at);
    const std::uint32_t ts_usec = r.u32(at + 4);
    pkt.captured_len = r.u32(at + 8);
    pkt.orig_len = r.u32(at + 12);
    at += kRecordHeaderLen;
    if (pkt.captured_len > bytes.size() - at) {
      throw Error(Errc::TruncatedRecord, "record promises " + std::to_string(pkt.captured_len) +
                                             " bytes, " + std::to_string(bytes.size() - at) +
                                             " remain");
    }
    pkt.ts_micros = std::int64_t{ts_sec} * 1'000'000 + ts_usec;
    pkt.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                    bytes.begin() + static_cast<std::ptrdiff_t>(at + pkt.captured_len));
    at += pkt.captured_len;
    packets.push_back(std::move(pkt));
  }
  return packets;
}

Bytes write_pcap(std::span<const RawPacket> packets, bool big_endian) {
  Bytes out;
  put32(out, kMagic, big_endian);
  put16(out, 2, big_endian);
  put16(out, 4, big_endian);
  put32(out, 0, big_endian);
  put32(out, 0, big_endian);
  put32(out, 65535, big_endian);
  put32(out, 1, big_endian);
  for (const auto& p : packets) {
    put32(out, static_cast<std::uint32_t>(p.ts_micros / 1'000'000), big_endian);
    put32(out, static_cast<std::uint32_t>(p.ts_micros % 1'000'000), big_endian);
    put32(out, static_cast<std::uint32_t>(p.data.size()), big_endian);
    put32(out, p.orig_len, big_endian);
    out.insert(out.end(), p.data.begin(), p.data.end());
  }
  return out;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open '" + path + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, ByteView bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---- frames ----------------------------------------------------------------

std::optional<ParsedPacket> decode_frame(const RawPacket& raw, DecodeStats* stats) {
  DecodeStats scratch;
  DecodeStats& st = stats ? *stats : scratch;
  const ByteView frame(raw.data);
  if (frame.size() < kEthernetLen) throw malformed("frame shorter than an Ethernet header");
  if (be16(frame, 12) != kEtherTypeIpv4) {
    ++st.non_ipv4;
    return std::nullopt;
  }
  // Captures cut by snaplen may legitimately end before the IP datagram does.
  const bool snapped = raw.captured_len < raw.orig_len;

  ByteView ip = frame.subspan(kEthernetLen);
  if (ip.size() < 20) throw malformed("IPv4 header cut short");
  if ((ip[0] >> 4) != 4) throw malformed("IPv4 version field is not 4");
  const std::size_t ihl = std::size_t{ip[0] & 0x0fu} * 4;
  std::size_t total_len = be16(ip, 2);
  if (ihl < 20 || ihl > ip.size()) throw malformed("bad IPv4 header length");
  if (total_len < ihl) throw malformed("IPv4 total length below header length");
  if (total_len > ip.size()) {
    if (!snapped) throw malformed("IPv4 total length exceeds frame");
    total_len = ip.size();
  }

  const std::uint8_t proto = ip[9];
  if (proto != static_cast<std::uint8_t>(Protocol::TCP) &&
      proto != static_cast<std::uint8_t>(Protocol::UDP)) {
    ++st.unsupported_protocol;
    return std::nullopt;
  }
  if ((be16(ip, 6) & 0x1fff) != 0) {
    ++st.fragments_dropped;
    return std::nullopt;
  }

  ParsedPacket pkt;
  pkt.ts_micros = raw.ts_micros;
  pkt.src_ip = be32(ip, 12);
  pkt.dst_ip = be32(ip, 16);
  pkt.protocol = static_cast<Protocol>(proto);

  const ByteView seg = ip.subspan(ihl, total_len - ihl);
  ByteView payload;
  if (pkt.protocol == Protocol::UDP) {
    if (seg.size() < 8) throw malformed("UDP header cut short");
    std::size_t udp_len = be16(seg, 4);
    if (udp_len < 8) throw malformed("UDP length below header size");
    if (udp_len > seg.size()) {
      if (!snapped) throw malformed("UDP length exceeds IPv4 payload");
      udp_len = seg.size();
    }
    pkt.src_port = be16(seg, 0);
    pkt.dst_port = be16(seg, 2);
    payload = seg.subspan(8, udp_len - 8);
  } else {
    if (seg.size() < 20) throw malformed("TCP header cut short");
    const std::size_t data_offset = static_cast<std::size_t>(seg[12] >> 4) * 4;
    if (data_offset < 20 || data_offset > seg.size()) throw malformed("bad TCP data offset");
    pkt.src_port = be16(seg, 0);
    pkt.dst_port = be16(seg, 2);
    payload = seg.subspan(data_offset);
  }
  if (payload.size() > kMaxPayload) {
    ++st.payloads_truncated;
    payload = payload.first(kMaxPayload);
  }
  pkt.payload.assign(payload.begin(), payload.end());
  ++st.decoded;
  return pkt;
}

RawPacket encode_frame(const ParsedPacket& p) {
  const bool udp = p.protocol == Protocol::UDP;
  const std::size_t l4_len = (udp ? 8 : 20) + p.payload.size();
  const std::size_t ip_len = 20 + l4_len;

  Bytes f;
  f.reserve(std::max<std::size_t>(60, kEthernetLen + ip_len));
  const std::array<std::uint8_t, 12> macs = {0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01};
  f.insert(f.end(), macs.begin(), macs.end());
  put16(f, kEtherTypeIpv4, true);

  const std::size_t ip_at = f.size();
  f.push_back(0x45);
  f.push_back(0);
  put16(f, static_cast<std::uint16_t>(ip_len), true);
  put16(f, 0, true);       // identification
  put16(f, 0x4000, true);  // DF, offset 0
  f.push_back(64);
  f.push_back(static_cast<std::uint8_t>(p.protocol));
  put16(f, 0, true);
  put32(f, p.src_ip, true);
  put32(f, p.dst_ip, true);
  const std::uint16_t csum = ipv4_checksum(ByteView(f).subspan(ip_at, 20));
  f[ip_at + 10] = static_cast<std::uint8_t>(csum >> 8);
  f[ip_at + 11] = static_cast<std::uint8_t>(csum);

  put16(f, p.src_port, true);
  put16(f, p.dst_port, true);
  if (udp) {
    put16(f, static_cast<std::uint16_t>(l4_len), true);
    put16(f, 0, true);
  } else {
    put32(f, 0, true);  // seq
    put32(f, 0, true);  // ack
    f.push_back(5 << 4);
    f.push_back(0x18);  // PSH|ACK
    put16(f, 65535, true);
    put16(f, 0, true);
    put16(f, 0, true);
  }
  f.insert(f.end(), p.payload.begin(), p.payload.end());
  if (f.size() < 60) f.resize(60, 0);

  RawPacket raw;
  raw.ts_micros = p.ts_micros;
  raw.captured_len = static_cast<std::uint32_t>(f.size());
  raw.orig_len = raw.captured_len;
  raw.data = std::move(f);
  return raw;
}

// ---- flows -----------------------------------------------------------------

std::vector<FlowRecord> assemble_flows(std::vector<ParsedPacket> packets, double idle_timeout_sec) {
  std::stable_sort(packets.begin(), packets.end(),
                   [](const ParsedPacket& a, const ParsedPacket& b) { return a.ts_micros < b.ts_micros; });
  const auto timeout = static_cast<std::int64_t>(std::llround(idle_timeout_sec * 1e6));

  std::vector<std::vector<ParsedPacket>> groups;
  std::map<FlowKey, std::size_t> open;
  for (auto& p : packets) {
    const FlowKey key = canonical_key(p);
    auto it = open.find(key);
    if (it != open.end() && p.ts_micros - groups[it->second].back().ts_micros <= timeout) {
      groups[it->second].push_back(std::move(p));
      continue;
    }
    open[key] = groups.size();
    groups.emplace_back().push_back(std::move(p));
  }

  std::vector<FlowRecord> flows;
  flows.reserve(groups.size());
  for (auto& g : groups) flows.push_back(make_flow(std::move(g), ClassLabel::Benign));
  return flows;
}

FlowRecord truncate_flow(const FlowRecord& flow, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(Errc::InvalidFraction, "fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  const double horizon = fraction * static_cast<double>(flow.duration_micros());
  const std::int64_t first = flow.first_ts();
  std::size_t keep = 0;
  while (keep < flow.packets.size() &&
         static_cast<double>(flow.packets[keep].ts_micros - first) <= horizon) {
    ++keep;
  }
  FlowRecord out;
  out.key = flow.key;
  out.label = flow.label;
  out.packets.assign(flow.packets.begin(), flow.packets.begin() + static_cast<std::ptrdiff_t>(keep));
  out.directions.assign(flow.directions.begin(),
                        flow.directions.begin() + static_cast<std::ptrdiff_t>(keep));
  return out;
}

// ---- JSONL -----------------------------------------------------------------

void write_flow_jsonl(std::ostream& out, std::span<const FlowRecord> flows) {
  for (const auto& f : flows) {
    nlohmann::ordered_json j;
    j["flow_key"] = f.key.to_string();
    j["label"] = std::string(label_name(f.label));
    j["first_ts"] = f.first_ts();
    j["duration_us"] = f.duration_micros();
    j["initiator"] = travels_low_to_high(f.packets.front()) ? "lo" : "hi";
    auto& pkts = j["packets"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < f.packets.size(); ++i) {
      const auto& p = f.packets[i];
      pkts.push_back({{"ts_us", p.ts_micros},
                      {"dir", f.directions[i] == Direction::Forward ? "fwd" : "rev"},
                      {"len", p.payload.size()},
                      {"payload_b64", base64_encode(p.payload)}});
    }
    out << j.dump() << '\n';
  }
}

std::vector<FlowRecord> read_flow_jsonl(std::istream& in) {
  std::vector<FlowRecord> flows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const FlowKey key = FlowKey::parse(j.at("flow_key").get<std::string>());
      const auto label = parse_label(j.at("label").get<std::string>());
      if (!label) throw Error(Errc::BadFormat, "unknown label");
      const bool lo_first = j.value("initiator", std::string("lo")) == "lo";
      std::vector<ParsedPacket> packets;
      for (const auto& jp : j.at("packets")) {
        const bool fwd = jp.at("dir").get<std::string>() == "fwd";
        const bool from_lo = fwd == lo_first;
        ParsedPacket p;
        p.ts_micros = jp.at("ts_us").get<std::int64_t>();
        p.protocol = key.protocol;
        p.src_ip = from_lo ? key.lo_ip : key.hi_ip;
        p.src_port = from_lo ? key.lo_port : key.hi_port;
        p.dst_ip = from_lo ? key.hi_ip : key.lo_ip;
        p.dst_port = from_lo ? key.hi_port : key.lo_port;
        p.payload = base64_decode(jp.at("payload_b64").get<std::string>());
        if (p.payload.size() != jp.at("len").get<std::size_t>()) {
          throw Error(Errc::BadFormat, "payload length disagrees with len");
        }
        packets.push_back(std::move(p));
      }
      flows.push_back(make_flow(std::move(packets), *label));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BadFormat, "flow JSONL line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::BadFormat, "flow JSONL line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return flows;
}

namespace {
constexpr std::string_view kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(ByteView bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out += kB64[v >> 18];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    if (i + 1 < bytes.size()) v |= std::uint32_t{bytes[i + 1]} << 8;
    out += kB64[v >> 18];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(Errc::BadFormat, "base64 length not a multiple of 4");
  Bytes out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      std::uint32_t d = 0;
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
      } else {
        const auto pos = kB64.find(c);
        if (pos == std::string_view::npos || pad > 0) throw Error(Errc::BadFormat, "bad base64 digit");
        d = static_cast<std::uint32_t>(pos);
      }
      v = (v << 6) | d;
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

}  // namespace mfd
