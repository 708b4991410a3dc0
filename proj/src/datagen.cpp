#include "mfd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mfd/error.hpp"

namespace mfd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Small wrapper with library-independent draws, so outputs do not depend on
/// the standard library's distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class Weights>
  std::size_t pick(const Weights& w) {
    double total = 0;
    for (double x : w) total += x;
    double r = uniform() * total;
    std::size_t i = 0;
    for (double x : w) {
      if (r < x) return i;
      r -= x;
      ++i;
    }
    return i - 1;
  }

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
};

using Chain = std::array<std::array<double, kMarkovStates>, kMarkovStates>;

/// Row-stochastic chain that follows `cycle` with probability `follow` and
/// otherwise jumps uniformly; states off the cycle re-enter at cycle[0].
Chain cycle_chain(std::initializer_list<int> cycle, double follow) {
  const std::vector<int> c(cycle);
  Chain m{};
  for (std::size_t r = 0; r < kMarkovStates; ++r) {
    m[r].fill((1.0 - follow) / kMarkovStates);
    const auto it = std::find(c.begin(), c.end(), static_cast<int>(r));
    const int next = it == c.end() ? c.front() : c[static_cast<std::size_t>((it - c.begin() + 1)) % c.size()];
    m[r][static_cast<std::size_t>(next)] += follow;
  }
  return m;
}

std::array<double, kMarkovStates> start_at(int state, double mass) {
  std::array<double, kMarkovStates> init;
  init.fill((1.0 - mass) / kMarkovStates);
  init[static_cast<std::size_t>(state)] += mass;
  return init;
}

std::vector<std::uint8_t> peak_set(int family_slot) {
  std::vector<std::uint8_t> p;
  for (int i = 0; i < 6; ++i) p.push_back(static_cast<std::uint8_t>(0x80 + 8 * family_slot + i));
  return p;
}

ByteMixture malicious_bytes(int family_slot) {
  return ByteMixture{0.15, 0.45, 0.05, 0.35, peak_set(family_slot)};
}

constexpr std::uint32_t net16(int a, int b) {
  return (static_cast<std::uint32_t>(a) << 24) | (static_cast<std::uint32_t>(b) << 16);
}

/// Letter-heavy printable ASCII: 60% lowercase, 15% uppercase, 10% space,
/// 10% digits, 5% punctuation, each group uniform inside.
const std::array<std::uint8_t, 2600>& text_table() {
  static const auto table = [] {
    std::array<std::uint8_t, 2600> t{};
    std::size_t i = 0;
    const auto fill = [&](std::uint8_t b, std::size_t n) {
      for (std::size_t k = 0; k < n; ++k) t[i++] = b;
    };
    for (int c = 0; c < 26; ++c) fill(static_cast<std::uint8_t>('a' + c), 60);
    for (int c = 0; c < 26; ++c) fill(static_cast<std::uint8_t>('A' + c), 15);
    fill(' ', 260);
    for (int c = 0; c < 10; ++c) fill(static_cast<std::uint8_t>('0' + c), 26);
    for (char c : std::string_view("./:-=\r\n,;?")) fill(static_cast<std::uint8_t>(c), 13);
    return t;
  }();
  return table;
}

std::uint32_t scaled_index(std::uint32_t r, std::size_t n) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(r) * n) >> 32);
}

/// One engine draw per byte: the high half picks the mixture component, the
/// low half picks the value inside it.
Bytes payload_bytes(const ByteMixture& mix, std::size_t len, Rng& rng) {
  const double peaks = mix.peak_bytes.empty() ? 0.0 : mix.peaks;
  const double total = mix.text + mix.uniform + mix.zeros + peaks;
  const auto cut = [&](double cum) {
    return static_cast<std::uint64_t>(std::llround(cum / total * 4294967296.0));
  };
  const std::uint64_t t_text = cut(mix.text);
  const std::uint64_t t_uniform = cut(mix.text + mix.uniform);
  const std::uint64_t t_zeros = cut(mix.text + mix.uniform + mix.zeros);
  const auto& text = text_table();

  Bytes out(len);
  for (auto& b : out) {
    const std::uint64_t r = rng.engine()();
    const std::uint64_t hi = r >> 32;
    const auto lo = static_cast<std::uint32_t>(r);
    if (hi < t_text) {
      b = text[scaled_index(lo, text.size())];
    } else if (hi < t_uniform) {
      b = static_cast<std::uint8_t>(lo & 0xff);
    } else if (hi < t_zeros) {
      b = 0;
    } else {
      b = mix.peak_bytes[scaled_index(lo, mix.peak_bytes.size())];
    }
  }
  return out;
}

}  // namespace

std::size_t scaled_count(std::size_t reference, double scale) {
  return std::max(kMinClassCount, static_cast<std::size_t>(std::llround(scale * static_cast<double>(reference))));
}

DatasetProfile default_profile(double scale) {
  if (!(scale > 0) || scale > 1) throw Error(Errc::ScaleTooSmall, "scale must lie in (0, 1]");
  // The floor must not swallow the majority class, or the profile loses its imbalance.
  if (std::llround(scale * static_cast<double>(kReferenceCounts[0])) <
      static_cast<long long>(10 * kMinClassCount)) {
    throw Error(Errc::ScaleTooSmall, "scale " + std::to_string(scale) + " leaves fewer than 100 benign flows");
  }
  const auto tcp = Protocol::TCP;
  const auto udp = Protocol::UDP;
  DatasetProfile p;
  p.classes.resize(kNumClasses);
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    p.classes[i].label = kAllLabels[i];
    p.classes[i].count = scaled_count(kReferenceCounts[i], scale);
  }
  auto& benign = p.classes[index_of(ClassLabel::Benign)];
  benign.server_ports = {{443, tcp, 0.45}, {80, tcp, 0.30}, {53, udp, 0.20}, {123, udp, 0.05}};
  benign.server_net = net16(93, 184);
  benign.bytes = {0.72, 0.15, 0.13, 0.0, {}};
  benign.markov = cycle_chain({4, 15, 0}, 0.7);
  benign.initial_state = start_at(4, 0.8);
  benign.iat_log_mu = 10.3;
  benign.iat_log_sigma = 1.8;
  benign.min_packets = 4;
  benign.max_packets = 40;
  benign.forward_prob = 0.45;

  struct Spec {
    ClassLabel label;
    std::vector<PortChoice> ports;
    std::uint16_t client_lo, client_hi;
    std::uint32_t net;
    ByteMixture bytes;
    Chain chain;
    int start;
    double mu, sigma;
    std::size_t min_pk, max_pk;
  };
  const std::vector<Spec> specs = {
      {ClassLabel::Bot, {{6667, tcp, 0.6}, {8080, tcp, 0.4}}, 1025, 5000, net16(185, 100),
       {0.30, 0.40, 0.05, 0.25, peak_set(0)}, cycle_chain({1, 2}, 0.8), 1, 14.5, 0.4, 4, 30},
      {ClassLabel::Exploit, {{445, tcp, 0.5}, {80, tcp, 0.3}, {8000, tcp, 0.2}}, 1025, 5000, net16(185, 101),
       malicious_bytes(1), cycle_chain({6, 12, 0}, 0.75), 6, 8.5, 1.0, 4, 30},
      {ClassLabel::Trojan, {{443, tcp, 0.3}, {8443, tcp, 0.4}, {4444, tcp, 0.3}}, 1025, 5000, net16(185, 102),
       malicious_bytes(2), cycle_chain({2, 9, 1}, 0.7), 2, 13.0, 0.6, 4, 30},
      {ClassLabel::Malspam, {{25, tcp, 0.6}, {587, tcp, 0.4}}, 49152, 65535, net16(185, 103),
       {0.45, 0.25, 0.05, 0.25, peak_set(3)}, cycle_chain({8, 10, 0}, 0.7), 8, 11.0, 1.0, 4, 30},
      {ClassLabel::Cryptomix, {{4443, tcp, 0.6}, {8443, tcp, 0.4}}, 49152, 65535, net16(91, 200),
       malicious_bytes(4), cycle_chain({1, 5, 11}, 0.8), 1, 12.5, 0.5, 4, 30},
      {ClassLabel::Locky, {{80, tcp, 0.5}, {8080, tcp, 0.3}, {4443, tcp, 0.2}}, 49152, 65535, net16(91, 201),
       malicious_bytes(5), cycle_chain({3, 7}, 0.8), 3, 11.8, 0.7, 4, 30},
      {ClassLabel::CrypMic, {{443, tcp, 0.5}, {4443, tcp, 0.5}}, 49152, 65535, net16(91, 202),
       malicious_bytes(6), cycle_chain({2, 13, 5}, 0.8), 2, 12.0, 0.5, 4, 30},
      {ClassLabel::Telslacrypt, {{80, tcp, 0.6}, {443, tcp, 0.4}}, 49152, 65535, net16(91, 203),
       malicious_bytes(7), cycle_chain({6, 1, 9}, 0.8), 6, 13.5, 0.6, 4, 30},
      {ClassLabel::CryptXXX, {{9001, tcp, 0.5}, {443, tcp, 0.5}}, 49152, 65535, net16(91, 204),
       malicious_bytes(8), cycle_chain({10, 3}, 0.8), 10, 10.5, 0.8, 4, 30},
      {ClassLabel::Cryptowall, {{80, tcp, 0.4}, {9001, tcp, 0.3}, {8443, tcp, 0.3}}, 49152, 65535, net16(91, 205),
       malicious_bytes(9), cycle_chain({5, 14, 2}, 0.8), 5, 12.8, 0.4, 4, 30},
      // Cerber reuses traits of Locky and CrypMic: shared ports and peak bytes.
      {ClassLabel::Cerber, {{4443, tcp, 0.4}, {8443, tcp, 0.3}, {80, tcp, 0.3}}, 49152, 65535, net16(91, 206),
       {0.15, 0.45, 0.05, 0.35, {0xa8, 0xa9, 0xaa, 0xb0, 0xb1, 0xb2}}, cycle_chain({3, 7, 13}, 0.75), 3, 12.2, 0.6,
       4, 30},
  };
  for (const auto& s : specs) {
    auto& c = p.classes[static_cast<std::size_t>(index_of(s.label))];
    c.server_ports = s.ports;
    c.client_port_lo = s.client_lo;
    c.client_port_hi = s.client_hi;
    c.server_net = s.net;
    c.bytes = s.bytes;
    c.markov = s.chain;
    c.initial_state = start_at(s.start, 0.8);
    c.iat_log_mu = s.mu;
    c.iat_log_sigma = s.sigma;
    c.min_packets = s.min_pk;
    c.max_packets = s.max_pk;
    c.forward_prob = 0.6;
  }
  return p;
}

// ---- profile JSON ----------------------------------------------------------

nlohmann::json profile_to_json(const DatasetProfile& p) {
  nlohmann::json j;
  j["version"] = p.version;
  auto& cs = j["classes"] = nlohmann::json::array();
  for (const auto& c : p.classes) {
    nlohmann::json ports = nlohmann::json::array();
    for (const auto& pc : c.server_ports) {
      ports.push_back({{"port", pc.port}, {"protocol", protocol_name(pc.protocol)}, {"weight", pc.weight}});
    }
    cs.push_back({
        {"label", label_name(c.label)},
        {"count", c.count},
        {"server_ports", ports},
        {"client_ports", {c.client_port_lo, c.client_port_hi}},
        {"server_net", ipv4_to_string(c.server_net)},
        {"bytes",
         {{"text", c.bytes.text},
          {"uniform", c.bytes.uniform},
          {"zeros", c.bytes.zeros},
          {"peaks", c.bytes.peaks},
          {"peak_bytes", c.bytes.peak_bytes}}},
        {"markov", c.markov},
        {"initial_state", c.initial_state},
        {"iat_log_mu", c.iat_log_mu},
        {"iat_log_sigma", c.iat_log_sigma},
        {"packets", {c.min_packets, c.max_packets}},
        {"short_flow_prob", c.short_flow_prob},
        {"forward_prob", c.forward_prob},
    });
  }
  return j;
}

DatasetProfile profile_from_json(const nlohmann::json& j) {
  try {
    DatasetProfile p;
    p.version = j.at("version").get<int>();
    for (const auto& jc : j.at("classes")) {
      ClassProfile c;
      const auto label = parse_label(jc.at("label").get<std::string>());
      if (!label) throw Error(Errc::BadFormat, "unknown class in profile");
      c.label = *label;
      c.count = jc.at("count").get<std::size_t>();
      if (c.count < 1) throw Error(Errc::BadFormat, "class count must be >= 1");
      for (const auto& pc : jc.at("server_ports")) {
        const auto proto = pc.at("protocol").get<std::string>();
        c.server_ports.push_back({pc.at("port").get<std::uint16_t>(), proto == "UDP" ? Protocol::UDP : Protocol::TCP,
                                  pc.at("weight").get<double>()});
      }
      const auto cp = jc.at("client_ports").get<std::array<std::uint16_t, 2>>();
      c.client_port_lo = cp[0];
      c.client_port_hi = cp[1];
      c.server_net = parse_ipv4(jc.at("server_net").get<std::string>());
      const auto& b = jc.at("bytes");
      c.bytes = {b.at("text").get<double>(), b.at("uniform").get<double>(), b.at("zeros").get<double>(),
                 b.at("peaks").get<double>(), b.at("peak_bytes").get<std::vector<std::uint8_t>>()};
      c.markov = jc.at("markov").get<Chain>();
      for (const auto& row : c.markov) {
        const double s = std::accumulate(row.begin(), row.end(), 0.0);
        if (std::abs(s - 1.0) > 1e-9) throw Error(Errc::BadFormat, "profile Markov rows must sum to 1");
      }
      c.initial_state = jc.at("initial_state").get<std::array<double, kMarkovStates>>();
      c.iat_log_mu = jc.at("iat_log_mu").get<double>();
      c.iat_log_sigma = jc.at("iat_log_sigma").get<double>();
      const auto pk = jc.at("packets").get<std::array<std::size_t, 2>>();
      c.min_packets = pk[0];
      c.max_packets = pk[1];
      c.short_flow_prob = jc.at("short_flow_prob").get<double>();
      c.forward_prob = jc.at("forward_prob").get<double>();
      p.classes.push_back(std::move(c));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadFormat, std::string("profile: ") + e.what());
  }
}

// ---- generation ------------------------------------------------------------

FlowRecord generate_flow(const ClassProfile& profile, std::size_t index, std::uint64_t seed) {
  const auto cls = static_cast<std::uint64_t>(index_of(profile.label));
  Rng rng(splitmix64(seed ^ splitmix64((cls << 32) + index)));

  std::vector<double> port_weights;
  for (const auto& pc : profile.server_ports) port_weights.push_back(pc.weight);
  const PortChoice& server = profile.server_ports.at(rng.pick(port_weights));

  const auto i = static_cast<std::uint32_t>(index);
  const std::uint32_t client_ip = (10u << 24) | ((static_cast<std::uint32_t>(cls) * 16 + (i >> 16)) << 16) |
                                  (((i >> 8) & 0xff) << 8) | (i & 0xff);
  const std::uint32_t server_ip = profile.server_net | static_cast<std::uint32_t>(1 + rng.below(65534));
  const auto client_port = static_cast<std::uint16_t>(rng.between(profile.client_port_lo, profile.client_port_hi));

  const std::size_t n = rng.uniform() < profile.short_flow_prob ? rng.between(1, 3)
                                                                : rng.between(profile.min_packets, profile.max_packets);
  // Flows start at random points of one day.
  std::int64_t ts = 1'483'228'800'000'000 + static_cast<std::int64_t>(rng.below(86'400'000'000ULL));
  std::size_t state = rng.pick(profile.initial_state);

  std::vector<ParsedPacket> packets;
  packets.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      const double gap = std::exp(profile.iat_log_mu + profile.iat_log_sigma * rng.normal());
      ts += std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(gap)));
      state = rng.pick(profile.markov[state]);
    }
    const std::size_t lo = state * kMarkovBinWidth;
    const std::size_t hi = std::min(lo + kMarkovBinWidth - 1, kMaxPayload);
    const std::size_t len = rng.between(lo, hi);
    const bool forward = k == 0 || rng.uniform() < profile.forward_prob;

    ParsedPacket p;
    p.ts_micros = ts;
    p.protocol = server.protocol;
    p.src_ip = forward ? client_ip : server_ip;
    p.dst_ip = forward ? server_ip : client_ip;
    p.src_port = forward ? client_port : server.port;
    p.dst_port = forward ? server.port : client_port;
    p.payload = payload_bytes(profile.bytes, len, rng);
    packets.push_back(std::move(p));
  }
  return make_flow(std::move(packets), profile.label);
}

Dataset generate_dataset(const DatasetProfile& profile, std::uint64_t seed) {
  Dataset d;
  for (const auto& c : profile.classes) {
    for (std::size_t i = 0; i < c.count; ++i) d.flows.push_back(generate_flow(c, i, seed));
  }
  return d;
}

Dataset generate_dataset(double scale, std::uint64_t seed) { return generate_dataset(default_profile(scale), seed); }

std::vector<ClassLabel> Dataset::labels() const {
  std::vector<ClassLabel> out;
  out.reserve(flows.size());
  for (const auto& f : flows) out.push_back(f.label);
  return out;
}

std::array<std::size_t, kNumClasses> Dataset::class_counts() const {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& f : flows) ++counts[static_cast<std::size_t>(index_of(f.label))];
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset d;
  d.flows.reserve(idx.size());
  for (std::size_t i : idx) {
    d.flows.push_back(flows.at(i));
    if (!tags.empty()) d.tags.push_back(tags[i]);
  }
  return d;
}

// ---- splitting and resampling ----------------------------------------------

namespace {

std::array<std::vector<std::size_t>, kNumClasses> by_class(std::span<const ClassLabel> labels) {
  std::array<std::vector<std::size_t>, kNumClasses> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[static_cast<std::size_t>(index_of(labels[i]))].push_back(i);
  return groups;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

SplitIndices split_indices(std::span<const ClassLabel> labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0 && test_fraction < 1)) throw Error(Errc::BadConfig, "test_fraction must lie in (0, 1)");
  Rng rng(splitmix64(seed ^ 0x5b1d));
  SplitIndices out;
  for (auto& group : by_class(labels)) {
    if (group.empty()) continue;
    if (group.size() < 2) throw Error(Errc::ClassTooSmall, "a class needs >= 2 samples to split");
    shuffle(group, rng);
    const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(group.size())));
    const std::size_t n_test = std::clamp<std::size_t>(want, 1, group.size() - 1);
    out.test.insert(out.test.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.train.insert(out.train.end(), group.begin() + static_cast<std::ptrdiff_t>(n_test), group.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitIndices split(Dataset& dataset, double test_fraction, std::uint64_t seed) {
  const auto labels = dataset.labels();
  SplitIndices s = split_indices(labels, test_fraction, seed);
  dataset.tags.assign(dataset.flows.size(), SplitTag::Train);
  for (std::size_t i : s.test) dataset.tags[i] = SplitTag::Test;
  return s;
}

std::vector<std::size_t> oversample_indices(std::span<const ClassLabel> labels, std::size_t target, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x0e75));
  std::vector<std::size_t> out(labels.size());
  std::iota(out.begin(), out.end(), std::size_t{0});
  for (const auto& group : by_class(labels)) {
    if (group.empty()) continue;
    for (std::size_t k = group.size(); k < target; ++k) out.push_back(group[rng.below(group.size())]);
  }
  return out;
}

std::vector<std::size_t> undersample_indices(std::span<const ClassLabel> labels, std::size_t target, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x0d5a));
  std::vector<std::size_t> out;
  for (auto group : by_class(labels)) {
    if (group.empty()) continue;
    if (group.size() < target) {
      throw Error(Errc::TargetTooLarge, "target " + std::to_string(target) + " exceeds a class of " +
                                            std::to_string(group.size()));
    }
    shuffle(group, rng);
    out.insert(out.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(target));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<std::size_t>> incremental_schedule_indices(std::span<const ClassLabel> labels, int stages,
                                                                   std::uint64_t seed) {
  if (stages < 2) throw Error(Errc::BadConfig, "incremental schedule needs >= 2 stages");
  Rng rng(splitmix64(seed ^ 0x1c4e));
  auto groups = by_class(labels);
  std::size_t smallest = 0;
  for (const auto& g : groups) {
    if (!g.empty()) smallest = smallest == 0 ? g.size() : std::min(smallest, g.size());
  }
  std::vector<std::size_t> first, rest;
  for (auto& g : groups) {
    shuffle(g, rng);
    first.insert(first.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(std::min(smallest, g.size())));
    if (g.size() > smallest) rest.insert(rest.end(), g.begin() + static_cast<std::ptrdiff_t>(smallest), g.end());
  }
  std::sort(rest.begin(), rest.end());
  shuffle(rest, rng);

  std::vector<std::vector<std::size_t>> schedule;
  for (int s = 0; s < stages; ++s) {
    const auto take = static_cast<std::size_t>(
        std::llround(static_cast<double>(rest.size()) * s / static_cast<double>(stages - 1)));
    std::vector<std::size_t> stage = first;
    stage.insert(stage.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(stage.begin(), stage.end());
    schedule.push_back(std::move(stage));
  }
  return schedule;
}

Dataset oversample(const Dataset& train, std::size_t per_class_target, std::uint64_t seed) {
  const auto idx = oversample_indices(train.labels(), per_class_target, seed);
  return train.subset(idx);
}

Dataset undersample(const Dataset& train, std::size_t per_class_target, std::uint64_t seed) {
  const auto idx = undersample_indices(train.labels(), per_class_target, seed);
  return train.subset(idx);
}

std::vector<Dataset> incremental_schedule(const Dataset& train, int stages, std::uint64_t seed) {
  std::vector<Dataset> out;
  for (const auto& idx : incremental_schedule_indices(train.labels(), stages, seed)) out.push_back(train.subset(idx));
  return out;
}

}  // namespace mfd
