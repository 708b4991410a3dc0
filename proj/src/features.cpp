#include "mfd/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mfd/error.hpp"

namespace mfd {

namespace {

struct Moments {
  double mean = 0, std = 0, min = 0, max = 0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  if (xs.empty()) return m;
  const double n = static_cast<double>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / n);
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  m.min = *lo;
  m.max = *hi;
  return m;
}

void one_hot_port_class(std::array<double, kConnectionDim>& v, std::size_t at, std::uint16_t port) {
  if (port < 1024) {
    v[at] = 1;
  } else if (port < 49152) {
    v[at + 1] = 1;
  } else {
    v[at + 2] = 1;
  }
}

std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

}  // namespace

std::size_t length_bin(std::size_t payload_len) {
  return std::min(std::min(payload_len, kMaxPayload) / kMarkovBinWidth, kMarkovStates - 1);
}

std::array<double, 4> interarrival_features(const FlowRecord& flow) {
  if (flow.packets.size() < 2) return {0, 0, 0, 0};
  std::vector<double> gaps;
  gaps.reserve(flow.packets.size() - 1);
  for (std::size_t i = 1; i < flow.packets.size(); ++i) {
    gaps.push_back(std::log1p(static_cast<double>(flow.packets[i].ts_micros - flow.packets[i - 1].ts_micros)));
  }
  const Moments m = moments(gaps);
  return {m.mean, m.std, m.min, m.max};
}

std::array<double, kConnectionDim> connection_features(const FlowRecord& flow) {
  std::array<double, kConnectionDim> v{};
  const ParsedPacket& first = flow.packets.front();
  v[flow.key.protocol == Protocol::TCP ? conn::kTcp : conn::kUdp] = 1;
  one_hot_port_class(v, conn::kSrcPortClass, first.src_port);
  one_hot_port_class(v, conn::kDstPortClass, first.dst_port);
  v[conn::kSrcPortNorm] = first.src_port / 65535.0;
  v[conn::kDstPortNorm] = first.dst_port / 65535.0;

  std::vector<double> lens;
  lens.reserve(flow.packets.size());
  double total = 0;
  for (const auto& p : flow.packets) {
    lens.push_back(static_cast<double>(p.payload_len()) / static_cast<double>(kMaxPayload));
    total += static_cast<double>(p.payload_len());
  }
  v[conn::kLogPackets] = std::log1p(static_cast<double>(flow.packets.size()));
  v[conn::kLogBytes] = std::log1p(total);
  const auto forward = std::count(flow.directions.begin(), flow.directions.end(), Direction::Forward);
  v[conn::kForwardFraction] = static_cast<double>(forward) / static_cast<double>(flow.packets.size());

  const Moments m = moments(lens);
  v[conn::kLenMean] = m.mean;
  v[conn::kLenStd] = m.std;
  v[conn::kLenMin] = m.min;
  v[conn::kLenMax] = m.max;

  const auto iat = interarrival_features(flow);
  std::copy(iat.begin(), iat.end(), v.begin() + conn::kIatMean);
  return v;
}

std::array<double, kHistogramDim> payload_histogram(const FlowRecord& flow, std::size_t cap_bytes) {
  std::array<std::size_t, kHistogramDim> counts{};
  std::size_t seen = 0;
  for (const auto& p : flow.packets) {
    for (std::uint8_t b : p.payload) {
      if (seen == cap_bytes) break;
      ++counts[b];
      ++seen;
    }
    if (seen == cap_bytes) break;
  }
  std::array<double, kHistogramDim> h{};
  if (seen == 0) return h;
  for (std::size_t i = 0; i < kHistogramDim; ++i) {
    h[i] = static_cast<double>(counts[i]) / static_cast<double>(seen);
  }
  return h;
}

MarkovMatrix markov_matrix(const FlowRecord& flow) {
  std::array<std::array<std::size_t, kMarkovStates>, kMarkovStates> counts{};
  for (std::size_t i = 1; i < flow.packets.size(); ++i) {
    ++counts[length_bin(flow.packets[i - 1].payload_len())][length_bin(flow.packets[i].payload_len())];
  }
  MarkovMatrix m{};
  for (std::size_t r = 0; r < kMarkovStates; ++r) {
    const std::size_t row_total = std::accumulate(counts[r].begin(), counts[r].end(), std::size_t{0});
    for (std::size_t c = 0; c < kMarkovStates; ++c) {
      m[r][c] = row_total == 0 ? 1.0 / kMarkovStates
                               : static_cast<double>(counts[r][c]) / static_cast<double>(row_total);
    }
  }
  return m;
}

FeatureVector featurize(const FlowRecord& flow) {
  FeatureVector fv;
  fv.values.reserve(kFeatureDim);
  const auto c = connection_features(flow);
  fv.values.insert(fv.values.end(), c.begin(), c.end());
  const auto h = payload_histogram(flow);
  fv.values.insert(fv.values.end(), h.begin(), h.end());
  const auto m = markov_matrix(flow);
  for (const auto& row : m) fv.values.insert(fv.values.end(), row.begin(), row.end());
  return fv;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = {
        "proto_tcp",      "proto_udp",      "src_port_wellknown", "src_port_registered",
        "src_port_ephemeral", "dst_port_wellknown", "dst_port_registered", "dst_port_ephemeral",
        "src_port_norm",  "dst_port_norm",  "log_packets",        "log_payload_bytes",
        "forward_fraction", "len_mean",     "len_std",            "len_min",
        "len_max",        "iat_log_mean",   "iat_log_std",        "iat_log_min",
        "iat_log_max",
    };
    char buf[32];
    for (int b = 0; b < 256; ++b) {
      std::snprintf(buf, sizeof buf, "byte_%03d", b);
      n.emplace_back(buf);
    }
    for (std::size_t r = 0; r < kMarkovStates; ++r) {
      for (std::size_t c = 0; c < kMarkovStates; ++c) {
        std::snprintf(buf, sizeof buf, "markov_%02zu_%02zu", r, c);
        n.emplace_back(buf);
      }
    }
    return n;
  }();
  return names;
}

// ---- normalization ---------------------------------------------------------

MinMaxNormalizer::MinMaxNormalizer(std::vector<double> mins, std::vector<double> maxs)
    : mins_(std::move(mins)), maxs_(std::move(maxs)) {
  if (mins_.size() != maxs_.size()) throw Error(Errc::DimensionMismatch, "normalizer mins/maxs differ in size");
}

MinMaxNormalizer MinMaxNormalizer::fit(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw Error(Errc::BadConfig, "cannot fit a normalizer on zero rows");
  std::vector<double> mins = rows.front();
  std::vector<double> maxs = rows.front();
  for (const auto& r : rows) {
    if (r.size() != mins.size()) throw Error(Errc::DimensionMismatch, "ragged feature rows");
    for (std::size_t i = 0; i < r.size(); ++i) {
      mins[i] = std::min(mins[i], r[i]);
      maxs[i] = std::max(maxs[i], r[i]);
    }
  }
  return MinMaxNormalizer(std::move(mins), std::move(maxs));
}

std::vector<double> MinMaxNormalizer::apply(std::span<const double> x) const {
  if (x.size() != mins_.size()) {
    throw Error(Errc::DimensionMismatch, "normalizer expects " + std::to_string(mins_.size()) +
                                             " dims, got " + std::to_string(x.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double range = maxs_[i] - mins_[i];
    out[i] = range > 0 ? std::clamp((x[i] - mins_[i]) / range, 0.0, 1.0) : 0.0;
  }
  return out;
}

nlohmann::json MinMaxNormalizer::to_json() const {
  return {{"schema_version", kFeatureSchemaVersion}, {"mins", mins_}, {"maxs", maxs_}};
}

MinMaxNormalizer MinMaxNormalizer::from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kFeatureSchemaVersion) {
    throw Error(Errc::BadFormat, "normalizer schema version mismatch");
  }
  return MinMaxNormalizer(j.at("mins").get<std::vector<double>>(), j.at("maxs").get<std::vector<double>>());
}

// ---- CSV -------------------------------------------------------------------

void write_feature_csv(std::ostream& out, const LabeledFeatures& data) {
  for (const auto& name : feature_names()) out << name << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    for (double v : data.rows[i]) out << format_double(v) << ',';
    out << label_name(data.labels[i]) << '\n';
  }
}

LabeledFeatures read_feature_csv(std::istream& in) {
  LabeledFeatures data;
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::BadFormat, "feature CSV has no header");
  const std::size_t expected_cols = kFeatureDim + 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(kFeatureDim);
    std::size_t start = 0;
    std::string_view sv(line);
    std::size_t cols = 0;
    while (true) {
      const std::size_t comma = sv.find(',', start);
      const std::string_view cell = sv.substr(start, comma == std::string_view::npos ? sv.npos : comma - start);
      ++cols;
      if (comma == std::string_view::npos) {
        const auto label = parse_label(cell);
        if (!label) throw Error(Errc::BadFormat, "unknown label on CSV line " + std::to_string(line_no));
        data.labels.push_back(*label);
        break;
      }
      double v = 0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size()) {
        throw Error(Errc::BadFormat, "bad number on CSV line " + std::to_string(line_no));
      }
      row.push_back(v);
      start = comma + 1;
    }
    if (cols != expected_cols) {
      throw Error(Errc::BadFormat, "CSV line " + std::to_string(line_no) + " has " + std::to_string(cols) +
                                       " columns, expected " + std::to_string(expected_cols));
    }
    data.rows.push_back(std::move(row));
  }
  return data;
}

}  // namespace mfd
