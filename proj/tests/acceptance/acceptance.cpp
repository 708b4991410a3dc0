// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   acceptance <path-to-mfd-cli> [work-dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "../common/fixtures.hpp"
#include "../common/flow_oracle.hpp"
#include "mfd/error.hpp"
#include "mfd/experiments.hpp"
#include "mfd/features.hpp"
#include "mfd/flowparse.hpp"
#include "mfd/metrics.hpp"
#include "mfd/nn.hpp"
#include "mfd/qdbp.hpp"
#include "mfd/tsdnn.hpp"

using namespace mfd;
namespace fs = std::filesystem;
namespace fx = fixtures;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += !o.pass;
  std::cout << "CRITERION " << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << title << "  [" << o.detail << "]"
            << std::endl;
}

// ---- shared helpers ---------------------------------------------------------

Eigen::VectorXd random_vector(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

/// Every scalar parameter of `net` paired with the same entry of `g`.
void for_each_param(DenseNetwork& net, const ParamGrad& g, const std::function<void(double&, double)>& fn) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < net.layers[l].weights.size(); ++i) fn(net.layers[l].weights.data()[i], g.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < net.layers[l].biases.size(); ++i) fn(net.layers[l].biases[i], g.biases[l][i]);
  }
}

double rel_err(double fd, double a) { return std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-6}); }

// ---- 1 -------------------------------------------------------------------------

Outcome gradient_exactness() {
  const auto t0 = Clock::now();
  const std::vector<std::vector<std::size_t>> archs = {{4, 3}, {5, 6, 3}, {6, 8, 7, 5}};
  std::mt19937_64 rng(101);
  const double h = 1e-6;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const auto& dims = archs[static_cast<std::size_t>(t) % archs.size()];
    DenseNetwork net = DenseNetwork::build(dims, rng());
    const Eigen::VectorXd x = random_vector(rng, dims.front());
    const int y = static_cast<int>(rng() % dims.back());
    const ParamGrad g = backward(net, x, y).grad;
    for_each_param(net, g, [&](double& p, double a) {
      const double saved = p;
      p = saved + h;
      const double up = cross_entropy_loss(net, x, y);
      p = saved - h;
      const double down = cross_entropy_loss(net, x, y);
      p = saved;
      worst = std::max(worst, rel_err((up - down) / (2 * h), a));
    });
  }

  // Composite tree: every route, bridges attached.
  const std::vector<std::size_t> hidden = {4};
  TsdnnModel tree = build_tsdnn(6, hidden, 5);
  const std::vector<ClassLabel> labels = {ClassLabel::Benign,  ClassLabel::Bot,       ClassLabel::Exploit,
                                          ClassLabel::Trojan,  ClassLabel::Malspam,   ClassLabel::Cryptomix,
                                          ClassLabel::CrypMic, ClassLabel::Cerber};
  Eigen::MatrixXd xs(6, static_cast<Eigen::Index>(labels.size()));
  for (Eigen::Index c = 0; c < xs.cols(); ++c) xs.col(c) = random_vector(rng, 6).cwiseAbs();
  const TsdnnGradients tg = tsdnn_loss_and_grads(tree, xs, labels);
  double tree_worst = 0;
  for (std::size_t k = 0; k < kNumNodes; ++k) {
    ParamGrad sum = ParamGrad::zeros_like(tree.nodes[k].net);
    for (const auto& s : tg.per_node[k]) sum += s.grad;
    for_each_param(tree.nodes[k].net, sum, [&](double& p, double a) {
      const double saved = p;
      p = saved + h;
      const double up = tsdnn_loss(tree, xs, labels);
      p = saved - h;
      const double down = tsdnn_loss(tree, xs, labels);
      p = saved;
      tree_worst = std::max(tree_worst, rel_err((up - down) / (2 * h), a));
    });
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && tree_worst < 1e-5 && secs < 30,
          "dense max rel err " + fmt("%.2e", worst) + ", tree " + fmt("%.2e", tree_worst) + ", " + fmt("%.2f", secs) +
              " s"};
}

// ---- 2 and 3 -------------------------------------------------------------------

struct GradInstance {
  DenseNetwork net;
  std::vector<PerSampleGradient> grads;
  std::vector<int> labels;
};

GradInstance random_grads(std::mt19937_64& rng, std::size_t k, std::size_t n) {
  const std::size_t d = 3 + rng() % 4;
  GradInstance in;
  in.net = DenseNetwork::build(std::vector<std::size_t>{d, 3 + rng() % 4, k}, rng());
  for (std::size_t s = 0; s < n; ++s) {
    const int y = s < k ? static_cast<int>(s) : static_cast<int>(rng() % k);
    in.labels.push_back(y);
    in.grads.push_back(backward(in.net, random_vector(rng, d), y));
  }
  return in;
}

Outcome qdbp_oracle() {
  std::mt19937_64 rng(202);
  int bitwise_mismatch = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng() % 4;
    const GradInstance in = random_grads(rng, k, k + rng() % 40);
    CoefficientMap coeff;
    for (std::size_t c = 0; c < k; ++c) coeff[static_cast<int>(c)] = 0.5 + static_cast<double>(rng() % 100) / 40;
    const auto part = ClassPartition::from_labels(in.labels);
    const auto w = make_weighting(part, coeff);
    const Eigen::VectorXd got = qdbp_aggregate(in.grads, w).flatten();
    Eigen::VectorXd want = Eigen::VectorXd::Zero(got.size());
    for (const auto& g : in.grads) {
      const double wt = coeff.at(g.class_id) / static_cast<double>(part.cardinality(g.class_id));
      const Eigen::VectorXd f = g.grad.flatten();
      for (Eigen::Index i = 0; i < f.size(); ++i) want[i] += wt * f[i];
    }
    for (Eigen::Index i = 0; i < got.size(); ++i) bitwise_mismatch += got[i] != want[i];
  }

  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 2 + rng() % 3, per = 1 + rng() % 8;
    GradInstance in = random_grads(rng, k, k * per);
    std::vector<int> labels;
    for (std::size_t s = 0; s < in.grads.size(); ++s) {
      // Uniform cardinality: relabel round-robin.
      in.grads[s].class_id = static_cast<int>(s % k);
      labels.push_back(in.grads[s].class_id);
    }
    const auto w = make_weighting(ClassPartition::from_labels(labels));
    DenseNetwork a = in.net, b = in.net;
    const double eta = 0.3;
    qdbp_step(a, in.grads, w, eta);
    sgd_step(b, in.grads, eta / static_cast<double>(per));
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      worst = std::max(worst, (a.layers[l].weights - b.layers[l].weights).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a.layers[l].biases - b.layers[l].biases).cwiseAbs().maxCoeff());
    }
  }
  return {bitwise_mismatch == 0 && worst <= 1e-12,
          std::to_string(bitwise_mismatch) + " bitwise mismatches over 50 instances, reduction max diff " +
              fmt("%.1e", worst)};
}

Outcome duplication_invariance() {
  std::mt19937_64 rng(303);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 2 + rng() % 4;
    const GradInstance in = random_grads(rng, k, k + rng() % 30);
    const Eigen::VectorXd base = qdbp_aggregate(in.grads, make_weighting(ClassPartition::from_labels(in.labels))).flatten();
    const int dup_class = static_cast<int>(rng() % k);
    for (int d : {2, 5, 10}) {
      std::vector<PerSampleGradient> dup;
      std::vector<int> labels;
      for (const auto& g : in.grads) {
        for (int c = 0; c < (g.class_id == dup_class ? d : 1); ++c) {
          dup.push_back(g);
          labels.push_back(g.class_id);
        }
      }
      const Eigen::VectorXd agg = qdbp_aggregate(dup, make_weighting(ClassPartition::from_labels(labels))).flatten();
      worst = std::max(worst, (agg - base).norm() / base.norm());
    }
  }
  return {worst < 1e-9, "max relative change " + fmt("%.1e", worst)};
}

// ---- 4 and 5 -------------------------------------------------------------------

struct CompareRun {
  std::map<Method, ConfusionMatrix> cm;
  double vanilla_seconds = 0;
};

const CompareRun& compare_run() {
  static const CompareRun run = [] {
    CompareRun r;
    const ExperimentConfig cfg;
    const auto t0 = Clock::now();
    const PreparedData data = prepare_data(cfg);
    r.cm[Method::VanillaDnn] = run_method(Method::VanillaDnn, cfg, data).matrix;
    r.vanilla_seconds = seconds_since(t0);
    for (Method m : kAllMethods) {
      if (m != Method::VanillaDnn) r.cm[m] = run_method(m, cfg, data).matrix;
    }
    return r;
  }();
  return run;
}

Outcome dilution() {
  const CompareRun& run = compare_run();
  const ConfusionMatrix& cm = run.cm.at(Method::VanillaDnn);
  const auto minority = static_cast<std::size_t>(index_of(ClassLabel::Cryptomix));
  const double minority_recall = recall(cm, minority);
  std::size_t malicious = 0, as_benign = 0;
  for (std::size_t t = 1; t < kNumClasses; ++t) {
    malicious += cm.support(t);
    as_benign += cm.at(t, 0);
  }
  const double collapse = static_cast<double>(as_benign) / static_cast<double>(malicious);
  return {minority_recall <= 0.2 && collapse >= 0.8 && run.vanilla_seconds < 300,
          "Cryptomix recall " + fmt("%.3f", minority_recall) + ", malicious predicted Benign " + fmt("%.3f", collapse) +
              ", " + fmt("%.1f", run.vanilla_seconds) + " s"};
}

Outcome method_ordering() {
  const CompareRun& run = compare_run();
  std::map<Method, double> ap;
  for (const auto& [m, cm] : run.cm) ap[m] = average_precision(cm);
  const double tree = ap.at(Method::TsdnnQdbp);
  const double acc = accuracy(run.cm.at(Method::TsdnnQdbp));
  bool ok = tree >= ap.at(Method::VanillaDnn) + 0.15 && acc >= 0.9;
  for (Method m : {Method::DnnOversample, Method::DnnUndersample, Method::DnnIncremental}) ok &= tree >= ap.at(m) - 0.02;
  std::string detail = "tsdnn-qdbp acc " + fmt("%.4f", acc);
  for (const auto& [m, v] : ap) detail += ", " + std::string(method_name(m)) + " AP " + fmt("%.4f", v);
  return {ok, detail};
}

// ---- 6 -------------------------------------------------------------------------

Outcome metric_correctness() {
  std::mt19937_64 rng(606);
  int wrong = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 2 + rng() % 8, n = 1 + rng() % 200;
    std::vector<int> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % k);
      p[i] = rng() % 2 ? y[i] : static_cast<int>(rng() % k);
    }
    // Oracle straight from the lists, with exact rational arithmetic via counts.
    std::size_t right = 0;
    for (std::size_t i = 0; i < n; ++i) right += p[i] == y[i];
    double ap = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t tp = 0, predicted = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(p[i]) == c) {
          ++predicted;
          tp += p[i] == y[i];
        }
      }
      ap += predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    }
    ap /= static_cast<double>(k);
    const auto cm = confusion(p, y, k);
    wrong += accuracy(cm) != static_cast<double>(right) / static_cast<double>(n);
    wrong += average_precision(cm) != ap;
  }
  const std::vector<int> y = {0, 1, 2, 2, 1, 0}, shifted = {1, 2, 0, 0, 2, 1};
  const auto diag = confusion(y, y, 3), zero = confusion(shifted, y, 3);
  const bool edges = accuracy(diag) == 1.0 && average_precision(diag) == 1.0 && accuracy(zero) == 0.0 &&
                     average_precision(zero) == 0.0;
  return {wrong == 0 && edges, std::to_string(wrong) + " mismatches over 20 random matrices, edge cases " +
                                   (edges ? "ok" : "wrong")};
}

// ---- 7 -------------------------------------------------------------------------

Outcome parser_fixtures() {
  int passed = 0, total = 0;
  const auto expect = [&](bool ok) {
    ++total;
    passed += ok;
  };
  const auto a = fx::ip(10, 0, 0, 1), b = fx::ip(10, 0, 0, 2);
  const auto udp = fx::udp_frame(a, 1234, b, 53, "AB");

  for (bool be : {false, true}) {  // fixtures 1, 2
    auto file = fx::global_header(be);
    fx::record(file, be, 1500000000, 250, udp);
    const auto raw = parse_pcap(file);
    const auto p = raw.size() == 1 ? decode_frame(raw[0]) : std::nullopt;
    expect(p && raw[0].data == udp && raw[0].ts_micros == 1500000000LL * 1000000 + 250 && p->src_ip == a &&
           p->dst_ip == b && p->src_port == 1234 && p->dst_port == 53 && p->protocol == Protocol::UDP &&
           p->payload == fx::Bytes{'A', 'B'});
  }
  {  // fixture 3: TCP, no payload, Ethernet padding ignored
    auto file = fx::global_header(false);
    fx::record(file, false, 1, 0, fx::tcp_frame(a, 80, b, 40000, ""));
    const auto p = decode_frame(parse_pcap(file).at(0));
    expect(p && p->protocol == Protocol::TCP && p->payload.empty() && p->src_port == 80);
  }
  {  // fixture 4: TCP with options, big-endian
    auto file = fx::global_header(true);
    fx::record(file, true, 2, 999999, fx::tcp_frame(a, 5555, b, 443, "hello", 3));
    const auto raw = parse_pcap(file);
    const auto p = decode_frame(raw.at(0));
    expect(p && raw[0].ts_micros == 2999999 && p->payload == fx::Bytes{'h', 'e', 'l', 'l', 'o'});
  }
  {  // fixture 5: six records, three flows
    std::vector<ParsedPacket> ps;
    for (const auto& r : parse_pcap(fx::three_flow_pcap())) ps.push_back(*decode_frame(r));
    const auto flows = assemble_flows(ps);
    expect(ps.size() == 6 && flows.size() == 3 && flows[0].packets.size() == 2 && flows[1].packets.size() == 3 &&
           flows[2].packets.size() == 1);
  }
  const auto code_of = [](const fx::Bytes& file) {
    try {
      parse_pcap(file);
    } catch (const Error& e) {
      return std::optional<Errc>(e.code());
    }
    return std::optional<Errc>();
  };
  {  // fixture 6: truncated record
    auto file = fx::global_header(false);
    fx::record(file, false, 0, 0, udp);
    file.resize(file.size() - 10);
    expect(code_of(file) == Errc::TruncatedRecord);
  }
  expect(code_of(fx::global_header(false, 0x0a0d0d0a)) == Errc::BadMagic);  // fixture 7

  std::mt19937_64 rng(707);
  int streams_ok = 0;
  for (int s = 0; s < 1000; ++s) {
    const auto ps = fx::random_stream(rng);
    const double timeout = 1 + static_cast<double>(rng() % 5);
    auto want = fx::oracle_groups(ps, static_cast<std::int64_t>(timeout * 1e6));
    std::vector<std::vector<ParsedPacket>> got;
    for (const auto& f : assemble_flows(ps, timeout)) got.push_back(f.packets);
    fx::sort_groups(want);
    fx::sort_groups(got);
    streams_ok += got == want;
  }
  return {passed == total && streams_ok == 1000, std::to_string(passed) + "/" + std::to_string(total) +
                                                     " pcap fixtures, " + std::to_string(streams_ok) +
                                                     "/1000 streams match the grouping oracle"};
}

// ---- 8 -------------------------------------------------------------------------

FlowRecord random_flow(std::mt19937_64& rng) {
  const std::size_t n = 1 + rng() % 16;
  const auto sp = static_cast<std::uint16_t>(rng()), dp = static_cast<std::uint16_t>(rng());
  std::vector<ParsedPacket> ps;
  std::int64_t ts = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool fwd = i == 0 || rng() % 2;
    ts += static_cast<std::int64_t>(rng() % 2'000'000);
    ParsedPacket p = fx::pkt(ts, fwd ? 1u : 2u, fwd ? sp : dp, fwd ? 2u : 1u, fwd ? dp : sp, Protocol::TCP,
                             rng() % (kMaxPayload + 1));
    for (auto& x : p.payload) x = static_cast<std::uint8_t>(rng());
    ps.push_back(std::move(p));
  }
  return make_flow(std::move(ps), ClassLabel::Benign);
}

Outcome feature_invariants() {
  std::mt19937_64 rng(808);
  double worst_row = 0, worst_hist = 0;
  int truncate_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const FlowRecord f = random_flow(rng);
    for (const auto& row : markov_matrix(f)) {
      double s = 0;
      for (double v : row) s += v;
      worst_row = std::max(worst_row, std::abs(s - 1));
    }
    const auto h = payload_histogram(f);
    double hs = 0;
    for (double v : h) hs += v;
    std::size_t bytes = 0;
    for (const auto& p : f.packets) bytes += p.payload_len();
    worst_hist = std::max(worst_hist, std::abs(hs - (bytes ? 1.0 : 0.0)));
    if (i < 1000) truncate_mismatch += featurize(truncate_flow(f, 1.0)).values != featurize(f).values;
  }
  return {worst_row <= 1e-9 && worst_hist <= 1e-9 && truncate_mismatch == 0,
          "Markov row error " + fmt("%.1e", worst_row) + ", histogram error " + fmt("%.1e", worst_hist) + ", " +
              std::to_string(truncate_mismatch) + " truncate(1.0) mismatches"};
}

// ---- 9 and 10 ------------------------------------------------------------------

Outcome partial_flow() {
  const PartialFlowReport r = run_partial_flow(ExperimentConfig{});
  double best = 0, at_full = -1, at_first = -1;
  std::string detail;
  for (const auto& row : r.rows) {
    best = std::max(best, row.accuracy);
    if (row.fraction == 1.0) at_full = row.accuracy;
    if (row.fraction == 0.05) at_first = row.accuracy;
    detail += (detail.empty() ? "" : ", ") + fmt("%.2f", row.fraction) + " -> " + fmt("%.4f", row.accuracy);
  }
  return {at_full >= best - 0.02 && at_first >= 0.9, detail};
}

Outcome zero_shot() {
  const ZeroShotReport r = run_zero_shot(ExperimentConfig{});
  bool ok = !r.flagged.empty();
  std::string detail;
  for (const auto& [label, frac] : r.flagged) {
    ok &= frac >= 0.7;
    detail += std::string(label_name(label)) + " flagged " + fmt("%.3f", frac) + ", ";
  }
  detail += "benign FPR " + fmt("%.4f", r.benign_fpr_full) + " full vs " + fmt("%.4f", r.benign_fpr_holdout) + " holdout";
  return {ok, detail};
}

// ---- 11 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs every subcommand into `dir`, capturing stdout next to the reports.
bool run_all_commands(const std::string& cli, const fs::path& dir) {
  fs::create_directories(dir);
  write_file((dir / "fixture.pcap").string(), fx::three_flow_pcap());
  const std::string common = " --scale 0.01 --epochs 4 --seed 11 --out-dir '" + dir.string() + "'";
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"featurize", "featurize '" + (dir / "fixture.pcap").string() + "' --default-label Benign -o '" +
                        (dir / "fixture.csv").string() + "'"},
      {"gen-data", "gen-data" + common},
      {"train", "train" + common},
      {"eval", "eval" + common + " --model '" + (dir / "model.json").string() + "'"},
      {"compare", "compare" + common + " --methods vanilla-dnn,dnn-qdbp,tsdnn-qdbp"},
      {"partial-flow", "partial-flow" + common + " --fractions 0.05,0.5,1"},
      {"zero-shot", "zero-shot" + common + " --holdout Cerber"},
  };
  for (const auto& [name, args] : cmds) {
    const std::string line = "'" + cli + "' " + args + " > '" + (dir / (name + ".stdout")).string() + "' 2>&1";
    if (std::system(line.c_str()) != 0) {
      std::cerr << "command failed: " << line << '\n';
      return false;
    }
  }
  return true;
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  // Same config means same out-dir too, so snapshot the first run and rerun in place.
  const fs::path dir = work / "rerun";
  fs::remove_all(dir);
  if (!run_all_commands(cli, dir)) return {false, "a command exited nonzero"};
  std::map<std::string, std::string> first;
  for (const auto& entry : fs::directory_iterator(dir)) first[entry.path().filename().string()] = slurp(entry.path());
  if (!run_all_commands(cli, dir)) return {false, "a command exited nonzero on rerun"};
  std::size_t differing = 0, files = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    ++files;
    const auto it = first.find(entry.path().filename().string());
    if (it == first.end() || it->second != slurp(entry.path())) {
      ++differing;
      std::cerr << "differs: " << entry.path().filename() << '\n';
    }
  }
  return {differing == 0 && files == first.size() && files > 10,
          std::to_string(files) + " files from 7 subcommands, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-mfd-cli> [work-dir]\n";
    return 2;
  }
  const std::string cli = fs::absolute(argv[1]).string();
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "mfd_acceptance";

  report(1, "gradient exactness", gradient_exactness);
  report(2, "QDBP oracle equivalence", qdbp_oracle);
  report(3, "class-duplication invariance", duplication_invariance);
  report(4, "gradient dilution under vanilla training", dilution);
  report(5, "method ordering", method_ordering);
  report(6, "metric correctness", metric_correctness);
  report(7, "parser fixtures and flow assembly", parser_fixtures);
  report(8, "feature invariants", feature_invariants);
  report(9, "partial-flow trend", partial_flow);
  report(10, "zero-shot detection", zero_shot);
  report(11, "determinism", [&] { return determinism(cli, work); });

  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL") << std::endl;
  return failures == 0 ? 0 : 1;
}
