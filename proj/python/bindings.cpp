#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "mfd/datagen.hpp"
#include "mfd/error.hpp"
#include "mfd/experiments.hpp"
#include "mfd/features.hpp"
#include "mfd/flowparse.hpp"
#include "mfd/metrics.hpp"
#include "mfd/qdbp.hpp"
#include "mfd/tsdnn.hpp"

namespace py = pybind11;
using namespace mfd;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix rows_to_array(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

std::vector<std::string> names_of(std::span<const ClassLabel> labels) {
  std::vector<std::string> out;
  for (ClassLabel l : labels) out.emplace_back(label_name(l));
  return out;
}

ClassLabel to_label(const std::string& name) {
  const auto l = parse_label(name);
  if (!l) throw Error(Errc::UnknownClass, "unknown class '" + name + "'");
  return *l;
}

py::object to_python(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<FlowRecord> flows_from_pcap(const std::string& path, double idle_timeout) {
  std::vector<ParsedPacket> packets;
  for (const auto& raw : parse_pcap(read_file(path))) {
    if (auto p = decode_frame(raw)) packets.push_back(std::move(*p));
  }
  return assemble_flows(std::move(packets), idle_timeout);
}

/// (flow keys, N x 533 feature array) for a pcap file.
py::tuple featurize_pcap(const std::string& path, double idle_timeout) {
  const auto flows = flows_from_pcap(path, idle_timeout);
  std::vector<std::string> keys;
  for (const auto& f : flows) keys.push_back(f.key.to_string());
  return py::make_tuple(keys, rows_to_array(featurize_all(flows), kFeatureDim));
}

/// Synthetic flows featurized: (features, labels, is_test).
py::tuple synthetic_features(double scale, std::uint64_t seed, double test_fraction) {
  Dataset d = generate_dataset(scale, seed);
  split(d, test_fraction, seed);
  std::vector<bool> is_test;
  for (SplitTag t : d.tags) is_test.push_back(t == SplitTag::Test);
  return py::make_tuple(rows_to_array(featurize_all(d.flows), kFeatureDim), names_of(d.labels()), is_test);
}

ExperimentConfig make_config(std::uint64_t seed, double scale, int epochs, double eta,
                             const std::vector<std::string>& methods) {
  ExperimentConfig c;
  c.seed = seed;
  c.scale = scale;
  c.train.epochs = epochs;
  c.train.eta = eta;
  if (!methods.empty()) {
    c.methods.clear();
    for (const auto& m : methods) {
      const auto parsed = parse_method(m);
      if (!parsed) throw Error(Errc::BadConfig, "unknown method '" + m + "'");
      c.methods.push_back(*parsed);
    }
  }
  c.validate();
  return c;
}

class Model {
public:
  explicit Model(TsdnnModel m) : model_(std::move(m)) {}

  static Model load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot read " + path);
    return Model(TsdnnModel::from_json(nlohmann::json::parse(in)));
  }

  /// Rows are raw (unnormalized) feature vectors.
  std::vector<std::string> predict(const Eigen::Ref<const RowMatrix>& features) const {
    Eigen::MatrixXd x = features.transpose();
    if (model_.normalizer) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const Eigen::VectorXd col = x.col(c);
        const auto v = model_.normalizer->apply(std::vector<double>(col.data(), col.data() + col.size()));
        x.col(c) = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
    }
    std::vector<std::string> out;
    for (const auto& t : predict_batch(model_, x)) out.emplace_back(label_name(t.label));
    return out;
  }

  std::size_t feature_dim() const { return model_.feature_dim; }
  int epochs_trained() const { return model_.epochs_trained; }

private:
  TsdnnModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Flow parsing, featurization and tree-shaped classifiers for malicious traffic";

  static py::exception<Error> error(m, "MfdError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error(e.what());
    }
  });

  m.attr("FEATURE_DIM") = kFeatureDim;
  m.attr("CLASSES") = names_of(kAllLabels);
  m.def("version", [] { return std::string(artifact_version()); });
  m.def("feature_names", [] { return feature_names(); });

  m.def("featurize_pcap", &featurize_pcap, py::arg("path"), py::arg("idle_timeout") = kDefaultIdleTimeoutSec,
        "Parse a pcap, assemble flows and return (flow_keys, features).");
  m.def("synthetic_features", &synthetic_features, py::arg("scale") = kDefaultScale, py::arg("seed") = 7,
        py::arg("test_fraction") = 0.5, "Generate and featurize the synthetic dataset: (features, labels, is_test).");
  m.def(
      "class_counts",
      [](double scale) {
        std::vector<std::size_t> out;
        for (const auto& c : default_profile(scale).classes) out.push_back(c.count);
        return out;
      },
      py::arg("scale") = kDefaultScale);

  m.def(
      "qdbp_weights",
      [](const std::vector<std::string>& labels, const std::map<std::string, double>& coefficients) {
        std::vector<int> ids;
        for (const auto& l : labels) ids.push_back(index_of(to_label(l)));
        CoefficientMap coeff;
        for (const auto& [name, c] : coefficients) coeff[index_of(to_label(name))] = c;
        return make_weighting(ClassPartition::from_labels(ids), coeff).sample_weights(ids);
      },
      py::arg("labels"), py::arg("coefficients") = std::map<std::string, double>{},
      "Per-sample weights c/n of each sample's class.");

  m.def(
      "metrics",
      [](const std::vector<std::string>& predicted, const std::vector<std::string>& truth) {
        std::vector<int> p, t;
        for (const auto& l : predicted) p.push_back(index_of(to_label(l)));
        for (const auto& l : truth) t.push_back(index_of(to_label(l)));
        return to_python(metrics_json(confusion(p, t, kNumClasses), class_names()));
      },
      py::arg("predicted"), py::arg("truth"), "Accuracy, average precision and per-class scores.");

  m.def(
      "compare",
      [](std::uint64_t seed, double scale, int epochs, double eta, const std::vector<std::string>& methods) {
        const auto config = make_config(seed, scale, epochs, eta, methods);
        CompareReport report;
        {
          py::gil_scoped_release release;
          report = run_compare(config);
        }
        return to_python(report.json);
      },
      py::arg("seed") = 7, py::arg("scale") = kDefaultScale, py::arg("epochs") = 50, py::arg("eta") = 0.02,
      py::arg("methods") = std::vector<std::string>{}, "Train and evaluate methods on one split; returns the report.");

  m.def(
      "train",
      [](std::uint64_t seed, double scale, int epochs, double eta) {
        const auto config = make_config(seed, scale, epochs, eta, {});
        py::gil_scoped_release release;
        const PreparedData data = prepare_data(config);
        return Model(train_tsdnn(config, data));
      },
      py::arg("seed") = 7, py::arg("scale") = kDefaultScale, py::arg("epochs") = 50, py::arg("eta") = 0.02,
      "Train the tree-shaped network on synthetic data.");

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def("predict", &Model::predict, py::arg("features"), "Class name per row of raw features.")
      .def_property_readonly("feature_dim", &Model::feature_dim)
      .def_property_readonly("epochs_trained", &Model::epochs_trained);
}
