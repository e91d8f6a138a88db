#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "saf/cli.hpp"
#include "saf/config.hpp"
#include "saf/data.hpp"
#include "saf/embedding.hpp"
#include "saf/errors.hpp"
#include "saf/losses.hpp"
#include "saf/trainer.hpp"

namespace py = pybind11;
using namespace saf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::tuple batch_tuple(const Batch& b) {
  py::array_t<int> labels(b.size());
  std::copy(b.labels->begin(), b.labels->end(), labels.mutable_data());
  return py::make_tuple(to_array(b.features), labels);
}

TrainConfig make_config(const std::string& text, const std::map<std::string, std::string>& overrides) {
  TrainConfig config = text.empty() ? TrainConfig{} : parse_config(text);
  for (const auto& [name, value] : overrides) {
    const auto dot = name.find('.');
    if (dot == std::string::npos) throw ConfigError("override '" + name + "' must be section.key");
    apply_override(config, name.substr(0, dot), name.substr(dot + 1), value);
  }
  config.validate();
  return config;
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["iter"] = r.iteration;
  d["eps_c"] = r.eps_c;
  d["eps_d"] = r.eps_d;
  d["eps_m"] = r.eps_m;
  d["lambda_d"] = r.lambda_d;
  d["lambda_m"] = r.lambda_m;
  d["src_acc"] = r.src_acc;
  d["tgt_acc"] = r.tgt_acc;
  d["tgt_entropy"] = r.tgt_entropy;
  d["mdd_est"] = r.mdd_est;
  d["h_div"] = r.h_div;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Shuffle augmentation of features for unsupervised domain adaptation";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<BatchError>(m, "BatchError", error.ptr());
  py::register_exception<StateError>(m, "StateError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());

  m.def("lambda_d_schedule", &lambda_d_schedule, py::arg("t"), py::arg("total"), py::arg("max"));
  m.def("lambda_m_schedule", &lambda_m_schedule, py::arg("t"), py::arg("total"), py::arg("max"));
  m.def("learning_rate_schedule", &learning_rate_schedule, py::arg("t"), py::arg("total"),
        py::arg("base"), py::arg("alpha") = 0.0, py::arg("power") = 0.75);

  m.def("default_config", [](bool documented) { return render_config(TrainConfig{}, documented); },
        py::arg("documented") = false);
  m.def("resolve_config", [](const std::string& text, const std::map<std::string, std::string>& overrides) {
    return render_config(make_config(text, overrides));
  }, py::arg("text") = "", py::arg("overrides") = std::map<std::string, std::string>{});

  m.def("two_moons", [](std::size_t n, double noise, double rotation, std::uint64_t seed) {
    DomainSpec spec;
    spec.n_samples = n;
    spec.noise_sd = noise;
    spec.rotation_deg = rotation;
    spec.seed = seed;
    return batch_tuple(gen_two_moons(spec));
  }, py::arg("n") = 400, py::arg("noise") = 0.15, py::arg("rotation") = 0.0, py::arg("seed") = 0);
  m.def("gaussian_blobs", [](std::size_t n, std::size_t k, double noise, double rotation, std::uint64_t seed) {
    DomainSpec spec;
    spec.generator = Generator::gaussian_blobs;
    spec.n_samples = n;
    spec.noise_sd = noise;
    spec.rotation_deg = rotation;
    spec.seed = seed;
    const auto centers = default_blob_centers(k);
    return batch_tuple(gen_gaussian_blobs(spec, k, centers));
  }, py::arg("n") = 400, py::arg("k") = 3, py::arg("noise") = 0.15, py::arg("rotation") = 0.0,
        py::arg("seed") = 0);

  m.def("pca", [](const Array& x, std::size_t components) {
    PcaOptions options;
    options.components = components;
    const PcaResult r = pca(to_matrix(x), options);
    py::dict d;
    d["mean"] = to_array(r.mean);
    d["directions"] = to_array(r.directions);
    d["eigenvalues"] = r.eigenvalues;
    d["projected"] = to_array(r.projected);
    return d;
  }, py::arg("x"), py::arg("components") = 2);
  m.def("h_divergence", [](const Array& src, const Array& tgt, std::size_t grid) {
    return empirical_h_divergence(to_matrix(src), to_matrix(tgt), grid);
  }, py::arg("source"), py::arg("target"), py::arg("grid") = 64);
  m.def("conditional_entropy", [](const Array& probs) { return conditional_entropy(to_matrix(probs)); },
        py::arg("probs"));

  m.def("train", [](const std::string& text, const std::map<std::string, std::string>& overrides,
                    const std::string& run_dir) {
    const TrainConfig config = make_config(text, overrides);
    RunResult result;
    {
      py::gil_scoped_release release;
      result = run_experiment(config, run_dir);
    }
    py::list rows;
    for (const MetricsRecord& r : result.records) rows.append(record_dict(r));
    return rows;
  }, py::arg("config") = "", py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("run_dir") = "");

  m.def("cli", [](const std::vector<std::string>& args) {
    std::vector<const char*> argv{"saf_lab"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
