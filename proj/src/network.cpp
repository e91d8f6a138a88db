#include "saf/network.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "saf/errors.hpp"

namespace saf {

void MlpSpec::validate() const {
  if (input_width == 0) throw ConfigError("mlp: input width must be positive");
  if (widths.empty()) throw ConfigError("mlp: at least one layer required");
  if (activations.size() != widths.size() || dropout_rates.size() != widths.size() ||
      batch_norm.size() != widths.size()) {
    throw ConfigError("mlp: widths, activations, dropout rates and batch-norm flags differ in length");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("mlp: layer widths must be positive");
  }
  for (double r : dropout_rates) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("mlp: dropout rate must lie in [0, 1)");
  }
}

namespace {

Matrix uniform_init(std::size_t in, std::size_t out, double limit, Rng& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(in, out);
  for (double& v : w.data()) v = u(rng);
  return w;
}

}  // namespace

Mlp::Mlp(const std::string& name, MlpSpec spec, double lr_multiplier, Rng& rng)
    : name_(name), spec_(std::move(spec)) {
  spec_.validate();
  std::size_t in = spec_.input_width;
  for (std::size_t i = 0; i < spec_.widths.size(); ++i) {
    const std::size_t out = spec_.widths[i];
    const std::string prefix = name_ + "." + std::to_string(i) + ".";
    DenseLayer layer;
    const double limit = spec_.activations[i] == Activation::relu
                             ? std::sqrt(6.0 / static_cast<double>(in))
                             : std::sqrt(6.0 / static_cast<double>(in + out));
    layer.weight = Parameter(prefix + "weight", uniform_init(in, out, limit, rng), lr_multiplier);
    layer.bias = Parameter(prefix + "bias", Matrix(1, out, 0.0), lr_multiplier);
    layer.has_batch_norm = spec_.batch_norm[i];
    if (layer.has_batch_norm) {
      layer.gamma = Parameter(prefix + "gamma", Matrix(1, out, 1.0), lr_multiplier);
      layer.beta = Parameter(prefix + "beta", Matrix(1, out, 0.0), lr_multiplier);
      layer.bn = BatchNormState(out);
    }
    layer.activation = spec_.activations[i];
    layer.dropout = spec_.dropout_rates[i];
    layers_.push_back(std::move(layer));
    in = out;
  }
}

Tensor Mlp::forward(const Tensor& x, const ForwardMode& mode) {
  if (x.cols() != spec_.input_width) {
    throw ShapeError(name_ + ": expected input width " + std::to_string(spec_.input_width) +
                     ", got " + shape_string(x.value()));
  }
  Tape& tape = x.tape();
  Tensor h = x;
  for (DenseLayer& layer : layers_) {
    h = add_row(matmul(h, tape.parameter(layer.weight)), tape.parameter(layer.bias));
    if (layer.has_batch_norm) {
      h = batch_norm(h, tape.parameter(layer.gamma), tape.parameter(layer.beta), layer.bn,
                     mode.training && mode.batch_stats, mode.update_stats);
    }
    switch (layer.activation) {
      case Activation::relu: h = relu(h); break;
      case Activation::sigmoid: h = sigmoid(h); break;
      case Activation::none: break;
    }
    if (layer.dropout > 0.0 && mode.training) {
      if (mode.rng == nullptr) throw StateError(name_ + ": training-mode dropout needs an rng");
      h = dropout(h, layer.dropout, true, *mode.rng);
    }
  }
  return h;
}

void Mlp::collect_parameters(std::vector<Parameter*>& out) {
  for (DenseLayer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.has_batch_norm) {
      out.push_back(&layer.gamma);
      out.push_back(&layer.beta);
    }
  }
}

void SafModule::collect_parameters(std::vector<Parameter*>& out) {
  for (Mlp& s : bottlenecks) s.collect_parameters(out);
  estimator.collect_parameters(out);
}

std::vector<Parameter*> ModelBundle::parameters() {
  std::vector<Parameter*> out;
  F.collect_parameters(out);
  B.collect_parameters(out);
  C.collect_parameters(out);
  D.collect_parameters(out);
  M.collect_parameters(out);
  return out;
}

std::vector<Parameter*> ModelBundle::block_parameters(const std::string& block) {
  std::vector<Parameter*> out;
  if (block == "F") F.collect_parameters(out);
  else if (block == "B") B.collect_parameters(out);
  else if (block == "C") C.collect_parameters(out);
  else if (block == "D") D.collect_parameters(out);
  else if (block == "M") M.collect_parameters(out);
  else throw ConfigError("unknown block '" + block + "'");
  return out;
}

ModelBundle build_bundle(const ModelConfig& dims, Backbone backbone, Rng& rng) {
  dims.validate();
  constexpr double kHeadRate = 10.0;
  const auto R = Activation::relu;
  const auto N = Activation::none;
  const double p = dims.dropout;

  ModelBundle b;
  b.backbone = backbone;
  b.dims = dims;
  b.F = Mlp("F", {dims.input_dim, {dims.feature_hidden, dims.feature_dim}, {R, R}, {0, 0}, {false, false}},
            1.0, rng);
  b.B = Mlp("B", {dims.feature_dim, {dims.bottleneck_dim}, {R}, {p}, {true}}, kHeadRate, rng);
  b.C = Mlp("C", {dims.bottleneck_dim, {dims.classifier_hidden, dims.num_classes}, {R, N}, {p, 0},
                  {false, false}},
            kHeadRate, rng);
  const std::size_t d_out = backbone == Backbone::dann ? 2 : dims.num_classes;
  b.D = Mlp("D", {dims.bottleneck_dim, {dims.classifier_hidden, d_out}, {R, N}, {p, 0}, {false, false}},
            1.0, rng);

  const std::size_t saf_in =
      dims.saf_position == SafPosition::features ? dims.feature_dim : dims.bottleneck_dim;
  for (std::size_t i = 0; i < dims.saf_bottlenecks; ++i) {
    b.M.bottlenecks.emplace_back("M.S" + std::to_string(i + 1),
                                 MlpSpec{saf_in, {dims.saf_dim}, {R}, {0}, {false}}, kHeadRate, rng);
  }
  b.M.estimator = Mlp("M.eta", {dims.saf_dim, {1}, {Activation::sigmoid}, {0}, {false}}, kHeadRate, rng);
  return b;
}

ModelBundle build_bundle(const TrainConfig& config, Rng& rng) {
  return build_bundle(config.model, config.backbone, rng);
}

Tensor forward_features(ModelBundle& bundle, Tape& tape, const Matrix& x, const ForwardMode& mode) {
  return bundle.F.forward(tape.constant(x), mode);
}

Tensor bottleneck(ModelBundle& bundle, const Tensor& features, const ForwardMode& mode) {
  return bundle.B.forward(features, mode);
}

Tensor classifier_head(ModelBundle& bundle, const Tensor& h, const ForwardMode& mode) {
  return bundle.C.forward(h, mode);
}

Tensor classify(ModelBundle& bundle, const Tensor& features, const ForwardMode& mode) {
  return bundle.C.forward(bundle.B.forward(features, mode), mode);
}

Tensor adversary_logits(ModelBundle& bundle, const Tensor& features, double lambda_d,
                        const ForwardMode& mode) {
  ForwardMode adv = mode;
  adv.update_stats = false;
  return bundle.D.forward(grad_reverse(bundle.B.forward(features, adv), lambda_d), adv);
}

Tensor saf_weight(SafModule& m, const Tensor& phi1, const Tensor& phi2) {
  if (phi1.cols() != m.input_width() || !phi1.value().same_shape(phi2.value())) {
    throw ShapeError("saf_weight: inputs " + shape_string(phi1.value()) + " and " +
                     shape_string(phi2.value()) + " do not match SAF width " +
                     std::to_string(m.input_width()));
  }
  const ForwardMode mode = ForwardMode::eval();
  Tensor acc;
  if (m.bottlenecks.size() == 1) {
    acc = add(m.bottlenecks[0].forward(phi1, mode), m.bottlenecks[0].forward(phi2, mode));
  } else {
    for (std::size_t i = 0; i < m.bottlenecks.size(); ++i) {
      Tensor s = m.bottlenecks[i].forward(i % 2 == 0 ? phi1 : phi2, mode);
      acc = acc.valid() ? add(acc, s) : s;
    }
  }
  return m.estimator.forward(acc, mode);
}

// ---------------------------------------------------------------------------
// Parameter files

namespace {

template <typename Bundle, typename Fn>
void visit_records(Bundle& bundle, Fn&& fn) {
  auto visit_mlp = [&](auto& mlp) {
    for (auto& layer : mlp.layers()) {
      fn(layer.weight.name, layer.weight.value);
      fn(layer.bias.name, layer.bias.value);
      if (layer.has_batch_norm) {
        fn(layer.gamma.name, layer.gamma.value);
        fn(layer.beta.name, layer.beta.value);
        const std::string base = layer.gamma.name.substr(0, layer.gamma.name.size() - 5);
        fn(base + "running_mean", layer.bn.running_mean);
        fn(base + "running_var", layer.bn.running_var);
      }
    }
  };
  visit_mlp(bundle.F);
  visit_mlp(bundle.B);
  visit_mlp(bundle.C);
  visit_mlp(bundle.D);
  for (auto& s : bundle.M.bottlenecks) visit_mlp(s);
  visit_mlp(bundle.M.estimator);
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write parameter file " + path);
  char buf[32];
  visit_records(bundle, [&](const std::string& name, const Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols();
    for (double v : m.data()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  });
  if (!out) throw IoError("failed writing parameter file " + path);
}

void load_bundle(ModelBundle& bundle, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open parameter file " + path);
  std::map<std::string, Matrix> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(ls >> name >> rows >> cols)) {
      throw ParseError(path + ": malformed record header on line " + std::to_string(line_no));
    }
    std::vector<double> values;
    values.reserve(rows * cols);
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        throw ParseError(path + ": non-numeric value on line " + std::to_string(line_no));
      }
      values.push_back(v);
    }
    if (values.size() != rows * cols) {
      throw ParseError(path + ": record " + name + " has " + std::to_string(values.size()) +
                       " values, expected " + std::to_string(rows * cols));
    }
    records[name] = Matrix(rows, cols, std::move(values));
  }
  std::size_t used = 0;
  visit_records(bundle, [&](const std::string& name, Matrix& m) {
    auto it = records.find(name);
    if (it == records.end()) throw ParseError(path + ": missing record " + name);
    if (!it->second.same_shape(m)) {
      throw ShapeError(path + ": record " + name + " has shape " + shape_string(it->second) +
                       ", model expects " + shape_string(m));
    }
    m = it->second;
    ++used;
  });
  if (used != records.size()) throw ParseError(path + ": file holds records the model does not have");
}

}  // namespace saf
