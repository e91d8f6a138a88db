#include "saf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "saf/errors.hpp"
#include "saf/losses.hpp"
#include "saf/mixup.hpp"
#include "saf/optimizer.hpp"
#include "saf/text.hpp"

namespace saf {

namespace {

double ramp(std::size_t t, std::size_t total, double max, double rate) {
  if (total == 0) throw ConfigError("schedule: total iterations must be positive");
  const double frac = static_cast<double>(std::min(t, total)) / static_cast<double>(total);
  return max * std::tanh(rate * frac);
}

}  // namespace

double lambda_d_schedule(std::size_t t, std::size_t total, double max) { return ramp(t, total, max, 10.0); }
double lambda_m_schedule(std::size_t t, std::size_t total, double max) { return ramp(t, total, max, 5.0); }

double learning_rate_schedule(std::size_t t, std::size_t total, double base, double alpha,
                              double power) {
  if (total == 0) throw ConfigError("schedule: total iterations must be positive");
  const double frac = static_cast<double>(std::min(t, total)) / static_cast<double>(total);
  return base * std::pow(1.0 + alpha * frac, -power);
}

TrainRngs TrainRngs::from_seed(std::uint64_t seed) {
  auto stream = [seed](std::uint32_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  };
  return TrainRngs{Rng(stream(1)), Rng(stream(2)), Rng(stream(3)), Rng(stream(4)), Rng(stream(5)),
                   stream(6), stream(7)};
}

Objective build_objective(ModelBundle& bundle, const Batch& src, const Batch& tgt,
                          const TrainConfig& config, std::size_t t, TrainRngs& rngs, Tape& tape,
                          bool update_stats, const Matrix* pseudo_labels) {
  const std::vector<int>& y_src = src.require_labels("train_step: source batch");
  if (src.size() == 0 || tgt.size() == 0) throw DataError("train_step: empty batch");
  if (tgt.width() != src.width()) throw ShapeError("train_step: source and target widths differ");
  const std::size_t ns = src.size();
  const std::size_t n = ns + tgt.size();

  Matrix x(n, src.width());
  std::copy(src.features.data().begin(), src.features.data().end(), x.data().begin());
  std::copy(tgt.features.data().begin(), tgt.features.data().end(),
            x.data().begin() + static_cast<std::ptrdiff_t>(src.features.size()));

  Objective obj;
  StepResult& out = obj.summary;
  out.lambda_d = lambda_d_schedule(t, config.iterations, config.lambda_d_max);
  out.lambda_m = lambda_m_schedule(t, config.iterations, config.lambda_m_max);

  const ForwardMode mode = ForwardMode::train(rngs.dropout, update_stats);
  Tensor phi = forward_features(bundle, tape, x, mode);
  Tensor h = bottleneck(bundle, phi, mode);
  Tensor logits = classifier_head(bundle, h, mode);
  Tensor logits_s = slice_rows(logits, 0, ns);
  Tensor logits_t = slice_rows(logits, ns, n);

  obj.eps_c = cross_entropy(logits_s, y_src);

  Tensor adv = adversary_logits(bundle, phi, out.lambda_d, ForwardMode::train(rngs.adversary_dropout));
  Tensor adv_s = slice_rows(adv, 0, ns);
  Tensor adv_t = slice_rows(adv, ns, n);
  obj.eps_d = config.backbone == Backbone::dann
                  ? dann_domain_loss(adv_s, adv_t)
                  : mdd_adversarial_loss(logits_s, adv_s, logits_t, adv_t,
                                         MarginParams::from_gamma(config.margin_gamma));
  obj.total = add(obj.eps_c, obj.eps_d);

  if (config.saf_enabled) {
    const bool at_features = config.model.saf_position == SafPosition::features;
    const Tensor& tap = at_features ? phi : h;
    std::optional<SourcePool> pool;
    if (config.mixup.include_source) pool = SourcePool{slice_rows(tap, 0, ns), y_src};
    MixedBatch mixed = saf_mixup_batch(bundle, slice_rows(tap, ns, n), config.mixup, rngs.mixup, pool,
                                       pseudo_labels);
    obj.eps_m = saf_supervision_loss(bundle, mixed, tape, ForwardMode::frozen_norm(rngs.saf_dropout));
    out.eps_m = obj.eps_m.item();
    out.mixed_pairs = mixed.size();
    obj.pseudo_labels = std::move(mixed.target_probs);
    obj.total = add(obj.total, scale(obj.eps_m, out.lambda_m));
  }
  out.eps_c = obj.eps_c.item();
  out.eps_d = obj.eps_d.item();
  return obj;
}

StepResult train_step(ModelBundle& bundle, const Batch& src, const Batch& tgt,
                      const TrainConfig& config, std::size_t t, TrainRngs& rngs) {
  Tape tape;
  Objective obj = build_objective(bundle, src, tgt, config, t, rngs, tape);
  tape.backward(obj.total);
  const double lr = learning_rate_schedule(t, config.iterations, config.base_lr,
                                           config.lr_decay_alpha, config.lr_decay_power);
  sgd_nesterov_step(tape.parameters(), lr, config.momentum);
  return obj.summary;
}

MetricsRecord evaluate(ModelBundle& bundle, const Batch& src_eval, const Batch& tgt_eval,
                       const TrainConfig& config) {
  const std::vector<int>& y_s = src_eval.require_labels("evaluate: source set");
  const std::vector<int>& y_t = tgt_eval.require_labels("evaluate: target set");
  if (src_eval.size() == 0 || tgt_eval.size() == 0) throw DataError("evaluate: empty evaluation set");

  Tape tape;
  const ForwardMode mode = ForwardMode::eval();
  Tensor h_s = bottleneck(bundle, forward_features(bundle, tape, src_eval.features, mode), mode);
  Tensor h_t = bottleneck(bundle, forward_features(bundle, tape, tgt_eval.features, mode), mode);
  const Matrix logits_s = classifier_head(bundle, h_s, mode).value();
  const Matrix logits_t = classifier_head(bundle, h_t, mode).value();

  MetricsRecord r;
  r.src_acc = accuracy(logits_s, y_s);
  r.tgt_acc = accuracy(logits_t, y_t);
  const Matrix probs_t = softmax_values(logits_t);
  const std::vector<double> ent = conditional_entropy(probs_t);
  r.tgt_entropy = std::accumulate(ent.begin(), ent.end(), 0.0) / static_cast<double>(ent.size());

  if (config.backbone == Backbone::mdd) {
    const double rho = MarginParams::from_gamma(config.margin_gamma).rho;
    const Matrix adv_s = softmax_values(bundle.D.forward(h_s, mode).value());
    const Matrix adv_t = softmax_values(bundle.D.forward(h_t, mode).value());
    const double delta_s = empirical_margin_disparity(softmax_values(logits_s), adv_s, rho);
    const double delta_t = empirical_margin_disparity(probs_t, adv_t, rho);
    r.mdd_est = empirical_mdd_estimate(delta_s, delta_t);
  } else {
    r.mdd_est = std::numeric_limits<double>::quiet_NaN();
  }
  r.h_div = empirical_h_divergence(h_s.value(), h_t.value());
  return r;
}

Domains load_domains(const TrainConfig& config) {
  const DataConfig& d = config.data;
  const std::size_t k = config.model.num_classes;
  Domains out;
  if (d.synthetic()) {
    DomainSpec spec;
    spec.generator = d.kind == "blobs" ? Generator::gaussian_blobs : Generator::two_moons;
    spec.n_samples = d.n_samples;
    spec.noise_sd = d.noise;
    spec.seed = d.seed;
    DomainSpec shifted = spec;
    shifted.rotation_deg = d.rotation;
    shifted.translation = {d.translate_x, d.translate_y};
    shifted.scale = d.scale;
    if (spec.generator == Generator::two_moons) {
      if (k != 2) throw ConfigError("moons data needs model.num_classes = 2");
      out.source = gen_two_moons(spec, kSourceDomain);
      out.target = gen_two_moons(shifted, kTargetDomain);
    } else {
      const auto centers = default_blob_centers(k);
      out.source = gen_gaussian_blobs(spec, k, centers, kSourceDomain);
      out.target = gen_gaussian_blobs(shifted, k, centers, kTargetDomain);
    }
  } else {
    if (d.source_csv.empty() || d.target_csv.empty()) {
      throw ConfigError("data: source_csv and target_csv must be given together");
    }
    out.source = load_csv(d.source_csv, true, kSourceDomain, k);
    out.target = load_csv(d.target_csv, true, kTargetDomain, k);
  }
  for (const Batch* b : {&out.source, &out.target}) {
    if (b->width() != config.model.input_dim) {
      throw DataError("data width " + std::to_string(b->width()) + " does not match model.input_dim " +
                      std::to_string(config.model.input_dim));
    }
    b->validate(k);
  }
  return out;
}

std::string format_metrics_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.iteration);
  for (double v : {r.eps_c, r.eps_d, r.eps_m, r.lambda_d, r.lambda_m, r.src_acc, r.tgt_acc, r.tgt_entropy,
                   r.mdd_est, r.h_div}) {
    s += ',';
    s += format_double(v);
  }
  return s;
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMetricsHeader) {
    throw ParseError(path + ": unexpected metrics header");
  }
  std::vector<MetricsRecord> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split(trim(line), ',');
    if (cells.size() != 11) throw ParseError(path + ": row " + std::to_string(row) + " needs 11 cells");
    MetricsRecord r;
    const auto it = parse_integer(cells[0]);
    if (!it || *it < 0) throw ParseError(path + ": row " + std::to_string(row) + ": bad iteration");
    r.iteration = static_cast<std::size_t>(*it);
    double* fields[] = {&r.eps_c, &r.eps_d, &r.eps_m, &r.lambda_d, &r.lambda_m, &r.src_acc,
                        &r.tgt_acc, &r.tgt_entropy, &r.mdd_est, &r.h_div};
    for (std::size_t c = 0; c < 10; ++c) {
      const auto v = parse_double(cells[c + 1]);
      if (!v) throw ParseError(path + ": row " + std::to_string(row) + ": non-numeric cell");
      *fields[c] = *v;
    }
    out.push_back(r);
  }
  return out;
}

RunResult run_experiment(const TrainConfig& config, const Domains& domains, const std::string& run_dir) {
  config.validate();
  TrainRngs rngs = TrainRngs::from_seed(config.seed);
  ModelBundle bundle = build_bundle(config, rngs.init);

  const Batch source = domains.source;
  const Batch target_train = domains.target.without_labels();
  source.require_labels("run_experiment: source domain");
  CyclingLoader src_loader(source, config.batch_size, rngs.source_loader_seed);
  CyclingLoader tgt_loader(target_train, config.batch_size, rngs.target_loader_seed);

  RunResult result;
  result.run_dir = run_dir;
  std::ofstream metrics;
  if (!run_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) throw IoError("cannot create run directory " + run_dir + ": " + ec.message());
    const std::string cfg_path = run_dir + "/config.cfg";
    std::ofstream cfg(cfg_path);
    if (!cfg || !(cfg << render_config(config))) throw IoError("cannot write " + cfg_path);
    result.metrics_path = run_dir + "/metrics.csv";
    result.model_path = run_dir + "/model.txt";
    metrics.open(result.metrics_path);
    if (!metrics) throw IoError("cannot write " + result.metrics_path);
    metrics << kMetricsHeader << '\n' << std::flush;
  }

  double sum_c = 0.0, sum_d = 0.0, sum_m = 0.0;
  std::size_t since = 0;
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const Batch sb = src_loader.next();
    const Batch tb = tgt_loader.next();
    const StepResult step = train_step(bundle, sb, tb, config, t, rngs);
    sum_c += step.eps_c;
    sum_d += step.eps_d;
    sum_m += step.eps_m;
    ++since;
    const std::size_t iter = t + 1;
    if (iter % config.eval_every == 0 || iter == config.iterations) {
      MetricsRecord r = evaluate(bundle, domains.source, domains.target, config);
      r.iteration = iter;
      r.eps_c = sum_c / static_cast<double>(since);
      r.eps_d = sum_d / static_cast<double>(since);
      r.eps_m = sum_m / static_cast<double>(since);
      r.lambda_d = step.lambda_d;
      r.lambda_m = step.lambda_m;
      sum_c = sum_d = sum_m = 0.0;
      since = 0;
      if (metrics.is_open()) {
        metrics << format_metrics_row(r) << '\n' << std::flush;
        if (!metrics) throw IoError("failed writing " + result.metrics_path);
      }
      result.records.push_back(r);
    }
  }
  if (!run_dir.empty()) save_bundle(bundle, result.model_path);
  return result;
}

RunResult run_experiment(const TrainConfig& config, const std::string& run_dir) {
  return run_experiment(config, load_domains(config), run_dir);
}

}  // namespace saf
