#include "saf/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "saf/errors.hpp"

namespace saf {

std::string_view to_string(Backbone b) { return b == Backbone::dann ? "dann" : "mdd"; }

std::string_view to_string(MixupMode m) {
  switch (m) {
    case MixupMode::saf: return "saf";
    case MixupMode::beta: return "beta";
    case MixupMode::constant: return "constant";
  }
  return "?";
}

std::string_view to_string(EntropyFilter f) {
  switch (f) {
    case EntropyFilter::none: return "none";
    case EntropyFilter::only_uncertain: return "only_uncertain";
    case EntropyFilter::only_certain: return "only_certain";
  }
  return "?";
}

std::string_view to_string(SafPosition p) {
  return p == SafPosition::features ? "features" : "bottleneck";
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(input_dim, "input_dim");
  positive(feature_hidden, "feature_hidden");
  positive(feature_dim, "feature_dim");
  positive(bottleneck_dim, "bottleneck_dim");
  positive(classifier_hidden, "classifier_hidden");
  positive(saf_dim, "saf_dim");
  positive(saf_bottlenecks, "saf_bottlenecks");
  if (num_classes < 2) throw ConfigError("model.num_classes must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
}

double MixupPolicy::threshold_for(std::size_t num_classes) const {
  return entropy_threshold.value_or(0.5 * std::log(static_cast<double>(num_classes)));
}

void MixupPolicy::validate() const {
  if (!(beta_alpha > 0.0)) throw ConfigError("mixup.beta_alpha must be positive");
  if (!(constant_eta > 0.0 && constant_eta < 1.0)) {
    throw ConfigError("mixup.constant_eta must lie in (0, 1)");
  }
  if (entropy_threshold && !(*entropy_threshold >= 0.0)) {
    throw ConfigError("mixup.entropy_threshold must be non-negative");
  }
}

void DataConfig::validate() const {
  if (source_csv.empty() != target_csv.empty()) {
    throw ConfigError("data.source_csv and data.target_csv must be given together");
  }
  if (!synthetic()) return;
  if (kind != "moons" && kind != "blobs") throw ConfigError("data.kind must be moons or blobs");
  if (n_samples < 2) throw ConfigError("data.n_samples must be at least 2");
  if (!(noise >= 0.0)) throw ConfigError("data.noise must be non-negative");
  if (!(scale > 0.0)) throw ConfigError("data.scale must be positive");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be at least 1");
  if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(lr_decay_alpha >= 0.0)) throw ConfigError("train.lr_decay_alpha must be non-negative");
  if (!(lr_decay_power >= 0.0)) throw ConfigError("train.lr_decay_power must be non-negative");
  if (!(lambda_d_max >= 0.0)) throw ConfigError("train.lambda_d_max must be non-negative");
  if (!(lambda_m_max >= 0.0)) throw ConfigError("train.lambda_m_max must be non-negative");
  if (!(margin_gamma > 1.0)) throw ConfigError("train.margin_gamma must exceed 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be at least 1");
  model.validate();
  mixup.validate();
  data.validate();
}

// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* what) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) +
                    "': expected " + what);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v, "true/false");
}

template <typename E>
E parse_enum(std::string_view key, std::string_view v, std::initializer_list<E> options) {
  std::string expected;
  for (E e : options) {
    if (v == to_string(e)) return e;
    if (!expected.empty()) expected += " | ";
    expected += to_string(e);
  }
  bad_value(key, v, expected.c_str());
}

struct Entry {
  const char* section;
  const char* key;
  const char* doc;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

#define SAF_SIZE(sec, field, member, doc)                                                    \
  Entry {                                                                                    \
    sec, #field, doc, [](const TrainConfig& c) { return std::to_string(c.member); },         \
        [](TrainConfig& c, std::string_view v) {                                             \
          c.member = static_cast<decltype(c.member)>(parse_uint(#field, v));                 \
        }                                                                                    \
  }
#define SAF_REAL(sec, field, member, doc)                                                    \
  Entry {                                                                                    \
    sec, #field, doc, [](const TrainConfig& c) { return format_double(c.member); },          \
        [](TrainConfig& c, std::string_view v) { c.member = parse_double(#field, v); }       \
  }
#define SAF_BOOL(sec, field, member, doc)                                                    \
  Entry {                                                                                    \
    sec, #field, doc,                                                                        \
        [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); },       \
        [](TrainConfig& c, std::string_view v) { c.member = parse_bool(#field, v); }         \
  }
#define SAF_TEXT(sec, field, member, doc)                                                    \
  Entry {                                                                                    \
    sec, #field, doc, [](const TrainConfig& c) { return c.member; },                         \
        [](TrainConfig& c, std::string_view v) { c.member = std::string(v); }                \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"train", "backbone", "adversarial backbone: dann | mdd",
            [](const TrainConfig& c) { return std::string(to_string(c.backbone)); },
            [](TrainConfig& c, std::string_view v) {
              c.backbone = parse_enum("backbone", v, {Backbone::dann, Backbone::mdd});
            }},
      SAF_SIZE("train", iterations, iterations, "total training iterations T"),
      SAF_SIZE("train", batch_size, batch_size, "rows per domain per step"),
      SAF_REAL("train", base_lr, base_lr, "learning rate of F and D; B, C, M use 10x"),
      SAF_REAL("train", momentum, momentum, "Nesterov momentum"),
      SAF_REAL("train", lr_decay_alpha, lr_decay_alpha,
               "lr = base_lr * (1 + alpha*t/T)^-power; 0 = constant"),
      SAF_REAL("train", lr_decay_power, lr_decay_power, "exponent of the learning-rate decay"),
      SAF_REAL("train", lambda_d_max, lambda_d_max, "final GRL weight, ramp max*tanh(10t/T)"),
      SAF_REAL("train", lambda_m_max, lambda_m_max, "final SAF weight, ramp max*tanh(5t/T)"),
      SAF_REAL("train", margin_gamma, margin_gamma, "MDD source-term weight exp(rho)"),
      SAF_BOOL("train", saf_enabled, saf_enabled, "add the SAF-supervision loss"),
      SAF_SIZE("train", eval_every, eval_every, "iterations between evaluations"),
      SAF_SIZE("train", seed, seed, "seed for initialisation, shuffling, dropout and mixup"),

      SAF_SIZE("model", input_dim, model.input_dim, "input feature width"),
      SAF_SIZE("model", feature_hidden, model.feature_hidden, "hidden width of F"),
      SAF_SIZE("model", feature_dim, model.feature_dim, "output width of F"),
      SAF_SIZE("model", bottleneck_dim, model.bottleneck_dim, "output width of B"),
      SAF_SIZE("model", classifier_hidden, model.classifier_hidden, "hidden width of C and D"),
      SAF_SIZE("model", num_classes, model.num_classes, "number of classes"),
      SAF_SIZE("model", saf_dim, model.saf_dim, "output width of each SAF bottleneck"),
      SAF_SIZE("model", saf_bottlenecks, model.saf_bottlenecks, "number of SAF bottlenecks"),
      SAF_REAL("model", dropout, model.dropout, "dropout rate in B, C and D"),
      Entry{"model", "saf_position", "SAF input: features (after F) | bottleneck (after B)",
            [](const TrainConfig& c) { return std::string(to_string(c.model.saf_position)); },
            [](TrainConfig& c, std::string_view v) {
              c.model.saf_position =
                  parse_enum("saf_position", v, {SafPosition::features, SafPosition::bottleneck});
            }},

      Entry{"mixup", "mode", "mixup weight source: saf | beta | constant",
            [](const TrainConfig& c) { return std::string(to_string(c.mixup.mode)); },
            [](TrainConfig& c, std::string_view v) {
              c.mixup.mode =
                  parse_enum("mode", v, {MixupMode::saf, MixupMode::beta, MixupMode::constant});
            }},
      SAF_REAL("mixup", beta_alpha, mixup.beta_alpha, "alpha of Beta(alpha, alpha) in beta mode"),
      SAF_REAL("mixup", constant_eta, mixup.constant_eta, "eta in constant mode"),
      Entry{"mixup", "entropy_filter", "row filter: none | only_uncertain | only_certain",
            [](const TrainConfig& c) { return std::string(to_string(c.mixup.entropy_filter)); },
            [](TrainConfig& c, std::string_view v) {
              c.mixup.entropy_filter =
                  parse_enum("entropy_filter", v,
                             {EntropyFilter::none, EntropyFilter::only_uncertain,
                              EntropyFilter::only_certain});
            }},
      Entry{"mixup", "entropy_threshold", "entropy cut; auto = 0.5*log(num_classes)",
            [](const TrainConfig& c) {
              return c.mixup.entropy_threshold ? format_double(*c.mixup.entropy_threshold)
                                               : std::string("auto");
            },
            [](TrainConfig& c, std::string_view v) {
              if (v == "auto") {
                c.mixup.entropy_threshold.reset();
              } else {
                c.mixup.entropy_threshold = parse_double("entropy_threshold", v);
              }
            }},
      SAF_BOOL("mixup", include_source, mixup.include_source,
               "pool source rows (one-hot labels) with target rows"),

      SAF_TEXT("data", source_csv, data.source_csv, "labelled source CSV; empty = synthetic"),
      SAF_TEXT("data", target_csv, data.target_csv, "target CSV (labels used for evaluation only)"),
      SAF_TEXT("data", kind, data.kind, "synthetic generator: moons | blobs"),
      SAF_SIZE("data", n_samples, data.n_samples, "synthetic samples per domain"),
      SAF_REAL("data", noise, data.noise, "synthetic Gaussian noise sd"),
      SAF_REAL("data", rotation, data.rotation, "target rotation in degrees"),
      SAF_REAL("data", translate_x, data.translate_x, "target translation x"),
      SAF_REAL("data", translate_y, data.translate_y, "target translation y"),
      SAF_REAL("data", scale, data.scale, "target scale"),
      SAF_SIZE("data", seed, data.seed, "synthetic data seed"),
  };
  return table;
}

#undef SAF_SIZE
#undef SAF_REAL
#undef SAF_BOOL
#undef SAF_TEXT

const Entry* find_entry(std::string_view section, std::string_view key) {
  for (const Entry& e : entries()) {
    if (section == e.section && key == e.key) return &e;
  }
  return nullptr;
}

}  // namespace

TrainConfig parse_config(std::string_view text) {
  TrainConfig config;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = " (line " + std::to_string(line_no) + ")";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header" + where);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "train" && section != "model" && section != "mixup" && section != "data") {
        throw ConfigError("unknown section '" + section + "'" + where);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key = value" + where);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + std::string(key) + "' outside a section" + where);
    const Entry* entry = find_entry(section, key);
    if (entry == nullptr) {
      throw ConfigError("unknown key '" + section + "." + std::string(key) + "'" + where);
    }
    if (!seen.insert(section + "." + std::string(key)).second) {
      throw ConfigError("duplicate key '" + section + "." + std::string(key) + "'" + where);
    }
    entry->set(config, value);
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string render_config(const TrainConfig& config, bool documented) {
  std::ostringstream out;
  std::string section;
  for (const Entry& e : entries()) {
    if (section != e.section) {
      if (!section.empty()) out << '\n';
      section = e.section;
      out << '[' << section << "]\n";
    }
    if (documented) out << "# " << e.doc << '\n';
    out << e.key << " = " << e.get(config) << '\n';
  }
  return out.str();
}

void apply_override(TrainConfig& config, std::string_view section, std::string_view key,
                    std::string_view value) {
  const Entry* entry = find_entry(section, key);
  if (entry == nullptr) {
    throw ConfigError("unknown key '" + std::string(section) + "." + std::string(key) + "'");
  }
  entry->set(config, value);
}

}  // namespace saf
