#include "saf/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "saf/data.hpp"
#include "saf/embedding.hpp"
#include "saf/errors.hpp"
#include "saf/network.hpp"
#include "saf/text.hpp"

namespace saf {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  text = trim(text);
  auto number = [&](std::string_view s) {
    const auto v = parse_integer(trim(s));
    if (!v || *v < 0) throw ConfigError("bad seed '" + std::string(s) + "' in seed list");
    return static_cast<std::uint64_t>(*v);
  };
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string_view::npos) {
    const std::uint64_t lo = number(text.substr(0, dots));
    const std::uint64_t hi = number(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("seed range '" + std::string(text) + "' is empty");
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  } else {
    for (std::string_view part : split(text, ',')) out.push_back(number(part));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = i + 1; j < out.size(); ++j) {
      if (out[i] == out[j]) throw ConfigError("seed " + std::to_string(out[i]) + " listed twice");
    }
  }
  return out;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SAF_LAB_THREADS")) {
    const auto v = parse_integer(trim(env));
    if (v && *v > 0) n = static_cast<std::size_t>(*v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = worker_count(jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return {std::nan(""), std::nan("")};
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

Aggregate aggregate_from_csvs(const std::vector<std::string>& metrics_paths) {
  std::vector<double> acc;
  for (const auto& p : metrics_paths) {
    const auto records = read_metrics_csv(p);
    if (records.empty()) throw DataError(p + ": no evaluation rows");
    acc.push_back(records.back().tgt_acc);
  }
  return aggregate(acc);
}

DataFiles materialize_data(const Domains& domains, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  DataFiles f;
  f.source = (fs::path(dir) / "source.csv").string();
  f.target = (fs::path(dir) / "target.csv").string();
  save_csv(domains.source, f.source);
  save_csv(domains.target, f.target);
  f.source_hash = fnv1a_file(f.source);
  f.target_hash = fnv1a_file(f.target);
  return f;
}

std::vector<SeedRun> run_seeds(const TrainConfig& base, const Domains& domains,
                               const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  std::vector<SeedRun> runs(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.seed = seeds[i];
    const RunResult r = run_experiment(cfg, domains, out_dir + "/seed_" + std::to_string(seeds[i]));
    runs[i] = {seeds[i], r.run_dir, r.metrics_path, r.model_path, r.records.back().tgt_acc};
  });
  return runs;
}

namespace {

json aggregate_json(const Aggregate& a) {
  return {{"mean_tgt_acc", a.mean}, {"sd_tgt_acc", a.sd}};
}

json data_json(const DataFiles& data) {
  return {{"source", data.source},
          {"target", data.target},
          {"source_fnv1a", data.source_hash},
          {"target_fnv1a", data.target_hash}};
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out || !(out << j.dump(2) << '\n')) throw IoError("cannot write " + path);
}

}  // namespace

void write_run_manifest(const std::string& path, const TrainConfig& config,
                        const std::vector<SeedRun>& runs, const DataFiles& data) {
  json j;
  j["config"] = render_config(config);
  j["seeds"] = json::array();
  j["runs"] = json::array();
  std::vector<std::string> csvs;
  for (const auto& r : runs) {
    j["seeds"].push_back(r.seed);
    j["runs"].push_back({{"seed", r.seed},
                         {"run_dir", r.run_dir},
                         {"metrics", r.metrics_path},
                         {"model", r.model_path},
                         {"final_tgt_acc", r.final_tgt_acc}});
    csvs.push_back(r.metrics_path);
  }
  j["aggregate"] = aggregate_json(aggregate_from_csvs(csvs));
  j["data"] = data_json(data);
  write_json(path, j);
}

std::vector<AblationVariant> ablation_grid(const TrainConfig& base) {
  TrainConfig saf = base;
  saf.saf_enabled = true;
  auto variant = [&](std::string name, auto&& edit) {
    TrainConfig c = saf;
    edit(c);
    return AblationVariant{std::move(name), std::move(c)};
  };
  return {
      variant("backbone_only", [](TrainConfig& c) { c.saf_enabled = false; }),
      variant("no_bottleneck", [](TrainConfig& c) { c.model.saf_position = SafPosition::bottleneck; }),
      variant("beta_eta", [](TrainConfig& c) { c.mixup.mode = MixupMode::beta; }),
      variant("constant_eta", [](TrainConfig& c) { c.mixup.mode = MixupMode::constant; }),
      variant("k1", [](TrainConfig& c) { c.model.saf_bottlenecks = 1; }),
      variant("k4", [](TrainConfig& c) { c.model.saf_bottlenecks = 4; }),
      variant("include_source", [](TrainConfig& c) { c.mixup.include_source = true; }),
      variant("only_uncertain", [](TrainConfig& c) { c.mixup.entropy_filter = EntropyFilter::only_uncertain; }),
      variant("only_certain", [](TrainConfig& c) { c.mixup.entropy_filter = EntropyFilter::only_certain; }),
      variant("full_saf", [](TrainConfig&) {}),
  };
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                      const std::string& out_dir) {
  base.validate();
  if (seeds.empty()) throw ConfigError("ablate: empty seed list");
  const Domains domains = load_domains(base);
  const DataFiles data = materialize_data(domains, out_dir + "/data");
  const std::vector<AblationVariant> grid = ablation_grid(base);

  const std::size_t ns = seeds.size();
  std::vector<SeedRun> runs(grid.size() * ns);
  std::vector<std::string> failure(grid.size());
  std::mutex failure_mutex;
  parallel_for(runs.size(), [&](std::size_t job) {
    const std::size_t v = job / ns;
    TrainConfig cfg = grid[v].config;
    cfg.seed = seeds[job % ns];
    try {
      const RunResult r =
          run_experiment(cfg, domains, out_dir + "/" + grid[v].name + "/seed_" + std::to_string(cfg.seed));
      runs[job] = {cfg.seed, r.run_dir, r.metrics_path, r.model_path, r.records.back().tgt_acc};
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mutex);
      if (failure[v].empty()) failure[v] = e.what();
    }
  });

  std::vector<AblationRow> rows;
  json manifest;
  manifest["seeds"] = seeds;
  manifest["data"] = data_json(data);
  manifest["variants"] = json::array();
  std::ofstream table(out_dir + "/ablation.csv");
  if (!table) throw IoError("cannot write " + out_dir + "/ablation.csv");
  table << "variant,mean_tgt_acc,sd_tgt_acc,status\n";
  for (std::size_t v = 0; v < grid.size(); ++v) {
    AblationRow row{grid[v].name, {std::nan(""), std::nan("")}, "ok"};
    json entry{{"name", grid[v].name}, {"config", render_config(grid[v].config)}, {"data", data_json(data)}};
    entry["runs"] = json::array();
    if (failure[v].empty()) {
      std::vector<std::string> csvs;
      for (std::size_t s = 0; s < ns; ++s) {
        const SeedRun& r = runs[v * ns + s];
        csvs.push_back(r.metrics_path);
        entry["runs"].push_back({{"seed", r.seed}, {"metrics", r.metrics_path}, {"final_tgt_acc", r.final_tgt_acc}});
      }
      row.accuracy = aggregate_from_csvs(csvs);
    } else {
      row.status = failure[v];
    }
    entry["aggregate"] = aggregate_json(row.accuracy);
    entry["status"] = row.status;
    manifest["variants"].push_back(entry);
    std::string status = row.status;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ';';
    }
    table << row.name << ',' << format_double(row.accuracy.mean) << ',' << format_double(row.accuracy.sd) << ','
          << status << '\n';
    rows.push_back(std::move(row));
  }
  if (!table) throw IoError("failed writing " + out_dir + "/ablation.csv");
  write_json(out_dir + "/manifest.json", manifest);
  return rows;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string source_csv;
  std::string target_csv;
  std::string saf;
  std::string backbone;
  std::size_t iterations = 0;

  void attach(CLI::App& cmd, bool training) {
    cmd.add_option("--config", config_path, "Config file (defaults when omitted)")->check(CLI::ExistingFile);
    cmd.add_option("--set", sets, "Override as section.key=value (repeatable)");
    cmd.add_option("--source", source_csv, "Labelled source CSV");
    cmd.add_option("--target", target_csv, "Labelled target CSV (labels used for evaluation only)");
    cmd.add_option("--backbone", backbone, "dann or mdd")->check(CLI::IsMember({"dann", "mdd"}));
    if (training) {
      cmd.add_option("--saf", saf, "on or off")->check(CLI::IsMember({"on", "off"}));
      cmd.add_option("--iterations", iterations, "Total training iterations")->check(CLI::PositiveNumber);
    }
  }

  // File, then --set overrides, then the dedicated flags.
  TrainConfig resolve() const {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      const auto dot = s.find('.');
      if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("--set expects section.key=value, got '" + s + "'");
      }
      apply_override(cfg, trim(std::string_view(s).substr(0, dot)),
                     trim(std::string_view(s).substr(dot + 1, eq - dot - 1)),
                     trim(std::string_view(s).substr(eq + 1)));
    }
    if (!source_csv.empty()) cfg.data.source_csv = source_csv;
    if (!target_csv.empty()) cfg.data.target_csv = target_csv;
    if (!backbone.empty()) apply_override(cfg, "train", "backbone", backbone);
    if (!saf.empty()) cfg.saf_enabled = saf == "on";
    if (iterations > 0) cfg.iterations = iterations;
    cfg.validate();
    return cfg;
  }
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw IoError("cannot write " + path);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"saf_lab: shuffle augmentation of features for unsupervised domain adaptation"};
  app.name("saf_lab");
  bool print_config = false;
  std::string print_config_path;
  app.add_flag("--print-config", print_config, "Print the documented default config and exit");
  app.require_subcommand(0, 1);

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "Write source and target CSVs for a synthetic shift");
  DataConfig gd;
  std::size_t gen_classes = 2;
  std::string gen_out;
  gen->add_option("--kind", gd.kind, "moons or blobs")->check(CLI::IsMember({"moons", "blobs"}));
  gen->add_option("--n", gd.n_samples, "Samples per domain");
  gen->add_option("--noise", gd.noise, "Gaussian noise sd");
  gen->add_option("--rotation", gd.rotation, "Target rotation in degrees");
  gen->add_option("--translate-x", gd.translate_x, "Target translation x");
  gen->add_option("--translate-y", gd.translate_y, "Target translation y");
  gen->add_option("--scale", gd.scale, "Target scale");
  gen->add_option("--seed", gd.seed, "Generator seed");
  gen->add_option("--classes", gen_classes, "Class count (blobs only)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  CLI::App* train = app.add_subcommand("train", "Train one or more seeds");
  ConfigFlags train_flags;
  train_flags.attach(*train, true);
  std::string train_seeds;
  std::string train_out;
  train->add_option("--seeds", train_seeds, "Seed list: 3, 0..4 or 1,5,9 (default: config seed)");
  train->add_option("--out", train_out, "Output directory")->required();

  // eval
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a saved model");
  ConfigFlags eval_flags;
  eval_flags.attach(*eval, false);
  std::string eval_model;
  eval->add_option("--model", eval_model, "Model file written by train")->required()->check(CLI::ExistingFile);

  // ablate
  CLI::App* ablate = app.add_subcommand("ablate", "Run the SAF ablation grid");
  ConfigFlags ablate_flags;
  ablate_flags.attach(*ablate, true);
  std::string ablate_seeds = "0..4";
  std::string ablate_out;
  ablate->add_option("--seeds", ablate_seeds, "Seed list (default 0..4)");
  ablate->add_option("--out", ablate_out, "Output directory")->required();

  // export-embeddings
  CLI::App* exp = app.add_subcommand("export-embeddings", "Project bottleneck features to 2D with PCA");
  ConfigFlags exp_flags;
  exp_flags.attach(*exp, false);
  std::string exp_model, exp_csv, exp_svg;
  exp->add_option("--model", exp_model, "Model file written by train")->required()->check(CLI::ExistingFile);
  exp->add_option("--csv", exp_csv, "Output CSV (x,y,domain,label)")->required();
  exp->add_option("--svg", exp_svg, "Output scatter SVG")->required();

  app.add_option("--config", print_config_path, "Config to print with --print-config")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (print_config) {
      const TrainConfig cfg = print_config_path.empty() ? TrainConfig{} : load_config(print_config_path);
      out << render_config(cfg, true);
      return kExitOk;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return kExitUsage;
    }

    if (gen->parsed()) {
      TrainConfig cfg;
      cfg.data = gd;
      cfg.model.num_classes = gen_classes;
      cfg.data.validate();
      cfg.model.validate();
      const Domains domains = load_domains(cfg);
      const DataFiles files = materialize_data(domains, gen_out);
      json spec{{"kind", gd.kind},
                {"n_samples", gd.n_samples},
                {"noise", gd.noise},
                {"rotation", gd.rotation},
                {"translate", {gd.translate_x, gd.translate_y}},
                {"scale", gd.scale},
                {"seed", gd.seed},
                {"classes", gen_classes},
                {"files", data_json(files)}};
      write_json(gen_out + "/spec.json", spec);
      out << "wrote " << files.source << " and " << files.target << '\n';
      return kExitOk;
    }

    if (train->parsed()) {
      const TrainConfig cfg = train_flags.resolve();
      const std::vector<std::uint64_t> seeds =
          train_seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : parse_seed_list(train_seeds);
      ensure_dir(train_out);
      write_text(train_out + "/config.cfg", render_config(cfg));
      const Domains domains = load_domains(cfg);
      const DataFiles files = materialize_data(domains, train_out + "/data");
      const std::vector<SeedRun> runs = run_seeds(cfg, domains, seeds, train_out);
      write_run_manifest(train_out + "/manifest.json", cfg, runs, files);
      for (const auto& r : runs) {
        out << "seed " << r.seed << ": tgt_acc " << format_double(r.final_tgt_acc) << " -> " << r.run_dir << '\n';
      }
      std::vector<double> acc;
      for (const auto& r : runs) acc.push_back(r.final_tgt_acc);
      const Aggregate a = aggregate(acc);
      out << "mean " << format_double(a.mean) << " sd " << format_double(a.sd) << '\n';
      return kExitOk;
    }

    if (eval->parsed()) {
      const TrainConfig cfg = eval_flags.resolve();
      Rng rng(cfg.seed);
      ModelBundle bundle = build_bundle(cfg, rng);
      load_bundle(bundle, eval_model);
      const Domains domains = load_domains(cfg);
      const MetricsRecord r = evaluate(bundle, domains.source, domains.target, cfg);
      out << kMetricsHeader << '\n' << format_metrics_row(r) << '\n';
      return kExitOk;
    }

    if (ablate->parsed()) {
      const TrainConfig cfg = ablate_flags.resolve();
      ensure_dir(ablate_out);
      const auto rows = run_ablation(cfg, parse_seed_list(ablate_seeds), ablate_out);
      out << "variant,mean_tgt_acc,sd_tgt_acc,status\n";
      bool ok = true;
      for (const auto& row : rows) {
        out << row.name << ',' << format_double(row.accuracy.mean) << ',' << format_double(row.accuracy.sd) << ','
            << (row.status == "ok" ? "ok" : "failed") << '\n';
        ok = ok && row.status == "ok";
      }
      return ok ? kExitOk : kExitRuntime;
    }

    if (exp->parsed()) {
      const TrainConfig cfg = exp_flags.resolve();
      Rng rng(cfg.seed);
      ModelBundle bundle = build_bundle(cfg, rng);
      load_bundle(bundle, exp_model);
      const Domains domains = load_domains(cfg);
      const Batch all = concat(domains.source, domains.target);
      Tape tape;
      const ForwardMode mode = ForwardMode::eval();
      const Matrix h = bottleneck(bundle, forward_features(bundle, tape, all.features, mode), mode).value();
      const PcaResult p = pca(h);
      std::vector<ScatterPoint> points;
      std::string csv = "x,y,domain,label\n";
      for (std::size_t i = 0; i < all.size(); ++i) {
        const ScatterPoint pt{p.projected(i, 0), p.projected(i, 1), all.domain_tags[i], (*all.labels)[i]};
        points.push_back(pt);
        csv += format_double(pt.x) + ',' + format_double(pt.y) + ',' + std::to_string(pt.domain) + ',' +
               std::to_string(pt.label) + '\n';
      }
      write_text(exp_csv, csv);
      write_text(exp_svg, render_scatter_svg(points, "bottleneck features (PCA): source red, target blue"));
      out << "wrote " << exp_csv << " and " << exp_svg << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace saf
