#include "irloss/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "irloss/checkpoint.hpp"
#include "irloss/config.hpp"
#include "irloss/curriculum.hpp"
#include "irloss/data.hpp"
#include "irloss/errors.hpp"
#include "irloss/eval.hpp"
#include "irloss/gradcheck.hpp"
#include "irloss/imprecision.hpp"
#include "irloss/rng.hpp"

namespace fs = std::filesystem;

namespace irloss::cli {
namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Salt for the training-time sign stream, kept apart from init and shuffling.
constexpr std::uint64_t kSignStream = 0x5167;

struct Options {
  std::string command;
  std::string config_path;
  std::string manifest_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string loss = "ir";
  std::string kind;
  std::optional<double> delta;
  std::string models_dir;
  std::vector<std::string> models;
};

// Every output file is staged in memory and only written when the command
// succeeds: temp files first, then renames.
class OutputSet {
 public:
  void add(std::string name, std::string content) { files_.emplace_back(std::move(name), std::move(content)); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.first);
    return out;
  }

  void commit(const fs::path& dir) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    std::vector<std::pair<fs::path, fs::path>> staged;
    try {
      for (const auto& [name, content] : files_) {
        const fs::path final_path = dir / name;
        fs::path tmp = final_path;
        tmp += ".tmp";
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.close();
        if (!out) throw IoError("write failed for " + tmp.string());
        staged.emplace_back(tmp, final_path);
      }
    } catch (...) {
      for (const auto& s : staged) fs::remove(s.first, ec);
      throw;
    }
    for (const auto& [tmp, final_path] : staged) {
      fs::rename(tmp, final_path, ec);
      if (ec) throw IoError("cannot move " + tmp.string() + " into place");
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

struct Context {
  Options opts;
  RunConfig cfg;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
};

template <class Fn>
void parallel_runs(std::size_t count, std::size_t jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), count);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct LoadedData {
  Dataset train;
  Dataset test;
  ReferenceRanges ranges;
};

Dataset load_source(const RunConfig& cfg) {
  if (cfg.synthetic) return generate_synthetic(cfg.synthetic_cfg);
  if (!fs::exists(cfg.csv_path)) throw ConfigError("dataset not found: " + cfg.csv_path.string());
  try {
    Dataset d = load_csv(cfg.csv_path);
    d.validate();
    return d;
  } catch (const ParseError& e) {
    throw IoError(cfg.csv_path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(cfg.csv_path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

ReferenceRanges load_reference_ranges(const RunConfig& cfg) {
  if (cfg.ranges_path.empty()) return ReferenceRanges::defaults();
  if (!fs::exists(cfg.ranges_path)) throw ConfigError("ranges file not found: " + cfg.ranges_path.string());
  try {
    return load_ranges(cfg.ranges_path);
  } catch (const ParseError& e) {
    throw IoError(cfg.ranges_path.string() + ": " + e.what());
  }
}

LoadedData load_data(const RunConfig& cfg) {
  Dataset all = load_source(cfg);
  if (cfg.n_train >= all.size())
    throw ConfigError("data.n_train (" + std::to_string(cfg.n_train) + ") must be below the record count (" +
                      std::to_string(all.size()) + ")");
  auto [train, test] = split(all, cfg.n_train);
  return {std::move(train), std::move(test), load_reference_ranges(cfg)};
}

EvalConfig eval_config(const RunConfig& cfg, const ReferenceRanges& ranges) {
  EvalConfig ev = cfg.eval;
  ev.ranges = ranges;
  return ev;
}

std::uint64_t run_seed(const RunConfig& cfg, std::size_t run) { return cfg.seed + run; }

std::string checkpoint_bytes(const ModelParams& params, const std::optional<Normalization>& stats) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, Checkpoint{params, stats});
  return out.str();
}

TrainResult train_model(const RunConfig& cfg, const Dataset& train, bool ir, std::uint64_t seed) {
  const ModelParams init = init_params(cfg.layer_shapes(), kMeasureCount, seed, cfg.dropout);
  TrainConfig tc = ir ? cfg.train : cfg.baseline_train_config();
  tc.seed = seed;
  tc.keep_checkpoints = cfg.checkpoint_stages;
  if (!ir) return train_baseline(train, init, tc);
  const ImpreciseDatasets datasets =
      cfg.imprecision ? generate_datasets(train, *cfg.imprecision, {cfg.train_signs, Rng::mix(seed, kSignStream)})
                      : original_only(train);
  return train_curriculum(datasets, cfg.weight_vector(), init, tc);
}

Checkpoint load_model(const std::string& path) {
  try {
    return read_checkpoint(fs::path(path));
  } catch (const ParseError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? std::string(1, sep) : "") + items[i];
  return out;
}

void add_manifest(OutputSet& outputs, const Context& ctx, const std::vector<std::uint64_t>& seeds) {
  std::ostringstream m;
  m << "# irloss run manifest\n[run]\n";
  m << "command = " << ctx.opts.command << '\n';
  m << "version = " << IRLOSS_VERSION << '\n';
  if (ctx.opts.command == "train") m << "loss = " << ctx.opts.loss << '\n';
  if (ctx.opts.command == "sweep") m << "kind = " << ctx.opts.kind << '\n';
  if (ctx.opts.delta) m << "delta = " << format_number(*ctx.opts.delta) << '\n';
  if (!ctx.opts.models_dir.empty()) m << "models_dir = " << ctx.opts.models_dir << '\n';
  if (!ctx.opts.models.empty()) m << "models = " << join(ctx.opts.models, ';') << '\n';
  std::vector<std::string> seed_text;
  for (auto s : seeds) seed_text.push_back(std::to_string(s));
  m << "seeds = " << join(seed_text, ',') << '\n';
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.started).count();
  m << "wall_clock_seconds = " << format_number(seconds) << '\n';
  m << "[outputs]\n";
  for (const auto& name : outputs.names()) m << name << '\n';
  m << "[config]\n";
  ctx.cfg.write(m);
  outputs.add("run.manifest", m.str());
}

std::vector<std::uint64_t> all_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cfg.runs; ++i) seeds.push_back(run_seed(cfg, i));
  return seeds;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gen_data(Context& ctx) {
  if (!ctx.cfg.synthetic) throw ConfigError("gen-data requires data.source = synthetic");
  const Dataset data = generate_synthetic(ctx.cfg.synthetic_cfg);
  OutputSet outputs;
  std::ostringstream csv;
  save_csv(data, csv);
  outputs.add("data.csv", csv.str());
  std::ostringstream ranges;
  save_ranges(load_reference_ranges(ctx.cfg), ranges);
  outputs.add("ranges.txt", ranges.str());
  add_manifest(outputs, ctx, {ctx.cfg.synthetic_cfg.seed});
  outputs.commit(ctx.opts.out_dir);
  std::cout << "wrote " << data.size() << " patients to " << (fs::path(ctx.opts.out_dir) / "data.csv").string()
            << '\n';
  return kOk;
}

int cmd_train(Context& ctx) {
  if (ctx.opts.loss != "ls" && ctx.opts.loss != "ir") throw ConfigError("--loss must be ls or ir");
  const bool ir = ctx.opts.loss == "ir";
  const RunConfig& cfg = ctx.cfg;
  const LoadedData data = load_data(cfg);

  std::vector<TrainResult> results(cfg.runs);
  parallel_runs(cfg.runs, cfg.jobs, [&](std::size_t i) {
    results[i] = train_model(cfg, data.train, ir, run_seed(cfg, i));
  });

  OutputSet outputs;
  for (std::size_t i = 0; i < cfg.runs; ++i) {
    const std::string stem = ctx.opts.loss + "_run" + std::to_string(i);
    outputs.add(stem + ".irlm", checkpoint_bytes(results[i].model, data.train.stats));
    std::ostringstream report;
    write_train_report(results[i].report, report);
    outputs.add(stem + "_report.csv", report.str());
    for (std::size_t j = 0; j < results[i].report.stage_end.size(); ++j)
      outputs.add(stem + "_stage" + std::to_string(j) + ".irlm",
                  checkpoint_bytes(results[i].report.stage_end[j], data.train.stats));
    const auto& last = results[i].report.stages.back();
    std::cout << stem << ": " << results[i].report.stages.size() << " stage(s), final stage loss "
              << format_number(last.final_loss) << '\n';
  }
  add_manifest(outputs, ctx, all_seeds(cfg));
  outputs.commit(ctx.opts.out_dir);
  return kOk;
}

int cmd_eval(Context& ctx) {
  if (ctx.opts.models.empty()) throw ConfigError("eval needs at least one model path");
  const LoadedData data = load_data(ctx.cfg);
  const EvalConfig ev = eval_config(ctx.cfg, data.ranges);
  if (ctx.opts.delta && !(*ctx.opts.delta >= 0.0 && *ctx.opts.delta <= ev.tolerance + 1e-12))
    throw ConfigError("--delta must lie in [0, r]");

  std::vector<Checkpoint> checkpoints;
  for (const auto& path : ctx.opts.models) checkpoints.push_back(load_model(path));

  std::vector<std::vector<double>> rows(checkpoints.size());
  parallel_runs(checkpoints.size(), ctx.cfg.jobs, [&](std::size_t i) {
    const Predictor model = model_predictor(checkpoints[i].params, checkpoints[i].normalization);
    rows[i] = eval_values(evaluate(model, data.test, ev, 0.0, ctx.opts.models[i]));
    if (ctx.opts.delta) {
      const auto perturbed = eval_values(evaluate(model, data.test, ev, *ctx.opts.delta, ctx.opts.models[i]));
      rows[i].insert(rows[i].end(), perturbed.begin(), perturbed.end());
    }
  });

  std::ostringstream csv;
  csv << "model";
  for (const auto& c : eval_columns()) csv << ',' << c;
  if (ctx.opts.delta)
    for (const auto& c : eval_columns()) csv << ",perturbed_" << c;
  csv << '\n';
  std::vector<double> mean(rows.front().size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv << ctx.opts.models[i];
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      csv << ',' << format_number(rows[i][k]);
      mean[k] += rows[i][k];
    }
    csv << '\n';
  }
  csv << "mean";
  for (double v : mean) csv << ',' << format_number(v / static_cast<double>(rows.size()));
  csv << '\n';

  OutputSet outputs;
  outputs.add("eval.csv", csv.str());
  add_manifest(outputs, ctx, {ctx.cfg.eval.signs.seed});
  outputs.commit(ctx.opts.out_dir);
  std::cout << csv.str();
  return kOk;
}

int cmd_sweep(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (ctx.opts.kind != "delta" && ctx.opts.kind != "granularity")
    throw ConfigError("--kind must be delta or granularity, got '" + ctx.opts.kind + "'");
  const LoadedData data = load_data(cfg);
  const EvalConfig ev = eval_config(cfg, data.ranges);

  std::vector<SweepReport> reports(cfg.runs);
  if (ctx.opts.kind == "delta") {
    std::vector<std::optional<Checkpoint>> ir_models(cfg.runs), ls_models(cfg.runs);
    if (!ctx.opts.models_dir.empty()) {
      for (std::size_t i = 0; i < cfg.runs; ++i) {
        const fs::path dir(ctx.opts.models_dir);
        ir_models[i] = load_model((dir / ("ir_run" + std::to_string(i) + ".irlm")).string());
        ls_models[i] = load_model((dir / ("ls_run" + std::to_string(i) + ".irlm")).string());
      }
    }
    parallel_runs(cfg.runs, cfg.jobs, [&](std::size_t i) {
      const std::uint64_t seed = run_seed(cfg, i);
      if (!ir_models[i]) ir_models[i] = Checkpoint{train_model(cfg, data.train, true, seed).model, data.train.stats};
      if (!ls_models[i]) ls_models[i] = Checkpoint{train_model(cfg, data.train, false, seed).model, data.train.stats};
      reports[i] = stability_sweep(model_predictor(ir_models[i]->params, ir_models[i]->normalization),
                                   model_predictor(ls_models[i]->params, ls_models[i]->normalization), data.test,
                                   ev.deltas, ev);
    });
  } else {
    if (!cfg.imprecision) throw ConfigError("granularity sweep needs imprecision.r > 0");
    if (cfg.granularity_steps.empty()) throw ConfigError("eval.granularity_steps is empty");
    for (double s : cfg.granularity_steps) {
      try {
        ImprecisionSpec{cfg.imprecision->tolerance, s}.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("eval.granularity_steps: " + format_number(s) + ": " + e.what());
      }
    }
    parallel_runs(cfg.runs, cfg.jobs, [&](std::size_t i) {
      const std::uint64_t seed = run_seed(cfg, i);
      GranularitySettings gs;
      gs.tolerance = cfg.imprecision->tolerance;
      gs.steps = cfg.granularity_steps;
      gs.layers = cfg.layer_shapes();
      gs.dropout = cfg.dropout;
      gs.init_seed = seed;
      gs.train = cfg.train;
      gs.train.seed = seed;
      gs.weights = cfg.weights;
      gs.train_signs = {cfg.train_signs, Rng::mix(seed, kSignStream)};
      reports[i] = granularity_sweep(data.train, data.test, gs, ev);
    });
  }

  OutputSet outputs;
  std::ostringstream csv;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    std::ostringstream one;
    write_sweep_csv(reports[i], one);
    std::istringstream lines(one.str());
    std::string line;
    bool header = true;
    while (std::getline(lines, line)) {
      if (header) {
        if (i == 0) csv << "run," << line << '\n';
        header = false;
        continue;
      }
      csv << i << ',' << line << '\n';
    }
  }
  outputs.add("sweep_" + ctx.opts.kind + ".csv", csv.str());
  if (ctx.opts.kind == "delta") {
    std::ostringstream slopes;
    slopes << "run,seed,slope_ir,slope_ls\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& s = reports[i].slopes;
      if (s.empty()) continue;
      slopes << i << ',' << run_seed(cfg, i) << ',' << format_number(s.at("ir")) << ','
             << format_number(s.at("ls")) << '\n';
    }
    outputs.add("sweep_delta_slopes.csv", slopes.str());
  }
  add_manifest(outputs, ctx, all_seeds(cfg));
  outputs.commit(ctx.opts.out_dir);
  std::cout << "wrote " << (fs::path(ctx.opts.out_dir) / ("sweep_" + ctx.opts.kind + ".csv")).string() << '\n';
  return kOk;
}

int cmd_gradcheck(Context& ctx) {
  const auto result = reference_gradcheck(ctx.cfg.train.alpha, ctx.cfg.seed);
  std::printf("max relative error: %.3e over %zu parameters (%zu excluded samples)\n", result.max_relative_error,
              result.parameters_checked, result.excluded_samples);
  return result.max_relative_error <= 1e-4 ? kOk : kFailure;
}

// ---------------------------------------------------------------------------
// Manifest replay

struct Manifest {
  std::map<std::string, std::string> run;
  std::map<std::string, std::string> config;
};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path);
  Manifest m;
  std::string section;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      section = line;
      continue;
    }
    const auto eq = line.find('=');
    if (section == "[outputs]" || eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section == "[run]") m.run[key] = value;
    else if (section == "[config]") m.config[key] = value;
  }
  if (m.run.count("command") == 0) throw ConfigError("manifest " + path + " has no command");
  return m;
}

void apply_manifest(Options& opts, RunConfig& cfg) {
  const Manifest m = read_manifest(opts.manifest_path);
  if (m.run.at("command") != opts.command)
    throw ConfigError("manifest records command '" + m.run.at("command") + "', not '" + opts.command + "'");
  auto get = [&](const char* key) -> std::string {
    const auto it = m.run.find(key);
    return it == m.run.end() ? std::string() : it->second;
  };
  if (!get("loss").empty()) opts.loss = get("loss");
  if (!get("kind").empty()) opts.kind = get("kind");
  if (!get("delta").empty()) opts.delta = std::stod(get("delta"));
  if (!get("models_dir").empty()) opts.models_dir = get("models_dir");
  if (!get("models").empty() && opts.models.empty()) {
    std::stringstream ss(get("models"));
    std::string item;
    while (std::getline(ss, item, ';')) opts.models.push_back(item);
  }
  cfg = RunConfig::from_entries(m.config);
}

int dispatch(Options& opts) {
  Context ctx;
  if (!opts.manifest_path.empty()) {
    apply_manifest(opts, ctx.cfg);
  } else if (!opts.config_path.empty()) {
    ctx.cfg = RunConfig::parse_file(opts.config_path);
  } else {
    ctx.cfg = RunConfig::from_entries({});
  }
  // Command-line overrides are folded into the recorded configuration.
  if (opts.seed || opts.jobs) {
    auto entries = ctx.cfg.entries;
    if (opts.seed) entries["run.seed"] = std::to_string(*opts.seed);
    if (opts.jobs) entries["run.jobs"] = std::to_string(*opts.jobs);
    ctx.cfg = RunConfig::from_entries(entries);
  }
  ctx.opts = opts;

  if (opts.command == "gen-data") return cmd_gen_data(ctx);
  if (opts.command == "train") return cmd_train(ctx);
  if (opts.command == "eval") return cmd_eval(ctx);
  if (opts.command == "sweep") return cmd_sweep(ctx);
  if (opts.command == "gradcheck") return cmd_gradcheck(ctx);
  throw ConfigError("unknown command '" + opts.command + "'");
}

int run_parsed(CLI::App& app, Options& opts, int argc, char** argv) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  for (const auto* sub : app.get_subcommands()) opts.command = sub->get_name();

  try {
    return dispatch(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const CheckpointError& e) {
    std::cerr << "corrupt checkpoint: " << e.what() << '\n';
    return kCorruptCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Imprecision-range loss experiments for LSTM lab-value prediction", "irloss"};
  app.require_subcommand(1);
  app.set_version_flag("--version", IRLOSS_VERSION);
  Options opts;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--manifest", opts.manifest_path, "Replay the command recorded in a run.manifest")
        ->check(CLI::ExistingFile)
        ->excludes("--config");
    sub->add_option("--out", opts.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", opts.seed, "Base seed (overrides run.seed)");
    sub->add_option("--jobs", opts.jobs, "Parallel runs (overrides run.jobs)")->check(CLI::PositiveNumber);
  };

  common(app.add_subcommand("gen-data", "Generate the synthetic cohort as CSV"));
  auto* train = app.add_subcommand("train", "Train LS or IR models for every run");
  common(train);
  train->add_option("--loss", opts.loss, "ls or ir")->capture_default_str();
  auto* eval = app.add_subcommand("eval", "Evaluate model checkpoints on the test split");
  common(eval);
  eval->add_option("--delta", opts.delta, "Also evaluate with inputs perturbed at this scale");
  eval->add_option("models", opts.models, "Model checkpoint paths");
  auto* sweep = app.add_subcommand("sweep", "Delta stability or step granularity sweep");
  common(sweep);
  sweep->add_option("--kind", opts.kind, "delta or granularity");
  sweep->add_option("--models", opts.models_dir, "Directory with ir_run<i>.irlm / ls_run<i>.irlm to reuse");
  common(app.add_subcommand("gradcheck", "Check BPTT gradients against finite differences"));

  return run_parsed(app, opts, argc, argv);
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"irloss"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace irloss::cli
