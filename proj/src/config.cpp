#include "irloss/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "irloss/errors.hpp"

namespace irloss {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& entries) : entries_(entries) {}

  const std::string& text(const std::string& key) const { return entries_.at(key); }

  double real(const std::string& key) const { return parse_real(key, text(key)); }

  std::uint64_t count(const std::string& key) const { return parse_count(key, text(key)); }

  bool flag(const std::string& key) const {
    const auto& v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad(key, "expected true or false, got '" + v + "'");
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : items(key)) out.push_back(parse_real(key, item));
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : items(key)) out.push_back(parse_count(key, item));
    return out;
  }

 private:
  std::vector<std::string> items(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(text(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      bad(key, "expected a number, got '" + s + "'");
    return v;
  }

  static std::uint64_t parse_count(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) bad(key, "expected a non-negative integer, got '" + s + "'");
    return v;
  }

  const std::map<std::string, std::string>& entries_;
};

SignMode parse_sign_mode(const std::string& key, const std::string& v) {
  if (v == "random") return SignMode::random_per_sample;
  if (v == "corners") return SignMode::all_corners;
  if (v == "positive") return SignMode::fixed_positive;
  bad(key, "expected random, corners or positive");
}

}  // namespace

const std::map<std::string, std::string>& default_config_entries() {
  static const std::map<std::string, std::string> defaults{
      {"data.source", "synthetic"},
      {"data.csv_path", ""},
      {"data.ranges_path", ""},
      {"data.patients", "2460"},
      {"data.n_train", "1960"},
      {"data.steps", "6"},
      {"data.horizon", "24"},
      {"data.ar_coef", "0.95"},
      {"data.innovation_sd", "0.08"},
      {"data.setpoint_mean", "0.4"},
      {"data.setpoint_sd", "0.6"},
      {"data.initial_sd", "0.5"},
      {"data.noise", "0.05"},
      {"data.seed", "1"},
      {"model.hidden", "32,32"},
      {"model.dropout", "0"},
      {"train.epochs", "10"},
      {"train.stage_epochs", ""},
      {"train.baseline_epochs", "0"},
      {"train.batch_size", "32"},
      {"train.learning_rate", "0.001"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.epsilon", "1e-8"},
      {"train.alpha", "2"},
      {"train.checkpoint_stages", "false"},
      {"imprecision.r", "0.10"},
      {"imprecision.s", "0.01"},
      {"imprecision.signs", "random"},
      {"weights.scheme", "linear"},
      {"weights.lambda", "0.5"},
      {"weights.custom", ""},
      {"eval.deltas", "0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09,0.10"},
      {"eval.samples", "1"},
      {"eval.alpha", ""},
      {"eval.signs", "random"},
      {"eval.seed", "12345"},
      {"eval.granularity_steps", "0.02,0.01,0.005"},
      {"run.seed", "1"},
      {"run.count", "1"},
      {"run.jobs", "1"},
  };
  return defaults;
}

RunConfig RunConfig::from_entries(const std::map<std::string, std::string>& overrides) {
  const auto& defaults = default_config_entries();
  RunConfig cfg;
  cfg.entries = defaults;
  for (const auto& [key, value] : overrides) {
    if (defaults.count(key) == 0) throw ConfigError("unknown config key '" + key + "'");
    cfg.entries[key] = value;
  }
  const Reader r(cfg.entries);

  const auto& source = r.text("data.source");
  if (source != "synthetic" && source != "csv") bad("data.source", "expected synthetic or csv");
  cfg.synthetic = source == "synthetic";
  cfg.csv_path = r.text("data.csv_path");
  if (!cfg.synthetic && cfg.csv_path.empty()) bad("data.csv_path", "required when data.source = csv");
  cfg.ranges_path = r.text("data.ranges_path");
  auto& syn = cfg.synthetic_cfg;
  syn.patients = r.count("data.patients");
  syn.steps = r.count("data.steps");
  syn.horizon = r.count("data.horizon");
  syn.ar_coef = r.real("data.ar_coef");
  syn.innovation_sd = r.real("data.innovation_sd");
  syn.setpoint_mean = r.real("data.setpoint_mean");
  syn.setpoint_sd = r.real("data.setpoint_sd");
  syn.initial_sd = r.real("data.initial_sd");
  syn.noise = r.real("data.noise");
  syn.seed = r.count("data.seed");
  try {
    syn.validate();
  } catch (const std::invalid_argument& e) {
    bad("data.*", e.what());
  }
  cfg.n_train = r.count("data.n_train");
  if (cfg.n_train == 0) bad("data.n_train", "must be positive");
  if (cfg.synthetic && cfg.n_train >= syn.patients) bad("data.n_train", "must be less than data.patients");

  cfg.hidden = r.counts("model.hidden");
  if (cfg.hidden.empty()) bad("model.hidden", "need at least one layer");
  for (auto h : cfg.hidden)
    if (h == 0) bad("model.hidden", "layer sizes must be positive");
  cfg.dropout = r.real("model.dropout");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) bad("model.dropout", "must be in [0, 1)");

  auto& t = cfg.train;
  t.epochs = r.count("train.epochs");
  if (t.epochs == 0) bad("train.epochs", "must be at least 1");
  t.stage_epochs = r.counts("train.stage_epochs");
  for (auto e : t.stage_epochs)
    if (e == 0) bad("train.stage_epochs", "entries must be at least 1");
  cfg.baseline_epochs = r.count("train.baseline_epochs");
  t.batch_size = r.count("train.batch_size");
  if (t.batch_size == 0) bad("train.batch_size", "must be at least 1");
  t.adam.learning_rate = r.real("train.learning_rate");
  if (!(t.adam.learning_rate > 0.0)) bad("train.learning_rate", "must be positive");
  t.adam.beta1 = r.real("train.beta1");
  t.adam.beta2 = r.real("train.beta2");
  t.adam.epsilon = r.real("train.epsilon");
  if (!(t.adam.beta1 >= 0.0 && t.adam.beta1 < 1.0)) bad("train.beta1", "must be in [0, 1)");
  if (!(t.adam.beta2 >= 0.0 && t.adam.beta2 < 1.0)) bad("train.beta2", "must be in [0, 1)");
  if (!(t.adam.epsilon > 0.0)) bad("train.epsilon", "must be positive");
  const auto alpha = r.count("train.alpha");
  if (alpha != 1 && alpha != 2) bad("train.alpha", "must be 1 or 2");
  t.alpha = static_cast<int>(alpha);
  cfg.checkpoint_stages = r.flag("train.checkpoint_stages");

  const double tol = r.real("imprecision.r");
  const double step = r.real("imprecision.s");
  if (tol != 0.0) {
    const ImprecisionSpec spec{tol, step};
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      bad("imprecision.s", e.what());
    }
    cfg.imprecision = spec;
  }
  if (!t.stage_epochs.empty() && t.stage_epochs.size() != cfg.stage_count() + 1)
    bad("train.stage_epochs", "needs one entry per stage (" + std::to_string(cfg.stage_count() + 1) + ")");
  cfg.train_signs = parse_sign_mode("imprecision.signs", r.text("imprecision.signs"));

  const auto& scheme = r.text("weights.scheme");
  if (scheme == "linear") cfg.weights.scheme = WeightScheme::linear;
  else if (scheme == "exponential") cfg.weights.scheme = WeightScheme::exponential;
  else if (scheme == "custom") cfg.weights.scheme = WeightScheme::custom;
  else bad("weights.scheme", "expected linear, exponential or custom");
  cfg.weights.lambda = r.real("weights.lambda");
  cfg.weights.custom = r.reals("weights.custom");
  try {
    (void)cfg.weight_vector();
  } catch (const std::invalid_argument& e) {
    bad("weights." + scheme, e.what());
  }

  auto& ev = cfg.eval;
  ev.deltas = r.reals("eval.deltas");
  ev.samples_per_patient = r.count("eval.samples");
  // Empty: follow the training exponent.
  const auto eval_alpha = r.text("eval.alpha").empty() ? alpha : r.count("eval.alpha");
  if (eval_alpha != 1 && eval_alpha != 2) bad("eval.alpha", "must be 1 or 2");
  ev.alpha = static_cast<int>(eval_alpha);
  ev.signs = {parse_sign_mode("eval.signs", r.text("eval.signs")), r.count("eval.seed")};
  ev.tolerance = cfg.imprecision ? cfg.imprecision->tolerance : 1.0;
  if (ev.deltas.empty()) ev.deltas = {0.0};
  try {
    ev.validate();
  } catch (const std::invalid_argument& e) {
    bad("eval.*", e.what());
  }
  cfg.granularity_steps = r.reals("eval.granularity_steps");

  cfg.seed = r.count("run.seed");
  cfg.runs = r.count("run.count");
  if (cfg.runs == 0) bad("run.count", "must be at least 1");
  cfg.jobs = r.count("run.jobs");
  if (cfg.jobs == 0) bad("run.jobs", "must be at least 1");
  return cfg;
}

RunConfig RunConfig::parse(std::istream& in) {
  std::map<std::string, std::string> overrides;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (overrides.count(key) != 0) throw ConfigError("config key '" + key + "' given twice");
    overrides[key] = trim(line.substr(eq + 1));
  }
  return from_entries(overrides);
}

RunConfig RunConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse(in);
}

std::size_t RunConfig::stage_count() const { return imprecision ? imprecision->stage_count() : 0; }

std::vector<LayerShape> RunConfig::layer_shapes() const {
  std::vector<LayerShape> shapes;
  std::size_t in = kMeasureCount;
  for (auto h : hidden) {
    shapes.push_back({in, h});
    in = h;
  }
  return shapes;
}

TrainConfig RunConfig::baseline_train_config() const {
  TrainConfig t = train;
  t.stage_epochs.clear();
  if (baseline_epochs != 0) {
    t.epochs = baseline_epochs;
  } else {
    std::size_t total = 0;
    for (std::size_t j = 0; j <= stage_count(); ++j) total += train.epochs_for(j);
    t.epochs = total;
  }
  return t;
}

WeightVector RunConfig::weight_vector() const { return irloss::weight_vector(stage_count(), weights); }

void RunConfig::write(std::ostream& out) const {
  for (const auto& [key, value] : entries) out << key << " = " << value << '\n';
}

}  // namespace irloss
