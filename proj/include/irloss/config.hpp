#pragma once

// Declarative run configuration: `key = value` lines, `#` comments. Every
// key has a default; unknown keys are rejected. See docs/config.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "irloss/curriculum.hpp"
#include "irloss/data.hpp"
#include "irloss/eval.hpp"
#include "irloss/imprecision.hpp"
#include "irloss/loss.hpp"

namespace irloss {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // data
  bool synthetic = true;
  std::filesystem::path csv_path;
  std::filesystem::path ranges_path;
  SyntheticConfig synthetic_cfg;
  std::size_t n_train = 1960;

  // model
  std::vector<std::size_t> hidden{32, 32};
  double dropout = 0.0;

  // training
  TrainConfig train;
  std::size_t baseline_epochs = 0;  // 0: epochs x (N + 1), the curriculum's total
  bool checkpoint_stages = false;

  // imprecision; tolerance 0 means no imprecise stages (N = 0)
  std::optional<ImprecisionSpec> imprecision;
  SignMode train_signs = SignMode::random_per_sample;
  WeightSpec weights;

  // evaluation
  EvalConfig eval;
  std::vector<double> granularity_steps{0.02, 0.01, 0.005};

  // run
  std::uint64_t seed = 1;
  std::size_t runs = 1;
  std::size_t jobs = 1;

  /// Resolved `key -> value` text for every known key.
  std::map<std::string, std::string> entries;

  /// Parses config text over the defaults. Throws ConfigError naming the key.
  static RunConfig parse(std::istream& in);
  static RunConfig parse_file(const std::filesystem::path& path);
  /// Builds from explicit entries (overrides on top of the defaults).
  static RunConfig from_entries(const std::map<std::string, std::string>& overrides);

  /// Stage count of the imprecise curriculum (0 without imprecision).
  std::size_t stage_count() const;
  std::vector<LayerShape> layer_shapes() const;
  TrainConfig baseline_train_config() const;
  WeightVector weight_vector() const;

  /// Canonical `key = value` lines, sorted by key.
  void write(std::ostream& out) const;
};

/// Every known key with its default value.
const std::map<std::string, std::string>& default_config_entries();

}  // namespace irloss
