#pragma once

// Patient time series: synthetic cohort generation, CSV I/O, train/test
// splitting with training-only normalization, and reference-range labels.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "irloss/tensor.hpp"

namespace irloss {

inline constexpr std::size_t kMeasureCount = 4;
inline constexpr std::array<std::string_view, kMeasureCount> kMeasureNames{"FT3", "FT4", "TSH", "TRAb"};

struct PatientRecord {
  std::int64_t id = 0;
  Sequence inputs;  // T steps x 4 measures
  Vector target;    // 4 measures at the horizon

  bool operator==(const PatientRecord&) const = default;
};

/// Per-measure standardization statistics.
struct Normalization {
  Vector mean;
  Vector stddev;

  Vector apply(const Vector& raw) const;
  Vector invert(const Vector& normalized) const;
  Sequence apply(const Sequence& raw) const;

  bool operator==(const Normalization&) const = default;
};

struct Dataset {
  std::vector<PatientRecord> records;
  std::optional<Normalization> stats;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  std::size_t steps() const { return records.empty() ? 0 : records.front().inputs.size(); }

  /// Homogeneous shapes, 4 measures, strictly positive values.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// Mean-reverting latent severity mapped to the four measures through
/// monotone exponential links with multiplicative log-normal noise.
struct SyntheticConfig {
  std::size_t patients = 2460;
  std::size_t steps = 6;     // monthly tests in the observation window
  std::size_t horizon = 24;  // months between the last input and the target
  double ar_coef = 0.95;     // per-step pull towards the patient's set point
  double innovation_sd = 0.08;
  double setpoint_mean = 0.4;
  double setpoint_sd = 0.6;
  double initial_sd = 0.5;   // spread of the first severity around the set point
  double noise = 0.05;       // sd of the log-normal measurement noise
  std::array<double, kMeasureCount> link_scale{4.5, 16.0, 1.5, 0.8};
  std::array<double, kMeasureCount> link_slope{0.6, 0.6, -2.0, 1.2};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Noise-free measure levels at a given severity.
std::array<double, kMeasureCount> link_measures(const SyntheticConfig& cfg, double severity);

Dataset generate_synthetic(const SyntheticConfig& cfg);

/// CSV schema: patient_id,step,FT3,FT4,TSH,TRAb,is_target. Values are
/// written with 17 significant digits.
void save_csv(const Dataset& dataset, std::ostream& out);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_csv(std::istream& in);
Dataset load_csv(const std::filesystem::path& path);

Normalization compute_normalization(const Dataset& train);

/// First n_train records by patient id go to training; statistics from the
/// training part are attached to both halves.
std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t n_train);

struct Bounds {
  double lower;
  double upper;
};

struct ReferenceRanges {
  std::array<Bounds, kMeasureCount> bounds;

  static ReferenceRanges defaults();
  void validate() const;
};

/// Text format: one `measure, lower, upper` line per measure.
ReferenceRanges load_ranges(std::istream& in);
ReferenceRanges load_ranges(const std::filesystem::path& path);
void save_ranges(const ReferenceRanges& ranges, std::ostream& out);

enum class Label { normal, abnormal };

/// Closed interval: values on either bound are normal.
Label label(double value, Bounds range);

}  // namespace irloss
