#pragma once

// Label accuracy and value distance under imprecise test inputs, plus the
// sweeps over test-time scale and discretization step.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irloss/curriculum.hpp"
#include "irloss/data.hpp"
#include "irloss/imprecision.hpp"
#include "irloss/loss.hpp"
#include "irloss/nn.hpp"

namespace irloss {

/// Maps raw (unnormalized) inputs to raw predictions.
using Predictor = std::function<Vector(const Sequence&)>;

/// Wraps a model and the normalization it was trained under. The parameters
/// are copied, so the predictor never touches the caller's model.
Predictor model_predictor(const ModelParams& params, std::optional<Normalization> stats);

struct Perturbation {
  double delta = 0.0;
  SignStrategy signs{SignMode::random_per_sample, 0};
};

struct MeasureCounts {
  std::size_t tp = 0;  // abnormal is the positive class
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }
  double accuracy() const noexcept {
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
  }
};

struct AccuracyReport {
  std::array<MeasureCounts, kMeasureCount> counts{};
  std::array<double, kMeasureCount> accuracy{};
  double average = 0.0;  // macro average over measures
  std::size_t patients = 0;
};

struct DistanceReport {
  double total = 0.0;
  std::array<double, kMeasureCount> per_measure{};
  double per_patient = 0.0;  // total / |test|
  std::size_t patients = 0;
  std::size_t variants = 0;  // predictions accumulated
};

struct EvalConfig {
  std::vector<double> deltas{0.0};  // test-time scales used by distance()
  std::size_t samples_per_patient = 1;
  int alpha = 2;
  SignStrategy signs{SignMode::random_per_sample, 12345};
  ReferenceRanges ranges = ReferenceRanges::defaults();
  double tolerance = 0.10;  // upper limit for every delta

  void validate() const;
};

struct EvalReport {
  AccuracyReport accuracy;
  DistanceReport distance;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::string model_id;
};

/// Per-measure label accuracy, optionally after perturbing every patient's
/// inputs at one scale. Patient i's signs come from a substream of the
/// strategy seed, so they do not depend on evaluation order or on delta.
AccuracyReport accuracy(const Predictor& model, const Dataset& test, const ReferenceRanges& ranges,
                        const std::optional<Perturbation>& perturbation = std::nullopt);

/// Sum over patients, configured scales and samples of |f(x_j) - y|^alpha
/// (summed over measures, raw units).
DistanceReport distance(const Predictor& model, const Dataset& test, const EvalConfig& cfg);

/// Accuracy and distance at a single test-time scale.
EvalReport evaluate(const Predictor& model, const Dataset& test, const EvalConfig& cfg, double delta,
                    std::string model_id = {});

struct SweepRow {
  double value = 0.0;  // swept parameter (delta or step)
  std::string model;
  EvalReport report;
  std::size_t stages = 0;                // N, granularity sweep only
  double mean_perturbed_accuracy = 0.0;  // granularity sweep only
};

struct SweepReport {
  std::string parameter;  // "delta" or "step"
  std::vector<SweepRow> rows;
  std::map<std::string, double> slopes;  // accuracy-vs-delta slope per model
};

/// Least-squares slope of ys against xs.
double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys);

/// Evaluates both models at every grid scale; rows sorted by delta.
SweepReport stability_sweep(const Predictor& ir_model, const Predictor& ls_model, const Dataset& test,
                            std::vector<double> grid, const EvalConfig& cfg);

struct GranularitySettings {
  double tolerance = 0.10;
  std::vector<double> steps{0.02, 0.01, 0.005};
  std::vector<LayerShape> layers{{4, 32}, {32, 32}};
  double dropout = 0.0;
  std::uint64_t init_seed = 1;
  TrainConfig train;
  WeightSpec weights;
  SignStrategy train_signs{SignMode::random_per_sample, 1};
};

/// Trains one curriculum model per step value and evaluates it unperturbed
/// and averaged over the configured test scales.
SweepReport granularity_sweep(const Dataset& train, const Dataset& test, const GranularitySettings& settings,
                              const EvalConfig& cfg);

/// Flat CSV view of an EvalReport: column names and matching values.
std::vector<std::string> eval_columns();
std::vector<double> eval_values(const EvalReport& report);

/// Shortest text that reads back to the same double.
std::string format_number(double value);

void write_sweep_csv(const SweepReport& report, std::ostream& out);

}  // namespace irloss
