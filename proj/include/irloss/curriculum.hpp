#pragma once

// Staged training over D_0..D_N: stage 0 fits the original data, every later
// stage starts from the previous stage's parameters and fits D_j under
// weight w_j. The least-squares baseline is the single-stage special case.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "irloss/data.hpp"
#include "irloss/imprecision.hpp"
#include "irloss/loss.hpp"
#include "irloss/nn.hpp"

namespace irloss {

struct TrainConfig {
  std::size_t epochs = 10;                // per stage
  std::vector<std::size_t> stage_epochs;  // optional per-stage override
  std::size_t batch_size = 32;
  AdamConfig adam;
  int alpha = 2;
  std::uint64_t seed = 1;
  bool keep_checkpoints = false;  // record start/end parameters of every stage

  void validate() const;
  std::size_t epochs_for(std::size_t stage) const;
};

struct StageReport {
  std::size_t stage = 0;
  double delta = 0.0;
  double weight = 1.0;
  std::vector<double> epoch_losses;  // weighted loss summed over each epoch
  double final_loss = 0.0;           // stage loss of the final parameters
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<StageReport> stages;
  std::vector<ModelParams> stage_start;  // filled when keep_checkpoints
  std::vector<ModelParams> stage_end;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelParams model;
  TrainReport report;
};

/// Minimizes the plain least-squares (or absolute) loss over the data.
TrainResult train_baseline(const Dataset& data, const ModelParams& model_init, const TrainConfig& cfg);

/// Runs every stage in order of strictly decreasing weight and returns the
/// final stage's model.
TrainResult train_curriculum(const ImpreciseDatasets& datasets, const WeightVector& weights,
                             const ModelParams& model_init, const TrainConfig& cfg);

/// CSV rendering of a report, one stage per row.
void write_train_report(const TrainReport& report, std::ostream& out);

}  // namespace irloss
