#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "irloss/loss.hpp"
#include "irloss/nn.hpp"

namespace irloss {

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  /// Samples left out because the absolute loss is not differentiable there.
  std::size_t excluded_samples = 0;
};

/// Compares the BPTT gradient of the total imprecision-range loss with
/// central finite differences. Relative error is |a - n| / max(1, |n|).
/// Requires dropout = 0.
GradcheckResult gradcheck(const ModelParams& params, const std::vector<std::vector<Example>>& stages,
                          const WeightVector& weights, const LossConfig& loss, double epsilon = 1e-5);

/// The standard small instance: one LSTM layer with 4 units on 4 measures,
/// 3 time steps, 2 patients, r = 0.02 and s = 0.01 with every sign corner,
/// linear weights, dropout off.
GradcheckResult reference_gradcheck(int alpha, std::uint64_t seed);

}  // namespace irloss
