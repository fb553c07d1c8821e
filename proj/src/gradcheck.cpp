#include "irloss/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace irloss {
namespace {

// Residuals closer than this to zero put the absolute loss's kink inside the
// finite-difference stencil.
constexpr double kKinkMargin = 1e-4;

bool near_kink(const ModelParams& params, const Example& ex) {
  const Vector pred = predict(params, ex.inputs);
  for (std::size_t m = 0; m < pred.size(); ++m)
    if (std::abs(pred[m] - ex.target[m]) <= kKinkMargin * std::max(1.0, std::abs(ex.target[m]))) return true;
  return false;
}

}  // namespace

GradcheckResult gradcheck(const ModelParams& params, const std::vector<std::vector<Example>>& stages,
                          const WeightVector& weights, const LossConfig& loss, double epsilon) {
  loss.validate();
  params.validate();
  if (params.dropout != 0.0) throw std::invalid_argument("gradcheck requires dropout = 0");

  GradcheckResult result;
  std::vector<std::vector<Example>> kept = stages;
  if (loss.alpha == 1) {
    for (auto& stage : kept) {
      const auto before = stage.size();
      std::erase_if(stage, [&](const Example& ex) { return near_kink(params, ex); });
      result.excluded_samples += before - stage.size();
    }
  }
  // Stages emptied by exclusion contribute nothing.
  std::vector<std::vector<Example>> active;
  std::vector<double> active_weights;
  for (std::size_t j = 0; j < kept.size(); ++j) {
    if (kept[j].empty()) continue;
    active.push_back(std::move(kept[j]));
    active_weights.push_back(weights[j]);
  }
  if (active.empty()) return result;

  auto objective = [&](const ModelParams& p) {
    double total = 0.0;
    for (std::size_t j = 0; j < active.size(); ++j)
      total += stage_loss_value(p, active[j], active_weights[j], loss.alpha);
    return total;
  };

  Gradients analytic = Gradients::zeros_like(params);
  for (std::size_t j = 0; j < active.size(); ++j)
    analytic += stage_loss(params, active[j], active_weights[j], loss.alpha).grads;

  ModelParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = analytic.tensors();
  for (std::size_t i = 0; i < probe_tensors.size(); ++i) {
    for (std::size_t k = 0; k < probe_tensors[i].size(); ++k) {
      const double saved = probe_tensors[i][k];
      probe_tensors[i][k] = saved + epsilon;
      const double up = objective(probe);
      probe_tensors[i][k] = saved - epsilon;
      const double down = objective(probe);
      probe_tensors[i][k] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err = std::abs(grad_tensors[i][k] - numeric) / std::max(1.0, std::abs(numeric));
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.parameters_checked;
    }
  }
  return result;
}

GradcheckResult reference_gradcheck(int alpha, std::uint64_t seed) {
  SyntheticConfig syn;
  syn.patients = 2;
  syn.steps = 3;
  syn.horizon = 6;
  syn.seed = seed;
  Dataset data = generate_synthetic(syn);
  data.stats = compute_normalization(data);

  const ImprecisionSpec spec{0.02, 0.01};
  const auto datasets = generate_datasets(data, spec, {SignMode::all_corners, seed});
  const auto weights = weight_vector(spec.stage_count(), WeightSpec{});
  const LayerShape layer{kMeasureCount, 4};
  const auto params = init_params(std::span(&layer, 1), kMeasureCount, seed, 0.0);
  return gradcheck(params, make_examples(datasets), weights, LossConfig{alpha});
}

}  // namespace irloss
