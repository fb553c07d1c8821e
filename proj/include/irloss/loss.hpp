#pragma once

// Traditional per-sample loss |y - f(x)|^alpha, the weight vector standing in
// for the probability of each scale, and the imprecision-range loss built by
// summing weighted per-scale losses.

#include <cstddef>
#include <span>
#include <vector>

#include "irloss/data.hpp"
#include "irloss/imprecision.hpp"
#include "irloss/nn.hpp"

namespace irloss {

/// A model-ready training example (inputs and target already normalized).
struct Example {
  std::size_t base_id = 0;
  Sequence inputs;
  Vector target;
};

std::vector<Example> make_examples(const Dataset& data);
/// D_0..D_N as normalized example sets; base ids point into D_0.
std::vector<std::vector<Example>> make_examples(const ImpreciseDatasets& datasets);

struct LossConfig {
  int alpha = 2;  // 1 (absolute) or 2 (squared)

  void validate() const;
};

/// Sum over measures of |y_m - pred_m|^alpha.
double base_loss(std::span<const double> y, std::span<const double> pred, int alpha);

/// d base_loss / d pred. For alpha = 1 the sign subgradient (0 at ties).
Vector base_loss_grad(std::span<const double> y, std::span<const double> pred, int alpha);

enum class WeightScheme { linear, exponential, custom };

struct WeightSpec {
  WeightScheme scheme = WeightScheme::linear;
  double lambda = 0.5;  // exponential decay ratio, in (0, 1)
  Vector custom;        // used verbatim for WeightScheme::custom
};

/// w_0 > w_1 > ... > w_N > 0 with sum 1.
class WeightVector {
 public:
  /// Throws std::invalid_argument unless the values obey the invariants.
  explicit WeightVector(Vector values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t j) const { return values_[j]; }
  const Vector& values() const noexcept { return values_; }

 private:
  Vector values_;
};

/// linear: w_j ~ N + 1 - j; exponential: w_j ~ lambda^j; both normalized.
WeightVector weight_vector(std::size_t n, const WeightSpec& spec);

struct StageLoss {
  double value = 0.0;
  Gradients grads;
};

/// w_j * sum over samples of base_loss, with its exact gradient. Forward
/// passes run in eval mode, so the result is a deterministic function of
/// the parameters.
StageLoss stage_loss(const ModelParams& model, std::span<const Example> stage, double weight, int alpha);

/// Value only.
double stage_loss_value(const ModelParams& model, std::span<const Example> stage, double weight, int alpha);

/// Sum of the per-scale losses (grouped by scale).
double total_loss(const ModelParams& model, const std::vector<std::vector<Example>>& stages,
                  const WeightVector& weights, int alpha);

/// Gradient of total_loss.
Gradients total_loss_grad(const ModelParams& model, const std::vector<std::vector<Example>>& stages,
                          const WeightVector& weights, int alpha);

/// The same total accumulated base sample by base sample: for every source
/// sample, sum_j w_j L(x_j) over all of its imprecise variants.
double total_loss_by_sample(const ModelParams& model, const std::vector<std::vector<Example>>& stages,
                            const WeightVector& weights, int alpha);

}  // namespace irloss
