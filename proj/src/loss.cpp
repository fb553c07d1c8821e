#include "irloss/loss.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "irloss/errors.hpp"

namespace irloss {
namespace {

Example to_example(std::size_t base_id, const PatientRecord& r, const std::optional<Normalization>& stats) {
  if (stats) return {base_id, stats->apply(r.inputs), stats->apply(r.target)};
  return {base_id, r.inputs, r.target};
}

void check_stages(const std::vector<std::vector<Example>>& stages, const WeightVector& weights) {
  if (stages.size() != weights.size())
    throw std::invalid_argument("expected " + std::to_string(stages.size()) + " weights, got " +
                                std::to_string(weights.size()));
}

}  // namespace

std::vector<Example> make_examples(const Dataset& data) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(to_example(i, data.records[i], data.stats));
  return out;
}

std::vector<std::vector<Example>> make_examples(const ImpreciseDatasets& datasets) {
  std::vector<std::vector<Example>> out(datasets.sets.size());
  for (std::size_t j = 0; j < datasets.sets.size(); ++j) {
    out[j].reserve(datasets.sets[j].size());
    for (const auto& s : datasets.sets[j]) out[j].push_back(to_example(s.base_id, s.record, datasets.base.stats));
  }
  return out;
}

void LossConfig::validate() const {
  if (alpha != 1 && alpha != 2) throw std::invalid_argument("alpha must be 1 or 2");
}

double base_loss(std::span<const double> y, std::span<const double> pred, int alpha) {
  if (y.size() != pred.size()) throw ShapeError("base_loss: width mismatch");
  LossConfig{alpha}.validate();
  double total = 0.0;
  for (std::size_t m = 0; m < y.size(); ++m) {
    const double e = y[m] - pred[m];
    total += alpha == 2 ? e * e : std::abs(e);
  }
  return total;
}

Vector base_loss_grad(std::span<const double> y, std::span<const double> pred, int alpha) {
  if (y.size() != pred.size()) throw ShapeError("base_loss_grad: width mismatch");
  LossConfig{alpha}.validate();
  Vector g(y.size());
  for (std::size_t m = 0; m < y.size(); ++m) {
    const double e = pred[m] - y[m];
    g[m] = alpha == 2 ? 2.0 * e : (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Weights

WeightVector::WeightVector(Vector values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("weight vector is empty");
  double sum = 0.0;
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (!(values_[j] > 0.0) || !std::isfinite(values_[j]))
      throw std::invalid_argument("weights must be positive and finite");
    if (j > 0 && !(values_[j] < values_[j - 1])) throw std::invalid_argument("weights must strictly decrease");
    sum += values_[j];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to 1");
}

WeightVector weight_vector(std::size_t n, const WeightSpec& spec) {
  switch (spec.scheme) {
    case WeightScheme::linear: {
      Vector w(n + 1);
      const double total = static_cast<double>((n + 1) * (n + 2)) / 2.0;
      for (std::size_t j = 0; j <= n; ++j) w[j] = static_cast<double>(n + 1 - j) / total;
      return WeightVector(std::move(w));
    }
    case WeightScheme::exponential: {
      if (!(spec.lambda > 0.0 && spec.lambda < 1.0)) throw std::invalid_argument("lambda must be in (0, 1)");
      Vector w(n + 1);
      double total = 0.0;
      double term = 1.0;
      for (std::size_t j = 0; j <= n; ++j, term *= spec.lambda) {
        w[j] = term;
        total += term;
      }
      for (double& v : w) v /= total;
      return WeightVector(std::move(w));
    }
    case WeightScheme::custom:
      if (spec.custom.size() != n + 1)
        throw std::invalid_argument("custom weights need " + std::to_string(n + 1) + " entries");
      return WeightVector(spec.custom);
  }
  throw std::invalid_argument("unknown weight scheme");
}

// ---------------------------------------------------------------------------
// Stage and total losses

StageLoss stage_loss(const ModelParams& model, std::span<const Example> stage, double weight, int alpha) {
  if (stage.empty()) throw std::invalid_argument("stage_loss: empty dataset");
  StageLoss out{0.0, Gradients::zeros_like(model)};
  for (const Example& ex : stage) {
    const ForwardResult fr = forward(model, ex.inputs, Mode::eval);
    out.value += base_loss(ex.target, fr.prediction, alpha);
    Vector g = base_loss_grad(ex.target, fr.prediction, alpha);
    for (double& v : g) v *= weight;
    backward_into(model, fr.cache, g, out.grads);
  }
  out.value *= weight;
  return out;
}

double stage_loss_value(const ModelParams& model, std::span<const Example> stage, double weight, int alpha) {
  if (stage.empty()) throw std::invalid_argument("stage_loss: empty dataset");
  // Neumaier summation: finite differences of the value divide its rounding
  // error by 2 epsilon, and stages hold thousands of terms.
  double sum = 0.0;
  double carry = 0.0;
  for (const Example& ex : stage) {
    const double term = base_loss(ex.target, predict(model, ex.inputs), alpha);
    const double next = sum + term;
    carry += std::abs(sum) >= std::abs(term) ? (sum - next) + term : (term - next) + sum;
    sum = next;
  }
  return weight * (sum + carry);
}

double total_loss(const ModelParams& model, const std::vector<std::vector<Example>>& stages,
                  const WeightVector& weights, int alpha) {
  check_stages(stages, weights);
  double total = 0.0;
  for (std::size_t j = 0; j < stages.size(); ++j) total += stage_loss_value(model, stages[j], weights[j], alpha);
  return total;
}

Gradients total_loss_grad(const ModelParams& model, const std::vector<std::vector<Example>>& stages,
                          const WeightVector& weights, int alpha) {
  check_stages(stages, weights);
  Gradients g = Gradients::zeros_like(model);
  for (std::size_t j = 0; j < stages.size(); ++j) g += stage_loss(model, stages[j], weights[j], alpha).grads;
  return g;
}

double total_loss_by_sample(const ModelParams& model, const std::vector<std::vector<Example>>& stages,
                            const WeightVector& weights, int alpha) {
  check_stages(stages, weights);
  // base id -> (scale index, example) pairs
  std::map<std::size_t, std::vector<std::pair<std::size_t, const Example*>>> by_base;
  for (std::size_t j = 0; j < stages.size(); ++j)
    for (const Example& ex : stages[j]) by_base[ex.base_id].emplace_back(j, &ex);

  double total = 0.0;
  for (const auto& [base, variants] : by_base) {
    double per_sample = 0.0;
    for (const auto& [j, ex] : variants)
      per_sample += weights[j] * base_loss(ex->target, predict(model, ex->inputs), alpha);
    total += per_sample;
  }
  return total;
}

}  // namespace irloss
