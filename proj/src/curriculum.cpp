#include "irloss/curriculum.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "irloss/errors.hpp"
#include "irloss/rng.hpp"

namespace irloss {
namespace {

struct StageInput {
  const std::vector<Example>* examples;
  double delta;
  double weight;
};

// Minibatch Adam over one stage. Adam moments start fresh; the run's
// generator is shared across stages so that shuffles and dropout masks
// continue one stream.
StageReport run_stage(ModelParams& model, const StageInput& in, std::size_t stage, std::size_t epochs,
                      const TrainConfig& cfg, Rng& rng) {
  const auto started = std::chrono::steady_clock::now();
  const auto& examples = *in.examples;
  if (examples.empty()) throw std::invalid_argument("stage " + std::to_string(stage) + " has no samples");

  StageReport report;
  report.stage = stage;
  report.delta = in.delta;
  report.weight = in.weight;

  AdamState adam = AdamState::fresh(model, cfg.adam);
  Gradients grads = Gradients::zeros_like(model);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    // Fisher-Yates with the run generator.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const Example& ex = examples[order[b]];
        const ForwardResult fr = forward(model, ex.inputs, Mode::train, rng.next());
        batch_loss += base_loss(ex.target, fr.prediction, cfg.alpha);
        Vector g = base_loss_grad(ex.target, fr.prediction, cfg.alpha);
        for (double& v : g) v *= in.weight;
        backward_into(model, fr.cache, g, grads);
      }
      epoch_loss += in.weight * batch_loss;
      if (!std::isfinite(epoch_loss)) throw TrainingDiverged(stage, epoch);
      adam_step(model, grads, adam);
    }
    if (!model.all_finite()) throw TrainingDiverged(stage, epoch);
    report.epoch_losses.push_back(epoch_loss);
  }

  report.final_loss = stage_loss_value(model, examples, in.weight, cfg.alpha);
  if (!std::isfinite(report.final_loss)) throw TrainingDiverged(stage, epochs);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

TrainResult run_stages(const std::vector<StageInput>& stages, const ModelParams& model_init,
                       const TrainConfig& cfg) {
  cfg.validate();
  model_init.validate();
  if (!cfg.stage_epochs.empty() && cfg.stage_epochs.size() != stages.size())
    throw std::invalid_argument("per-stage epochs list has " + std::to_string(cfg.stage_epochs.size()) +
                                " entries for " + std::to_string(stages.size()) + " stages");
  TrainResult result{model_init, {}};
  result.report.seed = cfg.seed;
  Rng rng(cfg.seed);
  for (std::size_t j = 0; j < stages.size(); ++j) {
    if (cfg.keep_checkpoints) result.report.stage_start.push_back(result.model);
    result.report.stages.push_back(run_stage(result.model, stages[j], j, cfg.epochs_for(j), cfg, rng));
    if (cfg.keep_checkpoints) result.report.stage_end.push_back(result.model);
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  for (std::size_t e : stage_epochs)
    if (e == 0) throw std::invalid_argument("per-stage epochs must be at least 1");
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  LossConfig{alpha}.validate();
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

std::size_t TrainConfig::epochs_for(std::size_t stage) const {
  return stage < stage_epochs.size() ? stage_epochs[stage] : epochs;
}

TrainResult train_baseline(const Dataset& data, const ModelParams& model_init, const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train_baseline: empty dataset");
  const std::vector<Example> examples = make_examples(data);
  return run_stages({StageInput{&examples, 0.0, 1.0}}, model_init, cfg);
}

TrainResult train_curriculum(const ImpreciseDatasets& datasets, const WeightVector& weights,
                             const ModelParams& model_init, const TrainConfig& cfg) {
  if (weights.size() != datasets.stage_count())
    throw std::invalid_argument("train_curriculum: " + std::to_string(datasets.stage_count()) +
                                " datasets but " + std::to_string(weights.size()) + " weights");
  const auto examples = make_examples(datasets);
  std::vector<StageInput> stages;
  for (std::size_t j = 0; j < examples.size(); ++j) stages.push_back({&examples[j], datasets.deltas[j], weights[j]});
  return run_stages(stages, model_init, cfg);
}

void write_train_report(const TrainReport& report, std::ostream& out) {
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "stage,delta,weight,epochs,first_epoch_loss,last_epoch_loss,final_loss,epoch_losses\n";
  for (const auto& s : report.stages) {
    out << s.stage << ',' << num(s.delta) << ',' << num(s.weight) << ',' << s.epoch_losses.size() << ','
        << num(s.epoch_losses.front()) << ',' << num(s.epoch_losses.back()) << ',' << num(s.final_loss) << ',';
    for (std::size_t e = 0; e < s.epoch_losses.size(); ++e) out << (e ? ";" : "") << num(s.epoch_losses[e]);
    out << '\n';
  }
}

}  // namespace irloss
