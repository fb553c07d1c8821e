#include "irloss/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>

#include "irloss/errors.hpp"
#include "irloss/rng.hpp"

namespace irloss {
namespace {

SignPattern draw_signs(const SignStrategy& strategy, const Sequence& inputs, Rng& rng) {
  switch (strategy.mode) {
    case SignMode::random_per_sample:
      return random_signs(inputs, rng);
    case SignMode::fixed_positive:
      return positive_signs(inputs);
    case SignMode::all_corners:
      break;
  }
  throw std::invalid_argument("evaluation supports random or positive signs only");
}

void check_prediction(const Vector& pred) {
  if (pred.size() != kMeasureCount) throw ShapeError("predictor must return 4 measures");
}

}  // namespace

Predictor model_predictor(const ModelParams& params, std::optional<Normalization> stats) {
  params.validate();
  auto model = std::make_shared<const ModelParams>(params);
  auto norm = std::make_shared<const std::optional<Normalization>>(std::move(stats));
  return [model, norm](const Sequence& raw) {
    if (!*norm) return predict(*model, raw);
    return (*norm)->invert(predict(*model, (*norm)->apply(raw)));
  };
}

void EvalConfig::validate() const {
  if (samples_per_patient == 0) throw std::invalid_argument("samples per patient must be at least 1");
  LossConfig{alpha}.validate();
  if (deltas.empty()) throw std::invalid_argument("eval needs at least one delta");
  for (double d : deltas)
    if (!(d >= 0.0 && d <= tolerance + 1e-12)) throw std::invalid_argument("eval delta outside [0, r]");
  if (signs.mode == SignMode::all_corners) throw std::invalid_argument("evaluation supports random or positive signs only");
  ranges.validate();
}

AccuracyReport accuracy(const Predictor& model, const Dataset& test, const ReferenceRanges& ranges,
                        const std::optional<Perturbation>& perturbation) {
  if (test.empty()) throw std::invalid_argument("accuracy: empty test set");
  ranges.validate();
  AccuracyReport report;
  report.patients = test.size();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const PatientRecord& rec = test.records[i];
    Vector pred;
    if (perturbation) {
      Rng rng(Rng::mix(perturbation->signs.seed, i));
      const SignPattern signs = draw_signs(perturbation->signs, rec.inputs, rng);
      pred = model(perturb(rec.inputs, perturbation->delta, signs));
    } else {
      pred = model(rec.inputs);
    }
    check_prediction(pred);
    for (std::size_t m = 0; m < kMeasureCount; ++m) {
      const bool truth = label(rec.target[m], ranges.bounds[m]) == Label::abnormal;
      const bool guess = label(pred[m], ranges.bounds[m]) == Label::abnormal;
      auto& c = report.counts[m];
      if (truth && guess) ++c.tp;
      else if (!truth && !guess) ++c.tn;
      else if (!truth && guess) ++c.fp;
      else ++c.fn;
    }
  }
  double sum = 0.0;
  for (std::size_t m = 0; m < kMeasureCount; ++m) {
    report.accuracy[m] = report.counts[m].accuracy();
    sum += report.accuracy[m];
  }
  report.average = sum / static_cast<double>(kMeasureCount);
  return report;
}

DistanceReport distance(const Predictor& model, const Dataset& test, const EvalConfig& cfg) {
  cfg.validate();
  if (test.empty()) throw std::invalid_argument("distance: empty test set");
  DistanceReport report;
  report.patients = test.size();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const PatientRecord& rec = test.records[i];
    Rng rng(Rng::mix(cfg.signs.seed, i));
    for (double delta : cfg.deltas) {
      // Restart the patient's substream per scale so every scale sees the
      // same sign patterns.
      Rng scale_rng = rng;
      for (std::size_t k = 0; k < cfg.samples_per_patient; ++k) {
        const SignPattern signs = draw_signs(cfg.signs, rec.inputs, scale_rng);
        const Vector pred = model(perturb(rec.inputs, delta, signs));
        check_prediction(pred);
        for (std::size_t m = 0; m < kMeasureCount; ++m) {
          const double e = std::abs(pred[m] - rec.target[m]);
          const double term = cfg.alpha == 2 ? e * e : e;
          report.per_measure[m] += term;
          report.total += term;
        }
        ++report.variants;
      }
    }
  }
  report.per_patient = report.total / static_cast<double>(test.size());
  return report;
}

EvalReport evaluate(const Predictor& model, const Dataset& test, const EvalConfig& cfg, double delta,
                    std::string model_id) {
  EvalConfig at = cfg;
  at.deltas = {delta};
  at.validate();
  EvalReport report;
  report.accuracy = accuracy(model, test, cfg.ranges, Perturbation{delta, cfg.signs});
  report.distance = distance(model, test, at);
  report.delta = delta;
  report.seed = cfg.signs.seed;
  report.model_id = std::move(model_id);
  return report;
}

double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("slope needs at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("slope undefined for a single x value");
  return sxy / sxx;
}

SweepReport stability_sweep(const Predictor& ir_model, const Predictor& ls_model, const Dataset& test,
                            std::vector<double> grid, const EvalConfig& cfg) {
  if (grid.empty()) throw std::invalid_argument("stability sweep needs a delta grid");
  std::sort(grid.begin(), grid.end());
  SweepReport report;
  report.parameter = "delta";
  std::vector<double> acc_ir, acc_ls;
  for (double delta : grid) {
    for (const auto& [name, model] : {std::pair<std::string, const Predictor*>{"ir", &ir_model},
                                      std::pair<std::string, const Predictor*>{"ls", &ls_model}}) {
      SweepRow row;
      row.value = delta;
      row.model = name;
      row.report = evaluate(*model, test, cfg, delta, name);
      (name == "ir" ? acc_ir : acc_ls).push_back(row.report.accuracy.average);
      report.rows.push_back(std::move(row));
    }
  }
  if (grid.size() >= 2 && grid.front() != grid.back()) {
    report.slopes["ir"] = least_squares_slope(grid, acc_ir);
    report.slopes["ls"] = least_squares_slope(grid, acc_ls);
  }
  return report;
}

SweepReport granularity_sweep(const Dataset& train, const Dataset& test, const GranularitySettings& settings,
                              const EvalConfig& cfg) {
  cfg.validate();
  if (settings.steps.empty()) throw std::invalid_argument("granularity sweep needs at least one step");
  for (double s : settings.steps) ImprecisionSpec{settings.tolerance, s}.validate();

  std::vector<double> steps = settings.steps;
  std::sort(steps.begin(), steps.end());

  SweepReport report;
  report.parameter = "step";
  for (double s : steps) {
    const ImprecisionSpec spec{settings.tolerance, s};
    const auto datasets = generate_datasets(train, spec, settings.train_signs);
    const auto weights = weight_vector(spec.stage_count(), settings.weights);
    const auto init = init_params(settings.layers, kMeasureCount, settings.init_seed, settings.dropout);
    const auto trained = train_curriculum(datasets, weights, init, settings.train);
    const Predictor model = model_predictor(trained.model, train.stats);

    SweepRow row;
    row.value = s;
    row.model = "ir";
    row.stages = spec.stage_count();
    row.report = evaluate(model, test, cfg, 0.0, "ir");
    double acc = 0.0;
    for (double d : cfg.deltas) acc += accuracy(model, test, cfg.ranges, Perturbation{d, cfg.signs}).average;
    row.mean_perturbed_accuracy = acc / static_cast<double>(cfg.deltas.size());
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::vector<std::string> eval_columns() {
  std::vector<std::string> cols{"delta"};
  for (auto name : kMeasureNames) cols.push_back("acc_" + std::string(name));
  cols.insert(cols.end(), {"acc_avg", "distance_total", "distance_per_patient"});
  for (auto name : kMeasureNames) cols.push_back("dist_" + std::string(name));
  for (auto name : kMeasureNames)
    for (const char* c : {"tp_", "tn_", "fp_", "fn_"}) cols.push_back(c + std::string(name));
  return cols;
}

std::vector<double> eval_values(const EvalReport& r) {
  std::vector<double> v{r.delta};
  v.insert(v.end(), r.accuracy.accuracy.begin(), r.accuracy.accuracy.end());
  v.insert(v.end(), {r.accuracy.average, r.distance.total, r.distance.per_patient});
  v.insert(v.end(), r.distance.per_measure.begin(), r.distance.per_measure.end());
  for (const auto& c : r.accuracy.counts)
    v.insert(v.end(), {static_cast<double>(c.tp), static_cast<double>(c.tn), static_cast<double>(c.fp),
                       static_cast<double>(c.fn)});
  return v;
}

void write_sweep_csv(const SweepReport& report, std::ostream& out) {
  out << report.parameter << ",model,stages,mean_perturbed_accuracy";
  for (const auto& c : eval_columns()) out << ',' << c;
  out << '\n';
  for (const auto& row : report.rows) {
    out << format_number(row.value) << ',' << row.model << ',' << row.stages << ','
        << format_number(row.mean_perturbed_accuracy);
    for (double v : eval_values(row.report)) out << ',' << format_number(v);
    out << '\n';
  }
}

}  // namespace irloss
