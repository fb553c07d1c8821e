#include "irloss/imprecision.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

#include "irloss/errors.hpp"
#include "irloss/rng.hpp"

namespace irloss {

void ImprecisionSpec::validate() const {
  if (!(tolerance > 0.0 && tolerance < 1.0)) throw std::invalid_argument("tolerance r must be in (0, 1)");
  if (!(step > 0.0)) throw std::invalid_argument("step s must be positive");
  if (step > tolerance) throw std::invalid_argument("step s must not exceed tolerance r");
  const double n = std::round(tolerance / step);
  if (n < 1.0 || std::abs(n * step - tolerance) > 1e-9)
    throw std::invalid_argument("step s must divide tolerance r");
}

std::size_t ImprecisionSpec::stage_count() const {
  validate();
  return static_cast<std::size_t>(std::round(tolerance / step));
}

std::vector<double> delta_sequence(const ImprecisionSpec& spec) {
  const std::size_t n = spec.stage_count();
  std::vector<double> deltas(n);
  for (std::size_t j = 1; j <= n; ++j) deltas[j - 1] = static_cast<double>(j) * spec.step;
  return deltas;
}

SignPattern positive_signs(const Sequence& x) {
  SignPattern p;
  p.reserve(x.size());
  for (const Vector& step : x) p.emplace_back(step.size(), 1);
  return p;
}

SignPattern random_signs(const Sequence& x, Rng& rng) {
  SignPattern p;
  p.reserve(x.size());
  for (const Vector& step : x) {
    std::vector<int> row(step.size());
    for (int& s : row) s = rng.sign();
    p.push_back(std::move(row));
  }
  return p;
}

std::vector<SignPattern> corner_signs(const Sequence& x) {
  std::size_t slots = 0;
  for (const Vector& step : x) slots += step.size();
  if (slots > kMaxCornerSlots)
    throw std::invalid_argument("all-corners sampling needs at most " + std::to_string(kMaxCornerSlots) +
                                " sign slots, got " + std::to_string(slots));
  std::vector<SignPattern> out;
  const std::size_t count = std::size_t{1} << slots;
  out.reserve(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    SignPattern p = positive_signs(x);
    std::size_t bit = 0;
    for (auto& row : p)
      for (int& s : row) s = ((mask >> bit++) & 1u) != 0 ? -1 : 1;
    out.push_back(std::move(p));
  }
  return out;
}

Sequence perturb(const Sequence& x, double delta, const SignPattern& signs) {
  if (signs.size() != x.size()) throw ShapeError("perturb: sign pattern length mismatch");
  Sequence out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (signs[t].size() != x[t].size()) throw ShapeError("perturb: sign pattern width mismatch");
    out[t].resize(x[t].size());
    for (std::size_t k = 0; k < x[t].size(); ++k)
      out[t][k] = x[t][k] * (1.0 + static_cast<double>(signs[t][k]) * delta);
  }
  return out;
}

Dataset ImpreciseDatasets::stage(std::size_t j) const {
  if (j >= sets.size()) throw std::out_of_range("no imprecise dataset with that index");
  if (j == 0) return base;
  Dataset d;
  d.stats = base.stats;
  d.records.reserve(sets[j].size());
  for (const auto& s : sets[j]) d.records.push_back(s.record);
  return d;
}

ImpreciseDatasets generate_datasets(const Dataset& data, const ImprecisionSpec& spec,
                                    const SignStrategy& strategy) {
  if (data.empty()) throw std::invalid_argument("generate_datasets: empty dataset");
  const auto scales = delta_sequence(spec);

  ImpreciseDatasets out{spec, {0.0}, data, {}};
  out.deltas.insert(out.deltas.end(), scales.begin(), scales.end());
  out.sets.resize(scales.size() + 1);

  auto& d0 = out.sets[0];
  d0.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) d0.push_back({i, 0, data.records[i]});

  std::vector<std::vector<SignPattern>> corners;
  if (strategy.mode == SignMode::all_corners) {
    corners.reserve(data.size());
    for (const auto& r : data.records) corners.push_back(corner_signs(r.inputs));
  }

  Rng rng(strategy.seed);
  for (std::size_t j = 1; j < out.sets.size(); ++j) {
    const double delta = out.deltas[j];
    auto& set = out.sets[j];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const PatientRecord& base = data.records[i];
      auto emit = [&](const SignPattern& signs) {
        PatientRecord rec{base.id, perturb(base.inputs, delta, signs), base.target};
        set.push_back({i, j, std::move(rec)});
      };
      switch (strategy.mode) {
        case SignMode::all_corners:
          for (const auto& p : corners[i]) emit(p);
          break;
        case SignMode::random_per_sample:
          emit(random_signs(base.inputs, rng));
          break;
        case SignMode::fixed_positive:
          emit(positive_signs(base.inputs));
          break;
      }
    }
  }
  return out;
}

ImpreciseDatasets original_only(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("original_only: empty dataset");
  ImpreciseDatasets out{ImprecisionSpec{0.0, 0.0}, {0.0}, data, {{}}};
  out.sets[0].reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.sets[0].push_back({i, 0, data.records[i]});
  return out;
}

void save_imprecise_csv(const ImpreciseDatasets& datasets, std::ostream& out) {
  out << "patient_id,step,FT3,FT4,TSH,TRAb,is_target,base_id,delta_index\n";
  char buf[40];
  for (const auto& set : datasets.sets) {
    for (const auto& s : set) {
      const auto& r = s.record;
      auto row = [&](std::size_t step, const Vector& v, int is_target) {
        out << r.id << ',' << step;
        for (double x : v) {
          std::snprintf(buf, sizeof buf, "%.17g", x);
          out << ',' << buf;
        }
        out << ',' << is_target << ',' << s.base_id << ',' << s.delta_index << '\n';
      };
      for (std::size_t t = 0; t < r.inputs.size(); ++t) row(t, r.inputs[t], 0);
      row(r.inputs.size(), r.target, 1);
    }
  }
}

}  // namespace irloss
