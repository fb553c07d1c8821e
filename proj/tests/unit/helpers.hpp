#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "irloss/data.hpp"
#include "irloss/nn.hpp"
#include "irloss/rng.hpp"

namespace irloss::testing {

inline Sequence random_sequence(Rng& rng, std::size_t steps, std::size_t width, double lo = -1.0, double hi = 1.0) {
  Sequence seq(steps, Vector(width));
  for (auto& step : seq)
    for (double& v : step) v = rng.uniform(lo, hi);
  return seq;
}

inline Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline ModelParams small_model(std::vector<LayerShape> layers, std::uint64_t seed, double dropout = 0.0,
                               std::size_t out = kMeasureCount) {
  return init_params(layers, out, seed, dropout);
}

/// Patients with strictly positive values drawn log-uniformly.
inline Dataset random_dataset(Rng& rng, std::size_t patients, std::size_t steps) {
  Dataset d;
  for (std::size_t i = 0; i < patients; ++i) {
    PatientRecord r;
    r.id = static_cast<std::int64_t>(i + 1);
    for (std::size_t t = 0; t < steps; ++t) {
      Vector v(kMeasureCount);
      for (double& x : v) x = std::exp(rng.uniform(-2.0, 3.0));
      r.inputs.push_back(v);
    }
    r.target.resize(kMeasureCount);
    for (double& x : r.target) x = std::exp(rng.uniform(-2.0, 3.0));
    d.records.push_back(std::move(r));
  }
  return d;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace irloss::testing
