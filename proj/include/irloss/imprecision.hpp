#pragma once

// Tolerance regions x * (1 +/- r), the scale sequence Delta_1..Delta_N and
// the discretized imprecise datasets D_0..D_N built from them.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "irloss/data.hpp"
#include "irloss/rng.hpp"
#include "irloss/tensor.hpp"

namespace irloss {

struct ImprecisionSpec {
  double tolerance;  // r
  double step;       // s

  /// Checks 0 < s <= r < 1 and that s divides r (within 1e-9).
  void validate() const;
  /// N = r / s.
  std::size_t stage_count() const;
};

/// Delta_j = j * s for j = 1..N. Delta_0 = 0 is implicit.
std::vector<double> delta_sequence(const ImprecisionSpec& spec);

enum class SignMode { all_corners, random_per_sample, fixed_positive };

struct SignStrategy {
  SignMode mode = SignMode::random_per_sample;
  std::uint64_t seed = 0;
};

/// Largest number of sign slots (features x steps) all-corners will expand.
inline constexpr std::size_t kMaxCornerSlots = 12;

/// One +1/-1 per feature per time step.
using SignPattern = std::vector<std::vector<int>>;

SignPattern positive_signs(const Sequence& x);
SignPattern random_signs(const Sequence& x, Rng& rng);
/// Every sign combination; pattern `index` flips slot b to -1 when bit b is set.
std::vector<SignPattern> corner_signs(const Sequence& x);

/// Elementwise x * (1 + sign * delta).
Sequence perturb(const Sequence& x, double delta, const SignPattern& signs);

struct ImpreciseSample {
  std::size_t base_id;      // index of the source record
  std::size_t delta_index;  // j
  PatientRecord record;     // perturbed inputs, original target
};

struct ImpreciseDatasets {
  ImprecisionSpec spec;
  std::vector<double> deltas;  // Delta_0 = 0, Delta_1, ..., Delta_N
  Dataset base;                // D_0, identical to the source data
  std::vector<std::vector<ImpreciseSample>> sets;  // D_0..D_N

  std::size_t stage_count() const noexcept { return sets.size(); }
  /// D_j as a plain dataset carrying the source normalization.
  Dataset stage(std::size_t j) const;
};

ImpreciseDatasets generate_datasets(const Dataset& data, const ImprecisionSpec& spec,
                                    const SignStrategy& strategy);

/// D_0 alone (N = 0): the degenerate family with no imprecise scales.
ImpreciseDatasets original_only(const Dataset& data);

/// Dataset CSV schema plus base_id and delta_index columns.
void save_imprecise_csv(const ImpreciseDatasets& datasets, std::ostream& out);

}  // namespace irloss
