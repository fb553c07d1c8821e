#include "irloss/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace irloss {

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace irloss
