#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "irloss/data.hpp"
#include "irloss/nn.hpp"

namespace irloss {

/// A trained model together with the normalization it expects.
struct Checkpoint {
  ModelParams params;
  std::optional<Normalization> normalization;

  bool operator==(const Checkpoint&) const = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
/// Throws ParseError on truncated or malformed input.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace irloss
