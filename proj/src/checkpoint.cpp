#include "irloss/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "irloss/errors.hpp"

namespace irloss {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ParseError(0, "truncated checkpoint");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  write_params(out, checkpoint.params);
  if (!checkpoint.normalization) {
    put_u32(out, 0);
    return;
  }
  const auto& n = *checkpoint.normalization;
  put_u32(out, static_cast<std::uint32_t>(n.mean.size()));
  for (double v : n.mean) put_f64(out, v);
  for (double v : n.stddev) put_f64(out, v);
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint cp{read_params(in), std::nullopt};
  const auto width = static_cast<std::uint32_t>(get_le(in, 4));
  if (width != 0) {
    if (width != cp.params.input_size() || width != cp.params.output_size())
      throw ParseError(0, "normalization width does not match the model");
    Normalization n{Vector(width), Vector(width)};
    for (double& v : n.mean) v = std::bit_cast<double>(get_le(in, 8));
    for (double& v : n.stddev) {
      v = std::bit_cast<double>(get_le(in, 8));
      if (!(v > 0.0)) throw ParseError(0, "normalization scale must be positive");
    }
    cp.normalization = std::move(n);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(0, "trailing bytes after checkpoint");
  return cp;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(0, "cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace irloss
