#include "irloss/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "irloss/errors.hpp"
#include "irloss/rng.hpp"

namespace irloss {
namespace {

constexpr std::string_view kCsvHeader = "patient_id,step,FT3,FT4,TSH,TRAb,is_target";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(line, "invalid number '" + std::string(s) + "'");
  return v;
}

long long parse_int(std::string_view s, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(line, "invalid integer '" + std::string(s) + "'");
  return v;
}

void put_number(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Normalization

Vector Normalization::apply(const Vector& raw) const {
  if (raw.size() != mean.size()) throw ShapeError("normalization width mismatch");
  Vector out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = (raw[k] - mean[k]) / stddev[k];
  return out;
}

Vector Normalization::invert(const Vector& normalized) const {
  if (normalized.size() != mean.size()) throw ShapeError("normalization width mismatch");
  Vector out(normalized.size());
  for (std::size_t k = 0; k < normalized.size(); ++k) out[k] = normalized[k] * stddev[k] + mean[k];
  return out;
}

Sequence Normalization::apply(const Sequence& raw) const {
  Sequence out;
  out.reserve(raw.size());
  for (const Vector& step : raw) out.push_back(apply(step));
  return out;
}

Normalization compute_normalization(const Dataset& train) {
  if (train.empty()) throw std::invalid_argument("cannot normalize an empty dataset");
  Normalization n{Vector(kMeasureCount, 0.0), Vector(kMeasureCount, 0.0)};
  double count = 0.0;
  for (const auto& r : train.records) {
    for (const Vector& step : r.inputs) {
      for (std::size_t k = 0; k < kMeasureCount; ++k) n.mean[k] += step[k];
      count += 1.0;
    }
  }
  for (double& m : n.mean) m /= count;
  for (const auto& r : train.records) {
    for (const Vector& step : r.inputs) {
      for (std::size_t k = 0; k < kMeasureCount; ++k) {
        const double d = step[k] - n.mean[k];
        n.stddev[k] += d * d;
      }
    }
  }
  for (double& s : n.stddev) {
    s = std::sqrt(s / count);
    if (!(s > 0.0)) s = 1.0;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::validate() const {
  if (records.empty()) throw std::invalid_argument("dataset has no records");
  const std::size_t t = steps();
  if (t == 0) throw ShapeError("records have no input steps");
  for (const auto& r : records) {
    if (r.inputs.size() != t) throw ShapeError("inconsistent sequence length in dataset");
    if (r.target.size() != kMeasureCount) throw ShapeError("target must hold 4 measures");
    for (const Vector& step : r.inputs) {
      if (step.size() != kMeasureCount) throw ShapeError("input step must hold 4 measures");
      for (double v : step)
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("measure values must be positive");
    }
    for (double v : r.target)
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("measure values must be positive");
  }
}

void SyntheticConfig::validate() const {
  if (patients == 0 || steps == 0 || horizon == 0)
    throw std::invalid_argument("synthetic config: counts must be positive");
  if (!(ar_coef > 0.0 && ar_coef < 1.0)) throw std::invalid_argument("synthetic config: ar_coef must be in (0,1)");
  if (noise < 0.0 || innovation_sd < 0.0 || setpoint_sd < 0.0 || initial_sd < 0.0)
    throw std::invalid_argument("synthetic config: scales must be non-negative");
  for (double s : link_scale)
    if (!(s > 0.0)) throw std::invalid_argument("synthetic config: link scales must be positive");
}

std::array<double, kMeasureCount> link_measures(const SyntheticConfig& cfg, double severity) {
  std::array<double, kMeasureCount> out{};
  for (std::size_t k = 0; k < kMeasureCount; ++k)
    out[k] = cfg.link_scale[k] * std::exp(cfg.link_slope[k] * severity);
  return out;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.records.reserve(cfg.patients);
  const std::size_t target_step = cfg.steps - 1 + cfg.horizon;

  for (std::size_t i = 0; i < cfg.patients; ++i) {
    Rng rng(Rng::mix(cfg.seed, i));
    const double setpoint = cfg.setpoint_mean + cfg.setpoint_sd * rng.normal();
    double severity = setpoint + cfg.initial_sd * rng.normal();

    auto observe = [&](double s) {
      const auto levels = link_measures(cfg, s);
      Vector v(kMeasureCount);
      for (std::size_t k = 0; k < kMeasureCount; ++k) v[k] = levels[k] * std::exp(cfg.noise * rng.normal());
      return v;
    };

    PatientRecord rec;
    rec.id = static_cast<std::int64_t>(i + 1);
    for (std::size_t t = 0; t <= target_step; ++t) {
      if (t > 0) severity = setpoint + cfg.ar_coef * (severity - setpoint) + cfg.innovation_sd * rng.normal();
      if (t < cfg.steps) {
        rec.inputs.push_back(observe(severity));
      } else if (t == target_step) {
        rec.target = observe(severity);
      }
    }
    data.records.push_back(std::move(rec));
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// CSV

void save_csv(const Dataset& dataset, std::ostream& out) {
  out << kCsvHeader << '\n';
  const std::size_t t = dataset.steps();
  for (const auto& r : dataset.records) {
    auto row = [&](std::size_t step, const Vector& v, int is_target) {
      out << r.id << ',' << step;
      for (double x : v) {
        out << ',';
        put_number(out, x);
      }
      out << ',' << is_target << '\n';
    };
    for (std::size_t s = 0; s < r.inputs.size(); ++s) row(s, r.inputs[s], 0);
    row(t, r.target, 1);
  }
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_csv(dataset, out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Dataset load_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  Dataset data;

  bool have_header = false;
  PatientRecord current;
  bool open = false;  // current has input rows but no target yet
  std::size_t expected_steps = 0;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    if (!have_header) {
      if (text != kCsvHeader) throw ParseError(line_no, "expected header '" + std::string(kCsvHeader) + "'");
      have_header = true;
      continue;
    }
    const auto fields = split_fields(text, ',');
    if (fields.size() != 3 + kMeasureCount)
      throw ParseError(line_no, "expected 7 fields, found " + std::to_string(fields.size()));

    const long long id = parse_int(fields[0], line_no);
    const long long step = parse_int(fields[1], line_no);
    Vector values(kMeasureCount);
    for (std::size_t k = 0; k < kMeasureCount; ++k) {
      values[k] = parse_double(fields[2 + k], line_no);
      if (!(values[k] > 0.0) || !std::isfinite(values[k]))
        throw ParseError(line_no, "measure " + std::string(kMeasureNames[k]) + " must be positive");
    }
    const long long is_target = parse_int(fields[6], line_no);
    if (is_target != 0 && is_target != 1) throw ParseError(line_no, "is_target must be 0 or 1");

    if (!open) {
      current = PatientRecord{};
      current.id = id;
      open = true;
    } else if (id != current.id) {
      throw ParseError(line_no, "patient " + std::to_string(current.id) + " has no target row");
    }

    if (is_target == 0) {
      if (step != static_cast<long long>(current.inputs.size()))
        throw ParseError(line_no, "input steps must be consecutive from 0");
      current.inputs.push_back(std::move(values));
    } else {
      if (current.inputs.empty()) throw ParseError(line_no, "target row before any input step");
      if (expected_steps == 0) expected_steps = current.inputs.size();
      if (current.inputs.size() != expected_steps)
        throw ParseError(line_no, "inconsistent number of input steps (" + std::to_string(current.inputs.size()) +
                                      " vs " + std::to_string(expected_steps) + ")");
      current.target = std::move(values);
      data.records.push_back(std::move(current));
      open = false;
    }
  }
  if (open) throw ParseError(line_no, "last patient has no target row");
  if (data.records.empty()) throw ParseError(0, "no records");
  return data;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_csv(in);
}

// ---------------------------------------------------------------------------
// Splitting

std::pair<Dataset, Dataset> split(const Dataset& dataset, std::size_t n_train) {
  if (n_train == 0 || n_train >= dataset.size())
    throw std::invalid_argument("split: n_train must be in (0, " + std::to_string(dataset.size()) + ")");
  std::vector<PatientRecord> sorted = dataset.records;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PatientRecord& a, const PatientRecord& b) { return a.id < b.id; });
  Dataset train;
  Dataset test;
  const auto cut = sorted.begin() + static_cast<std::ptrdiff_t>(n_train);
  train.records.assign(sorted.begin(), cut);
  test.records.assign(cut, sorted.end());
  train.stats = compute_normalization(train);
  test.stats = train.stats;
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Reference ranges and labels

ReferenceRanges ReferenceRanges::defaults() {
  // Common adult reference intervals: pmol/L, pmol/L, mIU/L, IU/L.
  return ReferenceRanges{{Bounds{3.1, 6.8}, Bounds{12.0, 22.0}, Bounds{0.27, 4.2}, Bounds{0.0, 1.75}}};
}

void ReferenceRanges::validate() const {
  for (std::size_t k = 0; k < kMeasureCount; ++k) {
    const Bounds& b = bounds[k];
    if (!(b.lower >= 0.0 && b.lower < b.upper) || !std::isfinite(b.upper))
      throw std::invalid_argument("reference range for " + std::string(kMeasureNames[k]) + " is invalid");
  }
}

ReferenceRanges load_ranges(std::istream& in) {
  std::map<std::string, Bounds, std::less<>> found;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto fields = split_fields(text, ',');
    if (fields.size() != 3) throw ParseError(line_no, "expected 'measure, lower, upper'");
    const auto it = std::find(kMeasureNames.begin(), kMeasureNames.end(), fields[0]);
    if (it == kMeasureNames.end()) throw ParseError(line_no, "unknown measure '" + std::string(fields[0]) + "'");
    if (found.count(fields[0]) != 0) throw ParseError(line_no, "duplicate measure '" + std::string(fields[0]) + "'");
    const Bounds b{parse_double(fields[1], line_no), parse_double(fields[2], line_no)};
    if (!(b.lower >= 0.0 && b.lower < b.upper)) throw ParseError(line_no, "need 0 <= lower < upper");
    found.emplace(std::string(fields[0]), b);
  }
  ReferenceRanges ranges{};
  for (std::size_t k = 0; k < kMeasureCount; ++k) {
    const auto it = found.find(kMeasureNames[k]);
    if (it == found.end()) throw ParseError(0, "missing reference range for " + std::string(kMeasureNames[k]));
    ranges.bounds[k] = it->second;
  }
  return ranges;
}

ReferenceRanges load_ranges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_ranges(in);
}

void save_ranges(const ReferenceRanges& ranges, std::ostream& out) {
  for (std::size_t k = 0; k < kMeasureCount; ++k) {
    out << kMeasureNames[k] << ", ";
    put_number(out, ranges.bounds[k].lower);
    out << ", ";
    put_number(out, ranges.bounds[k].upper);
    out << '\n';
  }
}

Label label(double value, Bounds range) {
  return value >= range.lower && value <= range.upper ? Label::normal : Label::abnormal;
}

}  // namespace irloss
