#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "helpers.hpp"
#include "irloss/eval.hpp"

using namespace irloss;
using namespace irloss::testing;

namespace {

// Answers with a fixed vector per (unperturbed) input sequence.
Predictor lookup(std::map<Sequence, Vector> table, Vector fallback = {}) {
  return [table = std::move(table), fallback](const Sequence& x) {
    const auto it = table.find(x);
    if (it != table.end()) return it->second;
    REQUIRE_FALSE(fallback.empty());
    return fallback;
  };
}

Predictor oracle(const Dataset& d) {
  std::map<Sequence, Vector> table;
  for (const auto& r : d.records) table[r.inputs] = r.target;
  return lookup(table);
}

Dataset tiny_cohort(std::size_t patients, std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.patients = patients;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("oracle predictor is exact") {
    const auto d = tiny_cohort(60, 3);
    const auto rep = accuracy(oracle(d), d, ReferenceRanges::defaults());
    for (double a : rep.accuracy) CHECK(a == 1.0);
    CHECK(rep.average == 1.0);
    for (const auto& c : rep.counts) {
      CHECK(c.total() == d.size());
      CHECK(c.fp == 0);
      CHECK(c.fn == 0);
    }
    EvalConfig cfg;
    CHECK(distance(oracle(d), d, cfg).total == 0.0);
  }

  TEST_CASE("constant in-range predictor on an all-abnormal set") {
    auto d = tiny_cohort(10, 1);
    for (auto& r : d.records) r.target = {10.0, 30.0, 0.01, 5.0};
    const Predictor normal = [](const Sequence&) { return Vector{5.0, 15.0, 1.0, 1.0}; };
    const auto rep = accuracy(normal, d, ReferenceRanges::defaults());
    for (double a : rep.accuracy) CHECK(a == 0.0);
    for (const auto& c : rep.counts) CHECK(c.fn == d.size());
  }

  TEST_CASE("counting with known labels") {
    auto d = tiny_cohort(4, 2);
    const Vector normal{5.0, 15.0, 1.0, 1.0};
    const Vector abnormal{10.0, 30.0, 0.01, 5.0};
    d.records[0].target = normal;
    d.records[1].target = abnormal;
    d.records[2].target = normal;
    d.records[3].target = abnormal;
    std::map<Sequence, Vector> preds{{d.records[0].inputs, normal},
                                     {d.records[1].inputs, abnormal},
                                     {d.records[2].inputs, abnormal},
                                     {d.records[3].inputs, normal}};
    const auto rep = accuracy(lookup(preds), d, ReferenceRanges::defaults());
    for (std::size_t m = 0; m < 4; ++m) {
      CHECK(rep.accuracy[m] == 0.5);
      CHECK(rep.counts[m].tp == 1);
      CHECK(rep.counts[m].tn == 1);
      CHECK(rep.counts[m].fp == 1);
      CHECK(rep.counts[m].fn == 1);
    }
    CHECK(rep.average == 0.5);
  }

  TEST_CASE("distance arithmetic") {
    auto d = tiny_cohort(2, 5);
    d.records[0].target = {3.0, 1.0, 1.0, 1.0};
    d.records[1].target = {3.0, 1.0, 1.0, 1.0};
    const Predictor model = lookup({{d.records[0].inputs, {2.9, 1.0, 1.0, 1.0}},
                                    {d.records[1].inputs, {3.1, 1.0, 1.0, 1.0}}});
    EvalConfig cfg;
    const auto rep = distance(model, d, cfg);
    CHECK(rep.total == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(rep.per_measure[0] == rep.total);
    CHECK(rep.per_patient == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(rep.variants == 2);
    cfg.alpha = 1;
    CHECK(distance(model, d, cfg).total == doctest::Approx(0.2).epsilon(1e-12));
  }

  TEST_CASE("distance at delta 0 equals the unperturbed loss sum") {
    const auto d = tiny_cohort(30, 7);
    const std::vector<LayerShape> shapes{{4, 5}};
    const auto params = init_params(shapes, 4, 3);
    const auto stats = compute_normalization(d);
    const Predictor model = model_predictor(params, stats);
    EvalConfig cfg;
    cfg.deltas = {0.0};
    double expected = 0.0;
    for (const auto& r : d.records) expected += base_loss(r.target, model(r.inputs), 2);
    CHECK(distance(model, d, cfg).total == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("doubling samples doubles a constant predictor's distance") {
    const auto d = tiny_cohort(20, 8);
    const Predictor constant = [](const Sequence&) { return Vector{4.0, 16.0, 1.0, 1.0}; };
    EvalConfig cfg;
    cfg.deltas = {0.05};
    cfg.samples_per_patient = 3;
    const double one = distance(constant, d, cfg).total;
    cfg.samples_per_patient = 6;
    CHECK(distance(constant, d, cfg).total == doctest::Approx(2.0 * one).epsilon(1e-14));
  }

  TEST_CASE("perturbation at delta 0 matches the plain evaluation") {
    const auto d = tiny_cohort(40, 9);
    const std::vector<LayerShape> shapes{{4, 5}};
    const auto params = init_params(shapes, 4, 4);
    const auto before = params;
    const Predictor model = model_predictor(params, compute_normalization(d));
    const auto plain = accuracy(model, d, ReferenceRanges::defaults());
    const auto zero = accuracy(model, d, ReferenceRanges::defaults(), Perturbation{0.0, {}});
    CHECK(plain.accuracy == zero.accuracy);
    for (std::size_t m = 0; m < 4; ++m) CHECK(plain.counts[m].tp == zero.counts[m].tp);
    CHECK(params == before);
  }

  TEST_CASE("perturbed evaluation draws the same signs at every delta") {
    const auto d = tiny_cohort(5, 10);
    std::vector<Sequence> seen;
    const Predictor record = [&seen](const Sequence& x) {
      seen.push_back(x);
      return Vector{1.0, 1.0, 1.0, 1.0};
    };
    EvalConfig cfg;
    cfg.deltas = {0.02, 0.08};
    distance(record, d, cfg);
    REQUIRE(seen.size() == 10);
    for (std::size_t p = 0; p < 5; ++p) {
      const auto& base = d.records[p].inputs;
      const auto& a = seen[2 * p];
      const auto& b = seen[2 * p + 1];
      for (std::size_t t = 0; t < base.size(); ++t)
        for (std::size_t m = 0; m < 4; ++m) CHECK((a[t][m] > base[t][m]) == (b[t][m] > base[t][m]));
    }
  }

  TEST_CASE("property: counts always cover the test set") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
      const auto d = tiny_cohort(5 + rng.below(30), rng.next());
      const std::vector<LayerShape> shapes{{4, 2 + rng.below(3)}};
      const auto params = init_params(shapes, 4, rng.next());
      const Predictor model = model_predictor(params, compute_normalization(d));
      const double delta = 0.01 * static_cast<double>(rng.below(11));
      const auto rep = accuracy(model, d, ReferenceRanges::defaults(), Perturbation{delta, {SignMode::random_per_sample, rng.next()}});
      for (std::size_t m = 0; m < 4; ++m) {
        CHECK(rep.counts[m].total() == d.size());
        CHECK(rep.accuracy[m] >= 0.0);
        CHECK(rep.accuracy[m] <= 1.0);
        CHECK(rep.accuracy[m] ==
              static_cast<double>(rep.counts[m].tp + rep.counts[m].tn) / static_cast<double>(d.size()));
      }
      EvalConfig cfg;
      cfg.deltas = {delta};
      CHECK(distance(model, d, cfg).total >= 0.0);
    }
  }

  TEST_CASE("config validation") {
    EvalConfig cfg;
    cfg.samples_per_patient = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.deltas = {0.2};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.alpha = 3;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.signs.mode = SignMode::all_corners;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  TEST_CASE("least squares slope") {
    CHECK(least_squares_slope({0.0, 1.0, 2.0}, {1.0, 3.0, 5.0}) == doctest::Approx(2.0));
    CHECK(least_squares_slope({0.01, 0.02, 0.03, 0.04}, {0.9, 0.9, 0.9, 0.9}) == 0.0);
    // Independent oracle: closed form through two points.
    CHECK(least_squares_slope({0.2, 0.7}, {0.4, -0.1}) == doctest::Approx((-0.1 - 0.4) / (0.7 - 0.2)));
    CHECK_THROWS_AS(least_squares_slope({1.0}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(least_squares_slope({1.0, 1.0}, {1.0, 2.0}), std::invalid_argument);
  }

  TEST_CASE("stability sweep structure") {
    const auto d = tiny_cohort(40, 12);
    const auto stats = compute_normalization(d);
    const std::vector<LayerShape> shapes{{4, 3}};
    const Predictor a = model_predictor(init_params(shapes, 4, 1), stats);
    const Predictor b = model_predictor(init_params(shapes, 4, 2), stats);
    EvalConfig cfg;
    const auto rep = stability_sweep(a, b, d, {0.05, 0.0, 0.10}, cfg);
    REQUIRE(rep.rows.size() == 6);
    CHECK(rep.rows[0].value == 0.0);
    CHECK(rep.rows[0].model == "ir");
    CHECK(rep.rows[1].model == "ls");
    CHECK(rep.rows[4].value == 0.10);
    for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) CHECK(rep.rows[i].value <= rep.rows[i + 1].value);
    CHECK(rep.rows[0].report.accuracy.accuracy == accuracy(a, d, cfg.ranges).accuracy);
    CHECK(rep.slopes.count("ir") == 1);
    CHECK(rep.slopes.count("ls") == 1);

    std::ostringstream out;
    write_sweep_csv(rep, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("delta,model,", 0) == 0);
  }

  TEST_CASE("granularity sweep") {
    SyntheticConfig syn;
    syn.patients = 40;
    const auto [train, test] = split(generate_synthetic(syn), 30);
    GranularitySettings gs;
    gs.layers = {{4, 3}};
    gs.train.epochs = 1;
    gs.train.batch_size = 8;
    EvalConfig cfg;
    cfg.deltas = {0.05, 0.10};
    const auto rep = granularity_sweep(train, test, gs, cfg);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].value == 0.005);
    CHECK(rep.rows[0].stages == 20);
    CHECK(rep.rows[1].stages == 10);
    CHECK(rep.rows[2].stages == 5);
    const auto again = granularity_sweep(train, test, gs, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(eval_values(again.rows[i].report) == eval_values(rep.rows[i].report));
      CHECK(again.rows[i].mean_perturbed_accuracy == rep.rows[i].mean_perturbed_accuracy);
    }
    gs.steps = {0.01};
    CHECK(granularity_sweep(train, test, gs, cfg).rows.size() == 1);
    gs.steps = {0.03};
    CHECK_THROWS_AS(granularity_sweep(train, test, gs, cfg), std::invalid_argument);
  }
}
