#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "irloss/errors.hpp"
#include "irloss/imprecision.hpp"
#include "irloss/loss.hpp"

using namespace irloss;
using namespace irloss::testing;

namespace {

std::vector<std::vector<Example>> random_stages(Rng& rng, std::size_t bases, std::size_t stages) {
  auto d = random_dataset(rng, bases, 1 + rng.below(4));
  d.stats = compute_normalization(d);
  double s = 0.01;
  const auto sets = generate_datasets(d, {s * static_cast<double>(stages - 1 == 0 ? 1 : stages - 1), s},
                                      {SignMode::random_per_sample, rng.next()});
  auto ex = make_examples(sets);
  if (stages == 1) ex.resize(1);
  return ex;
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("base loss examples") {
    CHECK(base_loss(Vector{3.0}, Vector{2.5}, 2) == 0.25);
    CHECK(base_loss(Vector{3.0}, Vector{2.5}, 1) == 0.5);
    CHECK(base_loss(Vector{1.0, -2.0}, Vector{1.0, -2.0}, 1) == 0.0);
    CHECK(base_loss(Vector{1.0, -2.0}, Vector{1.0, -2.0}, 2) == 0.0);
    CHECK(base_loss(Vector{1.0, 2.0}, Vector{0.0, 4.0}, 2) == 5.0);
    CHECK_THROWS_AS(base_loss(Vector{1.0}, Vector{1.0, 2.0}, 2), ShapeError);
    CHECK_THROWS_AS(LossConfig{3}.validate(), std::invalid_argument);
    CHECK_NOTHROW(LossConfig{1}.validate());
  }

  TEST_CASE("base loss gradient") {
    CHECK(base_loss_grad(Vector{3.0}, Vector{2.5}, 2) == Vector{-1.0});
    CHECK(base_loss_grad(Vector{3.0, 1.0, 2.0}, Vector{2.5, 1.5, 2.0}, 1) == Vector{-1.0, 1.0, 0.0});
  }

  TEST_CASE("weight vector examples") {
    const auto lin = weight_vector(2, {WeightScheme::linear});
    CHECK(lin[0] == doctest::Approx(3.0 / 6).epsilon(1e-15));
    CHECK(lin[1] == doctest::Approx(2.0 / 6).epsilon(1e-15));
    CHECK(lin[2] == doctest::Approx(1.0 / 6).epsilon(1e-15));
    const auto ex = weight_vector(2, {WeightScheme::exponential, 0.5});
    CHECK(ex[0] == doctest::Approx(4.0 / 7).epsilon(1e-15));
    CHECK(ex[1] == doctest::Approx(2.0 / 7).epsilon(1e-15));
    CHECK(ex[2] == doctest::Approx(1.0 / 7).epsilon(1e-15));
    for (WeightScheme s : {WeightScheme::linear, WeightScheme::exponential})
      CHECK(weight_vector(0, {s}).values() == Vector{1.0});
    CHECK(weight_vector(0, {WeightScheme::custom, 0.5, {1.0}}).values() == Vector{1.0});
  }

  TEST_CASE("weight vector rejects invalid lists") {
    CHECK_THROWS_AS(WeightVector(Vector{0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(WeightVector(Vector{0.3, 0.7}), std::invalid_argument);
    CHECK_THROWS_AS(WeightVector(Vector{0.6, 0.3}), std::invalid_argument);
    CHECK_THROWS_AS(WeightVector(Vector{1.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(WeightVector(Vector{}), std::invalid_argument);
    CHECK_THROWS_AS(weight_vector(2, {WeightScheme::custom, 0.5, {0.5, 0.5}}), std::invalid_argument);
    CHECK_THROWS_AS(weight_vector(1, {WeightScheme::custom, 0.5, {1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(weight_vector(2, {WeightScheme::exponential, 1.0}), std::invalid_argument);
  }

  TEST_CASE("property: weight laws") {
    Rng rng(77);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = rng.below(40);
      const WeightSpec spec{trial % 2 ? WeightScheme::linear : WeightScheme::exponential, rng.uniform(0.05, 0.95)};
      const auto w = weight_vector(n, spec);
      REQUIRE(w.size() == n + 1);
      const double sum = std::accumulate(w.values().begin(), w.values().end(), 0.0);
      CHECK(std::abs(sum - 1.0) <= 1e-12);
      for (std::size_t j = 0; j + 1 < w.size(); ++j) CHECK(w[j] > w[j + 1]);
      CHECK(w[n] > 0.0);
    }
  }

  TEST_CASE("stage loss examples") {
    Rng rng(3);
    const std::vector<LayerShape> shapes{{4, 3}};
    const auto model = init_params(shapes, 4, 2);
    const auto stages = random_stages(rng, 6, 3);
    const auto zero = stage_loss(model, stages[1], 0.0, 2);
    CHECK(zero.value == 0.0);
    for (auto t : zero.grads.tensors())
      for (double v : t) CHECK(v == 0.0);

    const Example& one = stages[0][0];
    const auto single = stage_loss(model, std::span(&one, 1), 1.0, 2);
    CHECK(single.value == base_loss(one.target, predict(model, one.inputs), 2));

    const double full = stage_loss(model, stages[2], 1.0, 2).value;
    const double half = stage_loss(model, stages[2], 0.5, 2).value;
    CHECK(half == 0.5 * full);
    CHECK(stage_loss_value(model, stages[2], 0.5, 2) == half);
    CHECK_THROWS_AS(stage_loss(model, std::span<const Example>{}, 1.0, 2), std::invalid_argument);
  }

  TEST_CASE("three singleton datasets") {
    // A model whose prediction is its output bias lets the losses be set exactly.
    const std::vector<LayerShape> shapes{{1, 1}};
    auto model = init_params(shapes, 1, 1);
    for (auto t : model.tensors())
      for (double& v : t) v = 0.0;
    const Sequence x{{1.0}};
    std::vector<std::vector<Example>> stages{{{0, x, {0.5}}}, {{0, x, {0.4}}}, {{0, x, {0.3}}}};
    const WeightVector w(Vector{1.0 / 2, 1.0 / 3, 1.0 / 6});
    const double expected = 0.25 / 2 + 0.16 / 3 + 0.09 / 6;
    CHECK(total_loss(model, stages, w, 2) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected == doctest::Approx(0.193333333333333).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss(model, {stages[0], stages[1]}, w, 2), std::invalid_argument);
  }

  TEST_CASE("degeneracy: N = 0 equals the plain loss total") {
    Rng rng(12);
    auto d = random_dataset(rng, 10, 3);
    d.stats = compute_normalization(d);
    const std::vector<LayerShape> shapes{{4, 3}};
    const auto model = init_params(shapes, 4, 2);
    const auto examples = make_examples(d);
    double plain = 0.0;
    double carry = 0.0;
    for (const auto& ex : examples) {
      const double term = base_loss(ex.target, predict(model, ex.inputs), 2);
      const double next = plain + term;
      carry += std::abs(plain) >= std::abs(term) ? (plain - next) + term : (term - next) + plain;
      plain = next;
    }
    CHECK(total_loss(model, make_examples(original_only(d)), WeightVector(Vector{1.0}), 2) == plain + carry);
  }

  TEST_CASE("property: per-sample and per-scale groupings agree") {
    Rng rng(606);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t stages_n = 1 + rng.below(5);
      const auto stages = random_stages(rng, 2 + rng.below(6), stages_n);
      const std::vector<LayerShape> shapes{{4, 1 + rng.below(4)}};
      const auto model = init_params(shapes, 4, rng.next());
      const auto w = weight_vector(stages.size() - 1, {WeightScheme::linear});
      const int alpha = trial % 2 ? 1 : 2;
      const double by_scale = total_loss(model, stages, w, alpha);
      const double by_sample = total_loss_by_sample(model, stages, w, alpha);
      CHECK(std::abs(by_scale - by_sample) <= 1e-12 * std::max(1.0, std::abs(by_scale)));
    }
  }

  TEST_CASE("total gradient sums the stage gradients") {
    Rng rng(5);
    const auto stages = random_stages(rng, 4, 3);
    const std::vector<LayerShape> shapes{{4, 2}};
    const auto model = init_params(shapes, 4, 3);
    const auto w = weight_vector(2, {WeightScheme::linear});
    auto sum = Gradients::zeros_like(model);
    for (std::size_t j = 0; j < 3; ++j) sum += stage_loss(model, stages[j], w[j], 2).grads;
    CHECK(static_cast<const ParamTensors&>(total_loss_grad(model, stages, w, 2)) ==
          static_cast<const ParamTensors&>(sum));
  }

  TEST_CASE("examples are normalized with the attached statistics") {
    Rng rng(8);
    auto d = random_dataset(rng, 5, 2);
    const auto raw = make_examples(d);
    CHECK(raw[0].inputs == d.records[0].inputs);
    d.stats = compute_normalization(d);
    const auto norm = make_examples(d);
    CHECK(norm[2].inputs == d.stats->apply(d.records[2].inputs));
    CHECK(norm[2].target == d.stats->apply(d.records[2].target));
    CHECK(norm[2].base_id == 2);
  }
}
