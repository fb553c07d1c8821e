#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "irloss/errors.hpp"
#include "irloss/nn.hpp"

using namespace irloss;
using namespace irloss::testing;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Loop-based LSTM written straight from the recurrence, gate rows ordered
// input, forget, candidate, output. No dropout.
Vector scalar_reference(const ModelParams& p, const Sequence& xs) {
  Sequence inputs = xs;
  for (const auto& layer : p.layers) {
    const std::size_t H = layer.hidden_size();
    const std::size_t D = layer.input_size();
    Vector h(H, 0.0), c(H, 0.0);
    Sequence outputs;
    for (const Vector& x : inputs) {
      Vector z(4 * H);
      for (std::size_t r = 0; r < 4 * H; ++r) {
        double s = layer.bias[r];
        for (std::size_t k = 0; k < D; ++k) s += layer.input_weights(r, k) * x[k];
        for (std::size_t k = 0; k < H; ++k) s += layer.hidden_weights(r, k) * h[k];
        z[r] = s;
      }
      for (std::size_t u = 0; u < H; ++u) {
        const double i = sigmoid(z[u]);
        const double f = sigmoid(z[H + u]);
        const double g = std::tanh(z[2 * H + u]);
        const double o = sigmoid(z[3 * H + u]);
        c[u] = f * c[u] + i * g;
        h[u] = o * std::tanh(c[u]);
      }
      outputs.push_back(h);
    }
    inputs = outputs;
  }
  const Vector& top = inputs.back();
  Vector y(p.output_size());
  for (std::size_t m = 0; m < y.size(); ++m) {
    y[m] = p.output_bias[m];
    for (std::size_t k = 0; k < top.size(); ++k) y[m] += p.output_weights(m, k) * top[k];
  }
  return y;
}

double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("init_params shapes and forget bias") {
    const std::vector<LayerShape> shapes{{4, 8}};
    const auto p = init_params(shapes, 4, 7);
    REQUIRE(p.layers.size() == 1);
    const auto& l = p.layers[0];
    CHECK(l.input_weights.rows() == 32);
    CHECK(l.input_weights.cols() == 4);
    CHECK(l.hidden_weights.rows() == 32);
    CHECK(l.hidden_weights.cols() == 8);
    CHECK(l.bias.size() == 32);
    CHECK(p.output_weights.rows() == 4);
    CHECK(p.output_weights.cols() == 8);
    CHECK(p.output_bias.size() == 4);
    for (std::size_t u = 0; u < 8; ++u) {
      CHECK(l.bias[8 + u] == 1.0);
      CHECK(l.bias[u] == 0.0);
      CHECK(l.bias[16 + u] == 0.0);
      CHECK(l.bias[24 + u] == 0.0);
    }
    const double limit_in = std::sqrt(6.0 / (4 + 32));
    for (double w : l.input_weights.values()) CHECK(std::abs(w) <= limit_in);
  }

  TEST_CASE("init_params determinism and validation") {
    const std::vector<LayerShape> shapes{{4, 8}, {8, 3}};
    CHECK(init_params(shapes, 4, 11) == init_params(shapes, 4, 11));
    CHECK_FALSE(init_params(shapes, 4, 11) == init_params(shapes, 4, 12));
    const std::vector<LayerShape> zero{{4, 0}};
    CHECK_THROWS_AS(init_params(zero, 4, 1), std::invalid_argument);
    const std::vector<LayerShape> broken{{4, 8}, {5, 3}};
    CHECK_THROWS_AS(init_params(broken, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_params({}, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_params(shapes, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_params(shapes, 4, 1, 1.0), std::invalid_argument);
  }

  TEST_CASE("zero weights give the output bias") {
    const std::vector<LayerShape> shapes{{3, 1}};
    auto p = init_params(shapes, 2, 3);
    for (auto t : p.tensors())
      for (double& v : t) v = 0.0;
    p.layers[0].bias[1] = 1.0;  // forget gate
    p.output_bias = {0.25, -1.5};
    Rng rng(5);
    const auto out = forward(p, random_sequence(rng, 5, 3, -10.0, 10.0), Mode::eval).prediction;
    CHECK(out == Vector{0.25, -1.5});
    CHECK(forward(p, random_sequence(rng, 5, 3), Mode::eval).cache.top_hidden == Vector{0.0});
  }

  TEST_CASE("forward matches the scalar reference") {
    const std::vector<LayerShape> hand{{2, 2}};
    auto p = init_params(hand, 2, 1);
    // Fixed small weights instead of the random draw.
    double v = 0.05;
    for (auto t : p.tensors())
      for (double& x : t) {
        x = v;
        v = -v * 1.1 + 0.013;
      }
    const Sequence xs{{0.5, -0.25}, {1.0, 0.75}};
    const Vector ref = scalar_reference(p, xs);
    const Vector got = forward(p, xs, Mode::eval).prediction;
    CHECK(max_abs_diff(got, ref) <= 1e-12);

    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      const std::vector<LayerShape> deep{{3, 5}, {5, 4}};
      const auto q = init_params(deep, 3, 100 + trial);
      const auto seq = random_sequence(rng, 1 + rng.below(6), 3, -2.0, 2.0);
      CHECK(max_abs_diff(forward(q, seq, Mode::eval).prediction, scalar_reference(q, seq)) <= 1e-12);
    }
  }

  TEST_CASE("predict is bit-identical to eval-mode forward") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const std::vector<LayerShape> shapes{{4, 6}, {6, 5}};
      const auto p = init_params(shapes, 4, trial, 0.4);
      const auto seq = random_sequence(rng, 6, 4);
      CHECK(predict(p, seq) == forward(p, seq, Mode::eval).prediction);
    }
  }

  TEST_CASE("forward input errors") {
    const std::vector<LayerShape> shapes{{4, 3}};
    const auto p = init_params(shapes, 4, 1);
    CHECK_THROWS_AS(forward(p, {}, Mode::eval), std::invalid_argument);
    CHECK_THROWS_AS(forward(p, Sequence{{1.0, 2.0}}, Mode::eval), ShapeError);
    CHECK_THROWS_AS(predict(p, Sequence{{1.0, 2.0, 3.0, 4.0}, {1.0}}), ShapeError);
  }

  TEST_CASE("eval mode ignores dropout") {
    const std::vector<LayerShape> shapes{{4, 6}, {6, 6}};
    auto with = init_params(shapes, 4, 21, 0.5);
    auto without = with;
    without.dropout = 0.0;
    Rng rng(8);
    const auto seq = random_sequence(rng, 4, 4);
    CHECK(forward(with, seq, Mode::eval, 1).prediction == forward(without, seq, Mode::eval, 2).prediction);
    CHECK(forward(without, seq, Mode::train, 3).prediction == forward(without, seq, Mode::eval).prediction);
  }

  TEST_CASE("train-mode expectation matches eval output") {
    const std::vector<LayerShape> shapes{{4, 8}};
    auto p = init_params(shapes, 4, 5, 0.3);
    p.output_bias = {1.0, -1.0, 0.5, 2.0};
    Rng rng(17);
    const auto seq = random_sequence(rng, 3, 4);
    const Vector eval_out = forward(p, seq, Mode::eval).prediction;
    Vector mean(4, 0.0);
    const int draws = 10000;
    for (int k = 0; k < draws; ++k) {
      const auto out = forward(p, seq, Mode::train, static_cast<std::uint64_t>(k) + 1).prediction;
      for (std::size_t m = 0; m < 4; ++m) mean[m] += out[m] / draws;
    }
    for (std::size_t m = 0; m < 4; ++m) CHECK(std::abs(mean[m] - eval_out[m]) <= 0.02 * std::abs(eval_out[m]));
  }

  TEST_CASE("backward agrees with central differences") {
    Rng rng(41);
    for (double dropout : {0.0, 0.3}) {
      for (int trial = 0; trial < 4; ++trial) {
        const std::vector<LayerShape> shapes{{4, 3}, {3, 3}};
        auto p = init_params(shapes, 4, 200 + trial, dropout);
        const auto seq = random_sequence(rng, 3, 4);
        const Vector c = random_vector(rng, 4);
        const std::uint64_t seed = 77 + trial;
        // With a fixed seed the dropout masks are fixed, so the objective is smooth.
        const auto fw = forward(p, seq, Mode::train, seed);
        const Gradients g = backward(p, fw.cache, c);
        auto probe = p;
        auto pt = probe.tensors();
        const auto gt = g.tensors();
        double worst = 0.0;
        for (std::size_t i = 0; i < pt.size(); ++i) {
          for (std::size_t k = 0; k < pt[i].size(); ++k) {
            const double saved = pt[i][k];
            pt[i][k] = saved + 1e-5;
            const double up = dot(c, forward(probe, seq, Mode::train, seed).prediction);
            pt[i][k] = saved - 1e-5;
            const double down = dot(c, forward(probe, seq, Mode::train, seed).prediction);
            pt[i][k] = saved;
            const double numeric = (up - down) / 2e-5;
            worst = std::max(worst, std::abs(gt[i][k] - numeric) / std::max(1.0, std::abs(numeric)));
          }
        }
        CHECK(worst <= 1e-7);
      }
    }
  }

  TEST_CASE("backward linearity, purity and shape closure") {
    const std::vector<LayerShape> shapes{{4, 5}, {5, 2}};
    const auto p = init_params(shapes, 4, 9, 0.2);
    Rng rng(4);
    const auto seq = random_sequence(rng, 5, 4);
    const auto fw = forward(p, seq, Mode::train, 12);
    const Gradients zero = backward(p, fw.cache, Vector(4, 0.0));
    for (auto t : zero.tensors())
      for (double v : t) CHECK(v == 0.0);
    const Vector c = random_vector(rng, 4);
    const Gradients a = backward(p, fw.cache, c);
    const Gradients b = backward(p, fw.cache, c);
    CHECK(static_cast<const ParamTensors&>(a) == static_cast<const ParamTensors&>(b));
    CHECK(a.same_shape(p));

    Gradients acc = Gradients::zeros_like(p);
    backward_into(p, fw.cache, c, acc);
    backward_into(p, fw.cache, c, acc);
    const auto at = a.tensors();
    const auto acc_t = acc.tensors();
    for (std::size_t i = 0; i < at.size(); ++i)
      for (std::size_t k = 0; k < at[i].size(); ++k)
        CHECK(acc_t[i][k] == doctest::Approx(2.0 * at[i][k]).epsilon(1e-12));
  }

  TEST_CASE("backward rejects mismatched inputs") {
    const std::vector<LayerShape> shapes{{4, 5}};
    const std::vector<LayerShape> other_shapes{{4, 6}};
    const auto p = init_params(shapes, 4, 1);
    const auto q = init_params(other_shapes, 4, 1);
    Rng rng(2);
    const auto fw = forward(p, random_sequence(rng, 3, 4), Mode::train);
    CHECK_THROWS_AS(backward(q, fw.cache, Vector(4, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(backward(p, fw.cache, Vector(3, 1.0)), ShapeError);
  }

  TEST_CASE("adam: zero gradient keeps parameters") {
    const std::vector<LayerShape> shapes{{4, 3}};
    auto p = init_params(shapes, 4, 3);
    const auto before = p;
    auto state = AdamState::fresh(p);
    adam_step(p, Gradients::zeros_like(p), state);
    CHECK(p == before);
    CHECK(state.step == 1);
  }

  TEST_CASE("adam: first step moves by the learning rate") {
    const std::vector<LayerShape> shapes{{1, 1}};
    auto p = init_params(shapes, 1, 3);
    for (auto t : p.tensors())
      for (double& v : t) v = 0.0;
    auto g = Gradients::zeros_like(p);
    for (auto t : g.tensors())
      for (double& v : t) v = 1.0;
    auto state = AdamState::fresh(p);
    adam_step(p, g, state);
    // m_hat = 1, v_hat = 1: w = -lr / (1 + eps).
    for (auto t : p.tensors())
      for (double v : t) CHECK(v == doctest::Approx(-0.001).epsilon(1e-7));
  }

  TEST_CASE("adam: determinism and shape check") {
    const std::vector<LayerShape> shapes{{4, 3}};
    const auto start = init_params(shapes, 4, 3);
    Rng rng(6);
    std::vector<Gradients> grads;
    for (int k = 0; k < 5; ++k) {
      auto g = Gradients::zeros_like(start);
      for (auto t : g.tensors())
        for (double& v : t) v = rng.uniform(-1, 1);
      grads.push_back(g);
    }
    auto a = start, b = start;
    auto sa = AdamState::fresh(a), sb = AdamState::fresh(b);
    for (const auto& g : grads) {
      adam_step(a, g, sa);
      adam_step(b, g, sb);
    }
    CHECK(a == b);
    const std::vector<LayerShape> other{{4, 4}};
    auto wrong = Gradients::zeros_like(init_params(other, 4, 1));
    CHECK_THROWS_AS(adam_step(a, wrong, sa), ShapeError);
  }

  TEST_CASE("parameter serialization round-trip and corruption") {
    const std::vector<LayerShape> shapes{{4, 5}, {5, 3}};
    const auto p = init_params(shapes, 4, 8, 0.25);
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    write_params(buf, p);
    const std::string bytes = buf.str();
    std::istringstream in(bytes, std::ios::binary);
    CHECK(read_params(in) == p);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::istringstream in2(bad_magic, std::ios::binary);
    CHECK_THROWS_AS(read_params(in2), ParseError);

    std::istringstream in3(bytes.substr(0, bytes.size() - 5), std::ios::binary);
    CHECK_THROWS_AS(read_params(in3), ParseError);
  }
}
