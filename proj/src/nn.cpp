#include "irloss/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "irloss/errors.hpp"
#include "irloss/rng.hpp"

namespace irloss {
namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void fill_uniform(Matrix& m, double limit, Rng& rng) {
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Inverted dropout mask: 0 with probability p, 1/(1-p) otherwise.
Vector draw_mask(std::size_t n, double p, Rng& rng) {
  Vector mask(n);
  const double keep = 1.0 / (1.0 - p);
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep;
  return mask;
}

void run_layer(const LstmLayerParams& layer, LayerCache& cache) {
  const std::size_t steps = cache.inputs.size();
  const std::size_t hidden = layer.hidden_size();
  const std::size_t in = layer.input_size();
  const std::size_t rows = 4 * hidden;

  cache.gates.assign(steps, Vector(rows));
  cache.cells.assign(steps, Vector(hidden));
  cache.cell_tanh.assign(steps, Vector(hidden));
  cache.hiddens.assign(steps, Vector(hidden));

  Vector h_prev(hidden, 0.0);
  Vector c_prev(hidden, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const Vector& x = cache.inputs[t];
    Vector& z = cache.gates[t];
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = layer.bias[r];
      const double* wx = layer.input_weights.row(r);
      for (std::size_t k = 0; k < in; ++k) acc += wx[k] * x[k];
      const double* wh = layer.hidden_weights.row(r);
      for (std::size_t k = 0; k < hidden; ++k) acc += wh[k] * h_prev[k];
      z[r] = acc;
    }
    Vector& c = cache.cells[t];
    Vector& ct = cache.cell_tanh[t];
    Vector& h = cache.hiddens[t];
    for (std::size_t k = 0; k < hidden; ++k) {
      const double i = sigmoid(z[k]);
      const double f = sigmoid(z[hidden + k]);
      const double g = std::tanh(z[2 * hidden + k]);
      const double o = sigmoid(z[3 * hidden + k]);
      z[k] = i;
      z[hidden + k] = f;
      z[2 * hidden + k] = g;
      z[3 * hidden + k] = o;
      c[k] = f * c_prev[k] + i * g;
      ct[k] = std::tanh(c[k]);
      h[k] = o * ct[k];
    }
    h_prev = h;
    c_prev = c;
  }
}

void check_sequence(const ModelParams& params, const Sequence& sequence) {
  if (sequence.empty()) throw std::invalid_argument("forward: empty sequence");
  const std::size_t width = params.input_size();
  for (const Vector& step : sequence) {
    if (step.size() != width) {
      throw ShapeError("forward: step width " + std::to_string(step.size()) + ", expected " +
                       std::to_string(width));
    }
  }
}

// Little-endian encoding helpers.
void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw ParseError(0, "truncated model file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ParseError(0, "truncated model file");
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  return std::bit_cast<double>(bits);
}

constexpr char kMagic[4] = {'I', 'R', 'L', 'M'};
constexpr std::uint32_t kFormatVersion = 1;
// Refuse absurd headers before allocating.
constexpr std::uint32_t kMaxDim = 1u << 16;

}  // namespace

// ---------------------------------------------------------------------------
// ParamTensors

std::size_t ParamTensors::input_size() const {
  return layers.empty() ? 0 : layers.front().input_size();
}

std::size_t ParamTensors::parameter_count() const {
  std::size_t n = output_weights.size() + output_bias.size();
  for (const auto& l : layers) n += l.input_weights.size() + l.hidden_weights.size() + l.bias.size();
  return n;
}

std::vector<std::span<double>> ParamTensors::tensors() {
  std::vector<std::span<double>> out;
  out.reserve(3 * layers.size() + 2);
  for (auto& l : layers) {
    out.emplace_back(l.input_weights.values());
    out.emplace_back(l.hidden_weights.values());
    out.emplace_back(l.bias);
  }
  out.emplace_back(output_weights.values());
  out.emplace_back(output_bias);
  return out;
}

std::vector<std::span<const double>> ParamTensors::tensors() const {
  std::vector<std::span<const double>> out;
  out.reserve(3 * layers.size() + 2);
  for (const auto& l : layers) {
    out.emplace_back(l.input_weights.values());
    out.emplace_back(l.hidden_weights.values());
    out.emplace_back(l.bias);
  }
  out.emplace_back(output_weights.values());
  out.emplace_back(output_bias);
  return out;
}

bool ParamTensors::same_shape(const ParamTensors& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.input_weights.rows() != b.input_weights.rows() ||
        a.input_weights.cols() != b.input_weights.cols() ||
        a.hidden_weights.rows() != b.hidden_weights.rows() ||
        a.hidden_weights.cols() != b.hidden_weights.cols() || a.bias.size() != b.bias.size()) {
      return false;
    }
  }
  return output_weights.rows() == other.output_weights.rows() &&
         output_weights.cols() == other.output_weights.cols() &&
         output_bias.size() == other.output_bias.size();
}

bool ParamTensors::all_finite() const {
  const auto ts = tensors();
  return std::all_of(ts.begin(), ts.end(), [](auto t) { return irloss::all_finite(t); });
}

void ModelParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("model has no LSTM layers");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  std::size_t expected_in = layers.front().input_size();
  for (const auto& l : layers) {
    const std::size_t h = l.hidden_size();
    if (h == 0 || l.input_size() == 0) throw std::invalid_argument("zero-sized LSTM layer");
    if (l.input_size() != expected_in) throw ShapeError("layer input width does not match previous layer");
    if (l.input_weights.rows() != 4 * h || l.hidden_weights.rows() != 4 * h || l.bias.size() != 4 * h) {
      throw ShapeError("LSTM gate block sizes are inconsistent");
    }
    expected_in = h;
  }
  if (output_weights.cols() != expected_in || output_weights.rows() != output_bias.size() ||
      output_bias.empty()) {
    throw ShapeError("output projection does not match the last layer");
  }
}

// ---------------------------------------------------------------------------
// Gradients

Gradients Gradients::zeros_like(const ParamTensors& shape) {
  Gradients g;
  g.layers.reserve(shape.layers.size());
  for (const auto& l : shape.layers) {
    g.layers.push_back({Matrix(l.input_weights.rows(), l.input_weights.cols()),
                        Matrix(l.hidden_weights.rows(), l.hidden_weights.cols()),
                        Vector(l.bias.size(), 0.0)});
  }
  g.output_weights = Matrix(shape.output_weights.rows(), shape.output_weights.cols());
  g.output_bias.assign(shape.output_bias.size(), 0.0);
  return g;
}

void Gradients::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
}

void Gradients::scale(double factor) {
  for (auto t : tensors())
    for (double& v : t) v *= factor;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (!same_shape(other)) throw ShapeError("gradient accumulation shape mismatch");
  auto dst = tensors();
  const auto src = other.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t k = 0; k < dst[i].size(); ++k) dst[i][k] += src[i][k];
  return *this;
}

// ---------------------------------------------------------------------------
// Construction

ModelParams init_params(std::span<const LayerShape> layers, std::size_t output_dim,
                        std::uint64_t seed, double dropout) {
  if (layers.empty()) throw std::invalid_argument("init_params: no layers");
  if (output_dim == 0) throw std::invalid_argument("init_params: output_dim must be positive");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].input_size == 0 || layers[i].hidden_size == 0)
      throw std::invalid_argument("init_params: layer dimensions must be positive");
    if (i > 0 && layers[i].input_size != layers[i - 1].hidden_size)
      throw std::invalid_argument("init_params: layer input must equal previous hidden size");
  }

  Rng rng(seed);
  ModelParams p;
  p.dropout = dropout;
  for (const auto& shape : layers) {
    const std::size_t h = shape.hidden_size;
    LstmLayerParams l{Matrix(4 * h, shape.input_size), Matrix(4 * h, h), Vector(4 * h, 0.0)};
    fill_uniform(l.input_weights, glorot_limit(shape.input_size, 4 * h), rng);
    fill_uniform(l.hidden_weights, glorot_limit(h, 4 * h), rng);
    std::fill_n(l.bias.begin() + static_cast<std::ptrdiff_t>(h), h, 1.0);
    p.layers.push_back(std::move(l));
  }
  const std::size_t top = layers.back().hidden_size;
  p.output_weights = Matrix(output_dim, top);
  fill_uniform(p.output_weights, glorot_limit(top, output_dim), rng);
  p.output_bias.assign(output_dim, 0.0);
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

ForwardResult forward(const ModelParams& params, const Sequence& sequence, Mode mode,
                      std::uint64_t seed) {
  check_sequence(params, sequence);
  const bool drop = mode == Mode::train && params.dropout > 0.0;
  Rng rng(seed);

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.layers.resize(params.layers.size());

  const Sequence* previous = &sequence;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    LayerCache& lc = cache.layers[l];
    lc.inputs = *previous;
    if (l > 0 && drop) {
      lc.input_mask.reserve(lc.inputs.size());
      for (Vector& x : lc.inputs) {
        lc.input_mask.push_back(draw_mask(x.size(), params.dropout, rng));
        const Vector& m = lc.input_mask.back();
        for (std::size_t k = 0; k < x.size(); ++k) x[k] *= m[k];
      }
    }
    run_layer(params.layers[l], lc);
    previous = &lc.hiddens;
  }

  cache.top_hidden = previous->back();
  if (drop) {
    cache.top_mask = draw_mask(cache.top_hidden.size(), params.dropout, rng);
    for (std::size_t k = 0; k < cache.top_hidden.size(); ++k) cache.top_hidden[k] *= cache.top_mask[k];
  }

  const std::size_t m = params.output_size();
  const std::size_t h = cache.top_hidden.size();
  result.prediction.assign(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = params.output_bias[r];
    const double* w = params.output_weights.row(r);
    for (std::size_t k = 0; k < h; ++k) acc += w[k] * cache.top_hidden[k];
    result.prediction[r] = acc;
  }
  return result;
}

Vector predict(const ModelParams& params, const Sequence& sequence) {
  // Same arithmetic as forward() in eval mode, without keeping activations.
  check_sequence(params, sequence);
  const std::size_t steps = sequence.size();
  std::size_t width = params.input_size();
  // Scratch reused across calls; predict sits in the gradient checker's inner loop.
  thread_local std::vector<double> current, next, h, c, z;
  current.resize(steps * width);
  for (std::size_t t = 0; t < steps; ++t) std::copy(sequence[t].begin(), sequence[t].end(), current.begin() + t * width);

  for (const auto& layer : params.layers) {
    const std::size_t hidden = layer.hidden_size();
    const std::size_t rows = 4 * hidden;
    next.assign(steps * hidden, 0.0);
    h.assign(hidden, 0.0);
    c.assign(hidden, 0.0);
    z.resize(rows);
    for (std::size_t t = 0; t < steps; ++t) {
      const double* x = current.data() + t * width;
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = layer.bias[r];
        const double* wx = layer.input_weights.row(r);
        for (std::size_t k = 0; k < width; ++k) acc += wx[k] * x[k];
        const double* wh = layer.hidden_weights.row(r);
        for (std::size_t k = 0; k < hidden; ++k) acc += wh[k] * h[k];
        z[r] = acc;
      }
      double* out = next.data() + t * hidden;
      for (std::size_t k = 0; k < hidden; ++k) {
        const double i = sigmoid(z[k]);
        const double f = sigmoid(z[hidden + k]);
        const double g = std::tanh(z[2 * hidden + k]);
        const double o = sigmoid(z[3 * hidden + k]);
        c[k] = f * c[k] + i * g;
        out[k] = o * std::tanh(c[k]);
      }
      std::copy(out, out + hidden, h.begin());
    }
    current.swap(next);
    width = hidden;
  }

  const std::size_t m = params.output_size();
  const double* top = current.data() + (steps - 1) * width;
  Vector prediction(m);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = params.output_bias[r];
    const double* w = params.output_weights.row(r);
    for (std::size_t k = 0; k < width; ++k) acc += w[k] * top[k];
    prediction[r] = acc;
  }
  return prediction;
}

void backward_into(const ModelParams& params, const ForwardCache& cache,
                   std::span<const double> loss_grad, Gradients& grads) {
  if (cache.layers.size() != params.layers.size() ||
      cache.top_hidden.size() != params.output_weights.cols()) {
    throw std::invalid_argument("backward: cache does not belong to these parameters");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& lc = cache.layers[l];
    if (lc.inputs.empty() || lc.hiddens.size() != lc.inputs.size() ||
        lc.hiddens.front().size() != params.layers[l].hidden_size() ||
        lc.inputs.front().size() != params.layers[l].input_size()) {
      throw std::invalid_argument("backward: cache does not belong to these parameters");
    }
  }
  if (loss_grad.size() != params.output_size()) throw ShapeError("backward: loss gradient width mismatch");
  if (!grads.same_shape(params)) throw ShapeError("backward: gradient accumulator shape mismatch");

  const std::size_t m = params.output_size();
  const std::size_t top = cache.top_hidden.size();

  Vector d_top(top, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double g = loss_grad[r];
    grads.output_bias[r] += g;
    double* gw = grads.output_weights.row(r);
    const double* w = params.output_weights.row(r);
    for (std::size_t k = 0; k < top; ++k) {
      gw[k] += g * cache.top_hidden[k];
      d_top[k] += w[k] * g;
    }
  }
  if (!cache.top_mask.empty())
    for (std::size_t k = 0; k < top; ++k) d_top[k] *= cache.top_mask[k];

  const std::size_t steps = cache.layers.back().hiddens.size();
  Sequence d_hidden(steps, Vector(top, 0.0));
  d_hidden.back() = std::move(d_top);

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const LstmLayerParams& layer = params.layers[l];
    LstmLayerParams& g = grads.layers[l];
    const LayerCache& lc = cache.layers[l];
    const std::size_t hidden = layer.hidden_size();
    const std::size_t in = layer.input_size();
    const std::size_t rows = 4 * hidden;
    const bool need_input_grad = l > 0;

    Sequence d_input;
    if (need_input_grad) d_input.assign(steps, Vector(in, 0.0));

    Vector dh_next(hidden, 0.0);
    Vector dc_next(hidden, 0.0);
    Vector dz(rows);
    const Vector zeros(hidden, 0.0);
    for (std::size_t t = steps; t-- > 0;) {
      const Vector& gate = lc.gates[t];
      const Vector& ct = lc.cell_tanh[t];
      const Vector& c_prev = t > 0 ? lc.cells[t - 1] : zeros;
      const Vector& h_prev = t > 0 ? lc.hiddens[t - 1] : zeros;
      const Vector& x = lc.inputs[t];

      for (std::size_t k = 0; k < hidden; ++k) {
        const double i = gate[k];
        const double f = gate[hidden + k];
        const double cand = gate[2 * hidden + k];
        const double o = gate[3 * hidden + k];
        const double dh = d_hidden[t][k] + dh_next[k];
        const double dc = dc_next[k] + dh * o * (1.0 - ct[k] * ct[k]);
        dz[k] = dc * cand * i * (1.0 - i);
        dz[hidden + k] = dc * c_prev[k] * f * (1.0 - f);
        dz[2 * hidden + k] = dc * i * (1.0 - cand * cand);
        dz[3 * hidden + k] = dh * ct[k] * o * (1.0 - o);
        dc_next[k] = dc * f;
      }

      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = dz[r];
        g.bias[r] += d;
        double* gwx = g.input_weights.row(r);
        for (std::size_t k = 0; k < in; ++k) gwx[k] += d * x[k];
        double* gwh = g.hidden_weights.row(r);
        const double* wh = layer.hidden_weights.row(r);
        for (std::size_t k = 0; k < hidden; ++k) {
          gwh[k] += d * h_prev[k];
          dh_next[k] += wh[k] * d;
        }
        if (need_input_grad) {
          const double* wx = layer.input_weights.row(r);
          Vector& dx = d_input[t];
          for (std::size_t k = 0; k < in; ++k) dx[k] += wx[k] * d;
        }
      }
    }

    if (need_input_grad) {
      if (!lc.input_mask.empty()) {
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t k = 0; k < in; ++k) d_input[t][k] *= lc.input_mask[t][k];
      }
      d_hidden = std::move(d_input);
    }
  }
}

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   std::span<const double> loss_grad) {
  Gradients grads = Gradients::zeros_like(params);
  backward_into(params, cache, loss_grad, grads);
  return grads;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::fresh(const ParamTensors& shape, AdamConfig config) {
  return AdamState{Gradients::zeros_like(shape), Gradients::zeros_like(shape), 0, config};
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment)) {
    throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
  }
  const AdamConfig& cfg = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < p[i].size(); ++k) {
      const double gk = g[i][k];
      m[i][k] = cfg.beta1 * m[i][k] + (1.0 - cfg.beta1) * gk;
      v[i][k] = cfg.beta2 * v[i][k] + (1.0 - cfg.beta2) * gk * gk;
      const double m_hat = m[i][k] / correction1;
      const double v_hat = v[i][k] / correction2;
      p[i][k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization

void write_params(std::ostream& out, const ModelParams& params) {
  params.validate();
  out.write(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.input_size()));
    put_u32(out, static_cast<std::uint32_t>(l.hidden_size()));
  }
  put_u32(out, static_cast<std::uint32_t>(params.output_size()));
  put_f64(out, params.dropout);
  for (auto t : params.tensors())
    for (double v : t) put_f64(out, v);
}

ModelParams read_params(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw ParseError(0, "not a model file (bad magic)");
  if (get_u32(in) != kFormatVersion) throw ParseError(0, "unsupported model format version");
  const std::uint32_t layer_count = get_u32(in);
  if (layer_count == 0 || layer_count > 64) throw ParseError(0, "implausible layer count");

  std::vector<LayerShape> shapes;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::uint32_t d = get_u32(in);
    const std::uint32_t h = get_u32(in);
    if (d == 0 || h == 0 || d > kMaxDim || h > kMaxDim) throw ParseError(0, "implausible layer size");
    shapes.push_back({d, h});
  }
  const std::uint32_t out_dim = get_u32(in);
  if (out_dim == 0 || out_dim > kMaxDim) throw ParseError(0, "implausible output size");
  const double dropout = get_f64(in);

  ModelParams p;
  p.dropout = dropout;
  for (const auto& s : shapes) {
    p.layers.push_back({Matrix(4 * s.hidden_size, s.input_size), Matrix(4 * s.hidden_size, s.hidden_size),
                        Vector(4 * s.hidden_size, 0.0)});
  }
  p.output_weights = Matrix(out_dim, shapes.back().hidden_size);
  p.output_bias.assign(out_dim, 0.0);
  for (auto t : p.tensors())
    for (double& v : t) v = get_f64(in);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(0, std::string("invalid model: ") + e.what());
  }
  if (!p.all_finite()) throw ParseError(0, "model contains non-finite values");
  return p;
}

}  // namespace irloss
