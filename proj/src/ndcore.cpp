#include "esad/ndcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace esad {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

bool finite_span(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for shape " +
                     shape_str(rows, cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const { return finite_span(data_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " times " +
                     shape_str(b.rows(), b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// StackGrads

void StackGrads::set_zero() {
  for (auto& l : layers) {
    std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

void StackGrads::scale(double factor) {
  for (auto& l : layers) {
    for (double& w : l.weight.data()) w *= factor;
    for (double& b : l.bias) b *= factor;
  }
}

void StackGrads::add(const StackGrads& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("StackGrads::add: layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto dst = layers[i].weight.data();
    auto src = other.layers[i].weight.data();
    if (dst.size() != src.size() || layers[i].bias.size() != other.layers[i].bias.size()) {
      throw ShapeError("StackGrads::add: layer " + std::to_string(i) + " shape");
    }
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    for (std::size_t k = 0; k < layers[i].bias.size(); ++k) {
      layers[i].bias[k] += other.layers[i].bias[k];
    }
  }
}

bool StackGrads::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const LayerGrads& l) {
    return l.weight.all_finite() && finite_span(l.bias);
  });
}

std::vector<std::span<double>> StackGrads::blocks() {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> StackGrads::blocks() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MlpStack

MlpStack::MlpStack(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.out()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias length " +
                       std::to_string(l.bias.size()) + " != weight rows " +
                       std::to_string(l.out()));
    }
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw ShapeError("layer " + std::to_string(i) + ": input " + std::to_string(l.in()) +
                       " != previous output " + std::to_string(layers_[i - 1].out()));
    }
  }
}

MlpStack MlpStack::glorot(std::span<const std::size_t> widths, Activation hidden,
                          Activation output, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ShapeError("glorot: need at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i];
    const std::size_t out = widths[i + 1];
    if (in == 0 || out == 0) throw ShapeError("glorot: zero width");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weight = Matrix(out, in);
    for (double& w : layer.weight.data()) w = dist(rng);
    layer.bias.assign(out, 0.0);
    layer.activation = (i + 2 == widths.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return MlpStack(std::move(layers));
}

std::size_t MlpStack::input_dim() const { return layers_.empty() ? 0 : layers_.front().in(); }
std::size_t MlpStack::output_dim() const { return layers_.empty() ? 0 : layers_.back().out(); }

std::size_t MlpStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

StackGrads MlpStack::zero_grads() const {
  StackGrads g;
  g.layers.reserve(layers_.size());
  for (const auto& l : layers_) g.layers.push_back({Matrix(l.out(), l.in()), Vector(l.out(), 0.0)});
  return g;
}

std::vector<std::span<double>> MlpStack::parameter_blocks() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
  }
  return out;
}

// ---------------------------------------------------------------------------
// forward / backward

ForwardResult forward(const MlpStack& stack, std::span<const double> x) {
  if (stack.layers().empty()) throw ShapeError("forward: empty stack");
  if (x.size() != stack.input_dim()) {
    throw ShapeError("forward: input length " + std::to_string(x.size()) + " != " +
                     std::to_string(stack.input_dim()));
  }
  ForwardResult res;
  res.cache.input.assign(x.begin(), x.end());
  res.cache.stack_version = stack.version();
  res.cache.pre.reserve(stack.layers().size());
  res.cache.post.reserve(stack.layers().size());

  std::span<const double> current = res.cache.input;
  for (const auto& layer : stack.layers()) {
    Vector pre(layer.bias);
    for (std::size_t o = 0; o < layer.out(); ++o) {
      const auto w = layer.weight.row(o);
      double acc = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * current[i];
      pre[o] += acc;
    }
    Vector post = pre;
    if (layer.activation == Activation::ReLU) {
      for (double& v : post) v = v > 0.0 ? v : 0.0;
    }
    res.cache.pre.push_back(std::move(pre));
    res.cache.post.push_back(std::move(post));
    current = res.cache.post.back();
  }
  res.output = res.cache.post.back();
  return res;
}

void backward_accumulate(const MlpStack& stack, const ForwardCache& cache,
                         std::span<const double> grad_out, StackGrads& acc,
                         Vector* grad_input) {
  const auto& layers = stack.layers();
  if (cache.pre.size() != layers.size() || cache.post.size() != layers.size() ||
      cache.input.size() != stack.input_dim()) {
    throw ShapeError("backward: cache does not match stack shape");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (cache.pre[i].size() != layers[i].out()) {
      throw ShapeError("backward: cache layer " + std::to_string(i) + " width mismatch");
    }
  }
  if (cache.stack_version != stack.version()) {
    throw std::logic_error("backward: cache predates the last parameter update");
  }
  if (grad_out.size() != stack.output_dim()) {
    throw ShapeError("backward: grad_out length " + std::to_string(grad_out.size()) + " != " +
                     std::to_string(stack.output_dim()));
  }
  if (acc.layers.size() != layers.size()) throw ShapeError("backward: accumulator layer count");

  Vector delta(grad_out.begin(), grad_out.end());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const auto& pre = cache.pre[li];
    if (layer.activation == Activation::ReLU) {
      for (std::size_t o = 0; o < delta.size(); ++o) {
        if (!(pre[o] > 0.0)) delta[o] = 0.0;
      }
    }
    const Vector& input = li == 0 ? cache.input : cache.post[li - 1];
    auto& g = acc.layers[li];
    for (std::size_t o = 0; o < layer.out(); ++o) {
      const double d = delta[o];
      g.bias[o] += d;
      if (d == 0.0) continue;
      auto gw = g.weight.row(o);
      for (std::size_t i = 0; i < input.size(); ++i) gw[i] += d * input[i];
    }
    if (li == 0 && grad_input == nullptr) break;
    Vector next(layer.in(), 0.0);
    for (std::size_t o = 0; o < layer.out(); ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const auto w = layer.weight.row(o);
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += w[i] * d;
    }
    delta = std::move(next);
  }
  if (grad_input != nullptr) *grad_input = std::move(delta);
}

BackwardResult backward(const MlpStack& stack, const ForwardCache& cache,
                        std::span<const double> grad_out) {
  BackwardResult res;
  res.params = stack.zero_grads();
  backward_accumulate(stack, cache, grad_out, res.params, &res.input);
  return res;
}

// ---------------------------------------------------------------------------
// SGD

void sgd_step(MlpStack& stack, const StackGrads& grads, double lr) {
  auto& layers = stack.layers();
  if (grads.layers.size() != layers.size()) throw ShapeError("sgd_step: layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto w = layers[i].weight.data();
    auto gw = grads.layers[i].weight.data();
    if (w.size() != gw.size() || layers[i].bias.size() != grads.layers[i].bias.size()) {
      throw ShapeError("sgd_step: layer " + std::to_string(i) + " shape");
    }
  }
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto w = layers[i].weight.data();
    auto gw = grads.layers[i].weight.data();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * gw[k];
    auto& b = layers[i].bias;
    const auto& gb = grads.layers[i].bias;
    for (std::size_t k = 0; k < b.size(); ++k) b[k] -= lr * gb[k];
  }
  stack.mark_modified();
}

double clip_global_norm(std::span<StackGrads* const> grads, double max_norm) {
  double sq = 0.0;
  for (const StackGrads* g : grads) {
    for (const auto block : std::as_const(*g).blocks()) {
      for (double v : block) sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    for (StackGrads* g : grads) g->scale(max_norm / norm);
  }
  return norm;
}

void SgdConfig::validate() const {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("sgd: initial_lr must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("sgd: decay_factor must lie in (0, 1]");
  }
  if (batch_size < 1) throw std::invalid_argument("sgd: batch_size must be >= 1");
  if (decay_every < 1) throw std::invalid_argument("sgd: decay_every must be >= 1");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("sgd: clip_norm must be >= 0");
}

double SgdConfig::lr_at(std::size_t epoch) const {
  const auto steps = static_cast<double>(epoch / decay_every);
  return initial_lr * std::pow(decay_factor, steps);
}

// ---------------------------------------------------------------------------
// gradient check

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(std::span<const std::span<double>> params,
                           std::span<const std::span<const double>> analytic,
                           const std::function<double()>& loss,
                           const GradCheckOptions& options) {
  if (params.size() != analytic.size()) throw ShapeError("grad_check: block count mismatch");
  GradCheckReport report;
  std::size_t flat = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != analytic[b].size()) {
      throw ShapeError("grad_check: block " + std::to_string(b) + " size mismatch");
    }
    for (std::size_t k = 0; k < params[b].size(); ++k, ++flat) {
      double& p = params[b][k];
      const double saved = p;
      p = saved + options.step;
      const double up = loss();
      p = saved - options.step;
      const double down = loss();
      p = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::domain_error("grad_check: non-finite loss at parameter " +
                                std::to_string(flat));
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[b][k];
      const double err = relative_error(a, numeric, options.floor);
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.checked;
      if (!(err < options.tolerance)) report.flagged.push_back({flat, a, numeric, err});
    }
  }
  return report;
}

GradCheckReport grad_check(MlpStack& stack, const StackLossFn& loss_fn,
                           const GradCheckOptions& options) {
  StackGrads grads = stack.zero_grads();
  const double base = loss_fn(stack, &grads);
  if (!std::isfinite(base)) throw std::domain_error("grad_check: non-finite loss");
  auto params = stack.parameter_blocks();
  const auto analytic = std::as_const(grads).blocks();
  return grad_check(params, analytic, [&] {
    stack.mark_modified();
    return loss_fn(stack, nullptr);
  }, options);
}

}  // namespace esad
