#pragma once

// Dense numerics for small multilayer perceptrons: a row-major matrix, dense
// layers with explicit forward/backward passes, plain SGD with a step-decay
// learning-rate schedule, and a central finite-difference gradient checker.
//
// Everything is float64 and single-threaded. Layers are evaluated one sample
// at a time; batching is the caller's job (average the accumulated grads).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace esad {

using Vector = std::vector<double>;

/// Raised on any dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a configuration value violates its documented range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

enum class Activation : std::uint8_t { ReLU = 0, Identity = 1 };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Identity;

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LayerGrads {
  Matrix weight;
  Vector bias;
};

/// Gradients for every parameter of an MlpStack, laid out like the stack.
struct StackGrads {
  std::vector<LayerGrads> layers;

  void set_zero();
  void scale(double factor);
  void add(const StackGrads& other);
  bool all_finite() const;
  /// Views over each weight and bias block, in layer order (weight then bias).
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
};

/// Activations recorded during forward(); consumed by backward().
struct ForwardCache {
  Vector input;
  std::vector<Vector> pre;   // pre-activation per layer
  std::vector<Vector> post;  // post-activation per layer
  std::uint64_t stack_version = 0;
};

class MlpStack {
 public:
  MlpStack() = default;
  /// Throws ShapeError unless each layer's output feeds the next one's input.
  explicit MlpStack(std::vector<DenseLayer> layers);

  /// Uniform(-sqrt(6/(in+out)), +sqrt(6/(in+out))) weights, zero biases.
  /// `widths` = {in, hidden..., out}; hidden layers use `hidden`, the last
  /// layer uses `output`.
  static MlpStack glorot(std::span<const std::size_t> widths, Activation hidden,
                         Activation output, std::mt19937_64& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  /// Direct parameter access. Callers that mutate weights through this should
  /// call mark_modified() so outstanding caches are rejected by backward().
  std::vector<DenseLayer>& layers() { return layers_; }

  std::uint64_t version() const { return version_; }
  void mark_modified() { ++version_; }

  StackGrads zero_grads() const;
  std::vector<std::span<double>> parameter_blocks();

  /// Parameters only; the version counter is bookkeeping.
  friend bool operator==(const MlpStack& a, const MlpStack& b) { return a.layers_ == b.layers_; }

 private:
  std::vector<DenseLayer> layers_;
  std::uint64_t version_ = 0;
};

struct ForwardResult {
  Vector output;
  ForwardCache cache;
};

struct BackwardResult {
  StackGrads params;
  Vector input;
};

ForwardResult forward(const MlpStack& stack, std::span<const double> x);

/// Backpropagates `grad_out` (dLoss/dOutput) through the cached pass.
/// ReLU'(0) is taken as 0. Throws ShapeError for a mismatched cache and
/// std::logic_error for a cache recorded before the stack was modified.
BackwardResult backward(const MlpStack& stack, const ForwardCache& cache,
                        std::span<const double> grad_out);

/// Accumulating variant: adds parameter grads into `acc` and, when
/// `grad_input` is non-null, writes dLoss/dInput there.
void backward_accumulate(const MlpStack& stack, const ForwardCache& cache,
                         std::span<const double> grad_out, StackGrads& acc,
                         Vector* grad_input);

/// param -= lr * grad for every parameter.
void sgd_step(MlpStack& stack, const StackGrads& grads, double lr);

/// Scales every block in `grads` by min(1, max_norm / ||grads||) where the
/// norm runs over all blocks jointly. Returns the norm before scaling.
/// max_norm <= 0 leaves the gradients untouched.
double clip_global_norm(std::span<StackGrads* const> grads, double max_norm);

struct SgdConfig {
  double initial_lr = 0.1;
  std::size_t decay_every = 50;
  double decay_factor = 0.5;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  /// Rescale each step's gradient to at most this global L2 norm; 0 disables.
  double clip_norm = 5.0;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
  /// Step decay: initial_lr * decay_factor^(epoch / decay_every).
  double lr_at(std::size_t epoch) const;
};

struct GradCheckEntry {
  std::size_t index = 0;  // flat parameter index
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> flagged;

  bool passed() const { return flagged.empty(); }
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor). Keeps
  /// near-zero gradients from reporting roundoff as relative error.
  double floor = 1e-6;
};

/// Central-difference check over arbitrary parameter blocks. `loss` must
/// re-evaluate the scalar loss from the current contents of `params`.
/// Throws std::domain_error if any evaluated loss is non-finite.
GradCheckReport grad_check(std::span<const std::span<double>> params,
                           std::span<const std::span<const double>> analytic,
                           const std::function<double()>& loss,
                           const GradCheckOptions& options = {});

/// Loss of a stack; when `grads` is non-null the analytic gradient is added
/// into it (it arrives zeroed).
using StackLossFn = std::function<double(const MlpStack&, StackGrads* grads)>;

GradCheckReport grad_check(MlpStack& stack, const StackLossFn& loss_fn,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace esad
