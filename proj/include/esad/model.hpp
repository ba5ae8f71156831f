#pragma once

// Encoder-decoder-encoder pipeline: z = enc1(x), x_hat = dec(z),
// z_hat = enc2(x_hat). The two encoders share a shape but never parameters.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>

#include "esad/ndcore.hpp"

namespace esad {

struct ModelShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t rep_dim = 0;

  /// rep = clamp(d, 2, 32); hidden = max(32, 2 * rep).
  static ModelShape defaults_for(std::size_t input_dim);

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Two-layer encoder d -> h -> r (ReLU hidden, identity output).
MlpStack make_encoder(const ModelShape& shape, std::mt19937_64& rng);
/// Mirror of the encoder: r -> h -> d.
MlpStack make_decoder(const ModelShape& shape, std::mt19937_64& rng);

struct EsadModel {
  ModelShape shape;
  MlpStack enc1;
  MlpStack dec;
  MlpStack enc2;

  friend bool operator==(const EsadModel&, const EsadModel&) = default;
};

/// Draw order is enc1, dec, enc2 from one generator seeded with `seed`.
EsadModel new_model(std::size_t d, std::size_t h, std::size_t r, std::uint64_t seed);

struct PipelineOutput {
  Vector z;
  Vector x_hat;
  Vector z_hat;
  ForwardCache enc1_cache;
  ForwardCache dec_cache;
  ForwardCache enc2_cache;
};

PipelineOutput forward_pipeline(const EsadModel& model, std::span<const double> x);

struct ModelGrads {
  StackGrads enc1;
  StackGrads dec;
  StackGrads enc2;

  void set_zero();
  void scale(double factor);
  bool all_finite() const;
  std::vector<std::span<const double>> blocks() const;
};

ModelGrads zero_grads(const EsadModel& model);

/// Accumulates parameter gradients given upstream gradients on z, x_hat and
/// z_hat. The z_hat gradient flows enc2 -> dec -> enc1, the x_hat gradient
/// flows dec -> enc1, and the z gradient reaches enc1 directly.
void backward_pipeline(const EsadModel& model, const PipelineOutput& out,
                       std::span<const double> grad_z, std::span<const double> grad_x_hat,
                       std::span<const double> grad_z_hat, ModelGrads& acc);

ModelGrads backward_pipeline(const EsadModel& model, const PipelineOutput& out,
                             std::span<const double> grad_z, std::span<const double> grad_x_hat,
                             std::span<const double> grad_z_hat);

void sgd_step(EsadModel& model, const ModelGrads& grads, double lr);

/// Parameter views in the same order as ModelGrads::blocks().
std::vector<std::span<double>> parameter_blocks(EsadModel& model);

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all integers and floats little-endian):
//   8 bytes   magic "ESADCKPT"
//   u32       format version (1)
//   u64 x 3   input_dim, hidden_dim, rep_dim
//   u32       stack count (3: enc1, dec, enc2)
//   per stack: u32 layer count; per layer: u32 out, u32 in, u8 activation,
//              out*in f64 weights (row-major), out f64 biases

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const EsadModel& model);
EsadModel read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const EsadModel& model);
EsadModel load_checkpoint(const std::filesystem::path& path);

/// Stack-level encoding used by the checkpoint (also handy for baselines).
void write_stack(std::ostream& os, const MlpStack& stack);
MlpStack read_stack(std::istream& is);

}  // namespace esad
