#include "esad/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace esad {

ModelShape ModelShape::defaults_for(std::size_t input_dim) {
  ModelShape s;
  s.input_dim = input_dim;
  s.rep_dim = std::clamp<std::size_t>(input_dim, 2, 32);
  s.hidden_dim = std::max<std::size_t>(32, 2 * s.rep_dim);
  return s;
}

MlpStack make_encoder(const ModelShape& shape, std::mt19937_64& rng) {
  const std::array<std::size_t, 3> widths{shape.input_dim, shape.hidden_dim, shape.rep_dim};
  return MlpStack::glorot(widths, Activation::ReLU, Activation::Identity, rng);
}

MlpStack make_decoder(const ModelShape& shape, std::mt19937_64& rng) {
  const std::array<std::size_t, 3> widths{shape.rep_dim, shape.hidden_dim, shape.input_dim};
  return MlpStack::glorot(widths, Activation::ReLU, Activation::Identity, rng);
}

EsadModel new_model(std::size_t d, std::size_t h, std::size_t r, std::uint64_t seed) {
  if (d < 1 || h < 1 || r < 1) throw ShapeError("new_model: dimensions must be >= 1");
  EsadModel m;
  m.shape = {d, h, r};
  std::mt19937_64 rng(seed);
  m.enc1 = make_encoder(m.shape, rng);
  m.dec = make_decoder(m.shape, rng);
  m.enc2 = make_encoder(m.shape, rng);
  return m;
}

PipelineOutput forward_pipeline(const EsadModel& model, std::span<const double> x) {
  if (x.size() != model.shape.input_dim) {
    throw ShapeError("forward_pipeline: input length " + std::to_string(x.size()) + " != " +
                     std::to_string(model.shape.input_dim));
  }
  PipelineOutput out;
  auto e1 = forward(model.enc1, x);
  auto d = forward(model.dec, e1.output);
  auto e2 = forward(model.enc2, d.output);
  out.z = std::move(e1.output);
  out.x_hat = std::move(d.output);
  out.z_hat = std::move(e2.output);
  out.enc1_cache = std::move(e1.cache);
  out.dec_cache = std::move(d.cache);
  out.enc2_cache = std::move(e2.cache);
  return out;
}

void ModelGrads::set_zero() {
  enc1.set_zero();
  dec.set_zero();
  enc2.set_zero();
}

void ModelGrads::scale(double factor) {
  enc1.scale(factor);
  dec.scale(factor);
  enc2.scale(factor);
}

bool ModelGrads::all_finite() const {
  return enc1.all_finite() && dec.all_finite() && enc2.all_finite();
}

std::vector<std::span<const double>> ModelGrads::blocks() const {
  auto out = enc1.blocks();
  for (auto b : dec.blocks()) out.push_back(b);
  for (auto b : enc2.blocks()) out.push_back(b);
  return out;
}

ModelGrads zero_grads(const EsadModel& model) {
  return {model.enc1.zero_grads(), model.dec.zero_grads(), model.enc2.zero_grads()};
}

void backward_pipeline(const EsadModel& model, const PipelineOutput& out,
                       std::span<const double> grad_z, std::span<const double> grad_x_hat,
                       std::span<const double> grad_z_hat, ModelGrads& acc) {
  if (grad_z.size() != out.z.size() || grad_x_hat.size() != out.x_hat.size() ||
      grad_z_hat.size() != out.z_hat.size()) {
    throw ShapeError("backward_pipeline: upstream gradient length mismatch");
  }
  Vector through_enc2;
  backward_accumulate(model.enc2, out.enc2_cache, grad_z_hat, acc.enc2, &through_enc2);
  for (std::size_t i = 0; i < through_enc2.size(); ++i) through_enc2[i] += grad_x_hat[i];

  Vector through_dec;
  backward_accumulate(model.dec, out.dec_cache, through_enc2, acc.dec, &through_dec);
  for (std::size_t i = 0; i < through_dec.size(); ++i) through_dec[i] += grad_z[i];

  backward_accumulate(model.enc1, out.enc1_cache, through_dec, acc.enc1, nullptr);
}

ModelGrads backward_pipeline(const EsadModel& model, const PipelineOutput& out,
                             std::span<const double> grad_z, std::span<const double> grad_x_hat,
                             std::span<const double> grad_z_hat) {
  ModelGrads g = zero_grads(model);
  backward_pipeline(model, out, grad_z, grad_x_hat, grad_z_hat, g);
  return g;
}

void sgd_step(EsadModel& model, const ModelGrads& grads, double lr) {
  sgd_step(model.enc1, grads.enc1, lr);
  sgd_step(model.dec, grads.dec, lr);
  sgd_step(model.enc2, grads.enc2, lr);
}

std::vector<std::span<double>> parameter_blocks(EsadModel& model) {
  auto out = model.enc1.parameter_blocks();
  for (auto b : model.dec.parameter_blocks()) out.push_back(b);
  for (auto b : model.enc2.parameter_blocks()) out.push_back(b);
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint encoding

namespace {

constexpr std::array<char, 8> kMagic{'E', 'S', 'A', 'D', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& is) {
  static_assert(std::is_unsigned_v<T>);
  std::array<unsigned char, sizeof(T)> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw CheckpointError("checkpoint: truncated stream");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

// Guards allocation on corrupt headers.
constexpr std::uint64_t kMaxDim = 1u << 24;

}  // namespace

void write_stack(std::ostream& os, const MlpStack& stack) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(stack.layers().size()));
  for (const auto& l : stack.layers()) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.out()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.in()));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(l.activation));
    for (double w : l.weight.data()) put_f64(os, w);
    for (double b : l.bias) put_f64(os, b);
  }
}

MlpStack read_stack(std::istream& is) {
  const auto n_layers = get_le<std::uint32_t>(is);
  if (n_layers > 1024) throw CheckpointError("checkpoint: implausible layer count");
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto out = get_le<std::uint32_t>(is);
    const auto in = get_le<std::uint32_t>(is);
    const auto act = get_le<std::uint8_t>(is);
    if (out == 0 || in == 0 || out > kMaxDim || in > kMaxDim) {
      throw CheckpointError("checkpoint: bad layer shape");
    }
    if (act > static_cast<std::uint8_t>(Activation::Identity)) {
      throw CheckpointError("checkpoint: unknown activation " + std::to_string(act));
    }
    DenseLayer layer;
    layer.weight = Matrix(out, in);
    for (double& w : layer.weight.data()) w = get_f64(is);
    layer.bias.resize(out);
    for (double& b : layer.bias) b = get_f64(is);
    layer.activation = static_cast<Activation>(act);
    layers.push_back(std::move(layer));
  }
  try {
    return MlpStack(std::move(layers));
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(std::ostream& os, const EsadModel& model) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint64_t>(os, model.shape.input_dim);
  put_le<std::uint64_t>(os, model.shape.hidden_dim);
  put_le<std::uint64_t>(os, model.shape.rep_dim);
  put_le<std::uint32_t>(os, 3);
  write_stack(os, model.enc1);
  write_stack(os, model.dec);
  write_stack(os, model.enc2);
  if (!os) throw CheckpointError("checkpoint: write failed");
}

EsadModel read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("checkpoint: bad magic");
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  EsadModel m;
  m.shape.input_dim = get_le<std::uint64_t>(is);
  m.shape.hidden_dim = get_le<std::uint64_t>(is);
  m.shape.rep_dim = get_le<std::uint64_t>(is);
  if (get_le<std::uint32_t>(is) != 3) throw CheckpointError("checkpoint: expected 3 stacks");
  m.enc1 = read_stack(is);
  m.dec = read_stack(is);
  m.enc2 = read_stack(is);
  const auto& s = m.shape;
  if (m.enc1.input_dim() != s.input_dim || m.enc1.output_dim() != s.rep_dim ||
      m.dec.input_dim() != s.rep_dim || m.dec.output_dim() != s.input_dim ||
      m.enc2.input_dim() != s.input_dim || m.enc2.output_dim() != s.rep_dim) {
    throw CheckpointError("checkpoint: stack shapes disagree with header");
  }
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const EsadModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("checkpoint: cannot open " + path.string());
  write_checkpoint(os, model);
}

EsadModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace esad
