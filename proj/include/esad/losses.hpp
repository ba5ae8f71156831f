#pragma once

// Training objectives.
//
// ESAD (end to end, through the encoder-decoder-encoder pipeline):
//   rec  = 1/n sum_u |x_hat - x|^2        + 1/m sum_l |x_hat - Phi(x)|^2
//   norm = 1/n sum_u |z_hat|              + 1/m sum_l |z_hat|^y
//   ass  = 1/(n+m) sum |z_hat - z|^2
//   total = rec + lambda1 * norm + lambda2 * ass
// with Phi(x) = x for labeled normals (y = +1) and phi(x) for labeled
// anomalies (y = -1). n counts unlabeled and m labeled samples of the batch;
// a group that is absent contributes 0. The inverse branch uses
// 1 / (|z_hat| + eps), which keeps it finite at the origin.
//
// Deep SAD baseline (two stages, encoder + decoder):
//   pretrain: mean |x_hat - x|^2 over all samples
//   finetune: 1/n sum_u |z - c| + eta/m sum_l |z - c|^y

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "esad/labels.hpp"
#include "esad/ndcore.hpp"

namespace esad {

inline constexpr double kDefaultEpsilon = 1e-6;

enum class PhiKind : std::uint8_t { Permutation, GaussianNoise };

/// Target transformation for labeled anomalies.
struct PhiConfig {
  PhiKind kind = PhiKind::Permutation;
  double noise_sigma = 1.0;
  /// Output coordinate i takes x[permutation[i]]; a derangement.
  std::vector<std::size_t> permutation;
  std::uint64_t seed = 0;

  /// Seeded uniform random derangement of 0..d-1. Throws ConfigError if d < 2.
  static PhiConfig random_permutation(std::size_t d, std::uint64_t seed);
  static PhiConfig gaussian_noise(double sigma, std::uint64_t seed);

  void validate(std::size_t d) const;
};

/// phi(x). GaussianNoise draws its noise from (seed, sample_key) so that the
/// same sample always receives the same target.
Vector phi_apply(const PhiConfig& cfg, std::span<const double> x, std::uint64_t sample_key = 0);

/// Phi(x): identity for unlabeled and labeled-normal samples, phi otherwise.
Vector reconstruction_target(const PhiConfig& cfg, SemiLabel label, std::span<const double> x,
                             std::uint64_t sample_key = 0);

struct LossBreakdown {
  double rec = 0.0;
  double norm = 0.0;
  double ass = 0.0;
  double total = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  bool all_finite() const;
  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

double loss_total(double rec, double norm, double ass, double lambda1 = 1.0, double lambda2 = 1.0);

struct RecSample {
  std::span<const double> x;
  std::span<const double> x_hat;
  SemiLabel label = SemiLabel::Unlabeled;
  std::uint64_t key = 0;  // forwarded to phi_apply
};

struct LatentSample {
  std::span<const double> z;
  SemiLabel label = SemiLabel::Unlabeled;
};

struct LatentPair {
  std::span<const double> z;
  std::span<const double> z_hat;
};

double loss_rec_semi(std::span<const RecSample> batch, const PhiConfig& cfg);
double loss_norm_semi(std::span<const LatentSample> batch, double epsilon = kDefaultEpsilon);
/// Throws ShapeError when z and z_hat lengths differ.
double loss_ass(std::span<const LatentPair> pairs);

struct ReconPair {
  std::span<const double> x;
  std::span<const double> x_hat;
};

double loss_sad_rec(std::span<const ReconPair> batch);

struct SvddState {
  Vector center;
  double eta = 1.0;

  bool is_set() const { return !center.empty(); }
};

/// Mean of the given encoder outputs.
Vector svdd_center(std::span<const Vector> encodings);

/// Throws std::logic_error if the center has not been set.
double loss_svdd(std::span<const LatentSample> batch, const SvddState& state,
                 double epsilon = kDefaultEpsilon);

// ---------------------------------------------------------------------------
// Batch objectives with gradients.

struct ObjectiveConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double epsilon = kDefaultEpsilon;
  PhiConfig phi;
};

/// One sample as seen by the ESAD objective after forward_pipeline.
struct PipelineSample {
  std::span<const double> x;
  std::span<const double> z;
  std::span<const double> x_hat;
  std::span<const double> z_hat;
  SemiLabel label = SemiLabel::Unlabeled;
  std::uint64_t key = 0;
};

struct PipelineSampleGrads {
  Vector z;
  Vector x_hat;
  Vector z_hat;
};

/// Evaluates the three losses and the weighted total on a batch. When `grads`
/// is non-null it is resized to the batch and receives d total / d{z, x_hat,
/// z_hat} for every sample.
LossBreakdown esad_objective(std::span<const PipelineSample> batch, const ObjectiveConfig& cfg,
                             std::vector<PipelineSampleGrads>* grads);

/// Pretraining loss with d/dx_hat per sample.
double sad_rec_objective(std::span<const ReconPair> batch, std::vector<Vector>* grad_x_hat);

/// Fine-tuning loss with d/dz per sample.
double svdd_objective(std::span<const LatentSample> batch, const SvddState& state, double epsilon,
                      std::vector<Vector>* grad_z);

}  // namespace esad
