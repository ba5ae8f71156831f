#include "esad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace esad {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("length mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// |v|^y with y = +1, or (|v| + eps)^-1 with y = -1. When `grad` is non-null,
// weight * d/dv is added to it. The gradient of |v| at v = 0 is taken as 0.
double powered_norm(std::span<const double> v, int sign, double epsilon, double weight,
                    Vector* grad) {
  const double r = l2(v);
  if (sign > 0) {
    if (grad != nullptr && r > 0.0) {
      for (std::size_t i = 0; i < v.size(); ++i) (*grad)[i] += weight * v[i] / r;
    }
    return r;
  }
  const double s = r + epsilon;
  if (grad != nullptr && r > 0.0) {
    const double coeff = -weight / (s * s * r);
    for (std::size_t i = 0; i < v.size(); ++i) (*grad)[i] += coeff * v[i];
  }
  return 1.0 / s;
}

struct GroupCounts {
  std::size_t unlabeled = 0;
  std::size_t labeled = 0;

  double unlabeled_weight() const { return unlabeled ? 1.0 / static_cast<double>(unlabeled) : 0.0; }
  double labeled_weight() const { return labeled ? 1.0 / static_cast<double>(labeled) : 0.0; }
  double weight(SemiLabel l) const { return is_labeled(l) ? labeled_weight() : unlabeled_weight(); }
};

template <typename Range>
GroupCounts count_groups(const Range& batch) {
  GroupCounts c;
  for (const auto& s : batch) (is_labeled(s.label) ? c.labeled : c.unlabeled)++;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// phi

PhiConfig PhiConfig::random_permutation(std::size_t d, std::uint64_t seed) {
  if (d < 2) throw ConfigError("phi: a permutation target needs at least 2 features");
  PhiConfig cfg;
  cfg.kind = PhiKind::Permutation;
  cfg.seed = seed;
  cfg.permutation.resize(d);
  std::mt19937_64 rng(seed);
  // Rejection sampling yields a uniform derangement; ~e draws on average.
  for (;;) {
    std::iota(cfg.permutation.begin(), cfg.permutation.end(), std::size_t{0});
    std::shuffle(cfg.permutation.begin(), cfg.permutation.end(), rng);
    bool fixed_point = false;
    for (std::size_t i = 0; i < d; ++i) fixed_point |= cfg.permutation[i] == i;
    if (!fixed_point) break;
  }
  return cfg;
}

PhiConfig PhiConfig::gaussian_noise(double sigma, std::uint64_t seed) {
  PhiConfig cfg;
  cfg.kind = PhiKind::GaussianNoise;
  cfg.noise_sigma = sigma;
  cfg.seed = seed;
  if (!(sigma > 0.0)) throw ConfigError("phi: noise sigma must be > 0");
  return cfg;
}

void PhiConfig::validate(std::size_t d) const {
  if (kind == PhiKind::GaussianNoise) {
    if (!(noise_sigma > 0.0)) throw ConfigError("phi: noise sigma must be > 0");
    return;
  }
  if (d < 2) throw ConfigError("phi: a permutation target needs at least 2 features");
  if (permutation.size() != d) {
    throw ConfigError("phi: permutation has " + std::to_string(permutation.size()) +
                      " entries for " + std::to_string(d) + " features");
  }
  std::vector<bool> seen(d, false);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t p = permutation[i];
    if (p >= d || seen[p]) throw ConfigError("phi: not a permutation");
    if (p == i) throw ConfigError("phi: permutation has a fixed point at " + std::to_string(i));
    seen[p] = true;
  }
}

Vector phi_apply(const PhiConfig& cfg, std::span<const double> x, std::uint64_t sample_key) {
  cfg.validate(x.size());
  Vector out(x.size());
  if (cfg.kind == PhiKind::Permutation) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[cfg.permutation[i]];
    return out;
  }
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(sample_key)));
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + noise(rng);
  return out;
}

Vector reconstruction_target(const PhiConfig& cfg, SemiLabel label, std::span<const double> x,
                             std::uint64_t sample_key) {
  if (label == SemiLabel::LabeledAnomalous) return phi_apply(cfg, x, sample_key);
  return Vector(x.begin(), x.end());
}

// ---------------------------------------------------------------------------
// value-only losses

bool LossBreakdown::all_finite() const {
  return std::isfinite(rec) && std::isfinite(norm) && std::isfinite(ass) && std::isfinite(total);
}

double loss_total(double rec, double norm, double ass, double lambda1, double lambda2) {
  return rec + lambda1 * norm + lambda2 * ass;
}

double loss_rec_semi(std::span<const RecSample> batch, const PhiConfig& cfg) {
  const auto counts = count_groups(batch);
  double loss = 0.0;
  for (const auto& s : batch) {
    const Vector target = reconstruction_target(cfg, s.label, s.x, s.key);
    loss += counts.weight(s.label) * squared_distance(s.x_hat, target);
  }
  return loss;
}

double loss_norm_semi(std::span<const LatentSample> batch, double epsilon) {
  const auto counts = count_groups(batch);
  double loss = 0.0;
  for (const auto& s : batch) {
    const int sign = is_labeled(s.label) ? label_sign(s.label) : 1;
    loss += counts.weight(s.label) * powered_norm(s.z, sign, epsilon, 0.0, nullptr);
  }
  return loss;
}

double loss_ass(std::span<const LatentPair> pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) sum += squared_distance(p.z_hat, p.z);
  return sum / static_cast<double>(pairs.size());
}

double loss_sad_rec(std::span<const ReconPair> batch) { return sad_rec_objective(batch, nullptr); }

Vector svdd_center(std::span<const Vector> encodings) {
  if (encodings.empty()) throw std::invalid_argument("svdd_center: no encodings");
  Vector c(encodings.front().size(), 0.0);
  for (const auto& z : encodings) {
    if (z.size() != c.size()) throw ShapeError("svdd_center: encoding length mismatch");
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += z[i];
  }
  for (double& v : c) v /= static_cast<double>(encodings.size());
  return c;
}

double loss_svdd(std::span<const LatentSample> batch, const SvddState& state, double epsilon) {
  return svdd_objective(batch, state, epsilon, nullptr);
}

// ---------------------------------------------------------------------------
// objectives with gradients

LossBreakdown esad_objective(std::span<const PipelineSample> batch, const ObjectiveConfig& cfg,
                             std::vector<PipelineSampleGrads>* grads) {
  LossBreakdown out;
  out.lambda1 = cfg.lambda1;
  out.lambda2 = cfg.lambda2;
  if (batch.empty()) return out;

  const auto counts = count_groups(batch);
  const double ass_weight = 1.0 / static_cast<double>(batch.size());
  if (grads != nullptr) grads->assign(batch.size(), {});

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    if (s.z.size() != s.z_hat.size() || s.x.size() != s.x_hat.size()) {
      throw ShapeError("esad_objective: sample " + std::to_string(i) + " shape mismatch");
    }
    const double w = counts.weight(s.label);
    const int sign = is_labeled(s.label) ? label_sign(s.label) : 1;
    const Vector target = reconstruction_target(cfg.phi, s.label, s.x, s.key);

    const double rec = squared_distance(s.x_hat, target);
    const double ass = squared_distance(s.z_hat, s.z);
    out.rec += w * rec;
    out.ass += ass_weight * ass;

    Vector* gz_hat = nullptr;
    if (grads != nullptr) {
      auto& g = (*grads)[i];
      g.x_hat.resize(s.x_hat.size());
      for (std::size_t k = 0; k < s.x_hat.size(); ++k) g.x_hat[k] = 2.0 * w * (s.x_hat[k] - target[k]);
      g.z_hat.resize(s.z_hat.size());
      g.z.resize(s.z.size());
      const double a = 2.0 * cfg.lambda2 * ass_weight;
      for (std::size_t k = 0; k < s.z.size(); ++k) {
        const double diff = s.z_hat[k] - s.z[k];
        g.z_hat[k] = a * diff;
        g.z[k] = -a * diff;
      }
      gz_hat = &g.z_hat;
    }
    out.norm += w * powered_norm(s.z_hat, sign, cfg.epsilon, cfg.lambda1 * w, gz_hat);
  }
  out.total = loss_total(out.rec, out.norm, out.ass, cfg.lambda1, cfg.lambda2);
  return out;
}

double sad_rec_objective(std::span<const ReconPair> batch, std::vector<Vector>* grad_x_hat) {
  if (batch.empty()) return 0.0;
  const double w = 1.0 / static_cast<double>(batch.size());
  if (grad_x_hat != nullptr) grad_x_hat->assign(batch.size(), {});
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    loss += w * squared_distance(s.x_hat, s.x);
    if (grad_x_hat != nullptr) {
      auto& g = (*grad_x_hat)[i];
      g.resize(s.x.size());
      for (std::size_t k = 0; k < s.x.size(); ++k) g[k] = 2.0 * w * (s.x_hat[k] - s.x[k]);
    }
  }
  return loss;
}

double svdd_objective(std::span<const LatentSample> batch, const SvddState& state, double epsilon,
                      std::vector<Vector>* grad_z) {
  if (!state.is_set()) throw std::logic_error("svdd: hypersphere center has not been set");
  const auto counts = count_groups(batch);
  if (grad_z != nullptr) grad_z->assign(batch.size(), {});
  double loss = 0.0;
  Vector diff(state.center.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    if (s.z.size() != state.center.size()) throw ShapeError("svdd: encoding length mismatch");
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = s.z[k] - state.center[k];
    const bool labeled = is_labeled(s.label);
    const double w = labeled ? state.eta * counts.labeled_weight() : counts.unlabeled_weight();
    const int sign = labeled ? label_sign(s.label) : 1;
    Vector* g = nullptr;
    if (grad_z != nullptr) {
      (*grad_z)[i].assign(diff.size(), 0.0);
      g = &(*grad_z)[i];
    }
    loss += w * powered_norm(diff, sign, epsilon, w, g);
  }
  return loss;
}

}  // namespace esad
