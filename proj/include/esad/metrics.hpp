#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "esad/labels.hpp"
#include "esad/model.hpp"

namespace esad {

/// |x_hat - x|^2 + lambda1 * |z_hat|. Higher means more anomalous.
double anomaly_score(std::span<const double> x, std::span<const double> x_hat,
                     std::span<const double> z_hat, double lambda1);

struct ScoredSample {
  double score = 0.0;
  GroundTruth truth = GroundTruth::Normal;
};

struct AucResult {
  double auc = 0.5;
  std::size_t n_normal = 0;
  std::size_t n_anomalous = 0;
};

/// Raised when AUC is requested on single-class input.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mann-Whitney AUC: P(anomalous score > normal score), ties credited 0.5.
/// O(N log N). The pair count is accumulated in half-units, so the result is
/// exact for any input small enough for the count to fit a double mantissa.
AucResult auc(std::span<const ScoredSample> samples);

/// Entropy in nats of N(mu, sigma^2 I_d): d/2 * (1 + log(2 pi sigma^2)).
/// Throws std::domain_error for sigma <= 0 or d == 0.
double gaussian_entropy(std::size_t d, double sigma);

/// Scores every row of `x` through the pipeline. Output order follows rows.
std::vector<ScoredSample> score_dataset(const EsadModel& model, const Matrix& x,
                                        std::span<const GroundTruth> truth, double lambda1);

/// Writes `index,score,label` rows (label 1 = anomalous) with a header line.
void write_scores_csv(std::ostream& os, std::span<const ScoredSample> samples);

}  // namespace esad
