#include "esad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

namespace esad {

double anomaly_score(std::span<const double> x, std::span<const double> x_hat,
                     std::span<const double> z_hat, double lambda1) {
  if (x.size() != x_hat.size()) throw ShapeError("anomaly_score: x and x_hat lengths differ");
  double rec = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat[i] - x[i];
    rec += d * d;
  }
  double norm = 0.0;
  for (double v : z_hat) norm += v * v;
  return rec + lambda1 * std::sqrt(norm);
}

AucResult auc(std::span<const ScoredSample> samples) {
  AucResult res;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw std::domain_error("auc: non-finite score");
    (s.truth == GroundTruth::Anomalous ? res.n_anomalous : res.n_normal)++;
  }
  if (res.n_normal == 0 || res.n_anomalous == 0) {
    throw UndefinedMetricError("auc: need at least one normal and one anomalous sample");
  }

  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });

  // Walk groups of equal score. Each anomaly beats every normal strictly
  // below it and ties with every normal inside its group.
  std::uint64_t half_units = 0;  // twice the Mann-Whitney U statistic
  std::uint64_t normals_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::uint64_t group_normal = 0;
    std::uint64_t group_anomalous = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].truth == GroundTruth::Anomalous ? group_anomalous : group_normal)++;
      ++j;
    }
    half_units += group_anomalous * (2 * normals_below + group_normal);
    normals_below += group_normal;
    i = j;
  }
  const double pairs = static_cast<double>(res.n_normal) * static_cast<double>(res.n_anomalous);
  res.auc = static_cast<double>(half_units) / 2.0 / pairs;
  return res;
}

double gaussian_entropy(std::size_t d, double sigma) {
  if (d == 0) throw std::domain_error("gaussian_entropy: dimension must be >= 1");
  if (!(sigma > 0.0)) throw std::domain_error("gaussian_entropy: sigma must be > 0");
  return 0.5 * static_cast<double>(d) * (1.0 + std::log(2.0 * std::numbers::pi * sigma * sigma));
}

std::vector<ScoredSample> score_dataset(const EsadModel& model, const Matrix& x,
                                        std::span<const GroundTruth> truth, double lambda1) {
  if (x.cols() != model.shape.input_dim) {
    throw ShapeError("score_dataset: data has " + std::to_string(x.cols()) +
                     " features, model expects " + std::to_string(model.shape.input_dim));
  }
  if (truth.size() != x.rows()) throw ShapeError("score_dataset: label count != row count");
  std::vector<ScoredSample> out;
  out.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    const auto p = forward_pipeline(model, row);
    out.push_back({anomaly_score(row, p.x_hat, p.z_hat, lambda1), truth[r]});
  }
  return out;
}

void write_scores_csv(std::ostream& os, std::span<const ScoredSample> samples) {
  const auto old_precision = os.precision(17);
  os << "index,score,label\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    os << i << ',' << samples[i].score << ','
       << (samples[i].truth == GroundTruth::Anomalous ? 1 : 0) << '\n';
  }
  os.precision(old_precision);
}

}  // namespace esad
