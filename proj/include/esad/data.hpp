#pragma once

// Tabular datasets: CSV ingestion, the stratified 60:40 split, semi-supervised
// scenario construction (labeled ratio gamma_l and pollution gamma_p),
// standardization with training statistics, and a Gaussian toy generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esad/labels.hpp"
#include "esad/ndcore.hpp"

namespace esad {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed CSV structure (empty file, ragged row, bad label).
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A feature cell that is not a finite number.
class FeatureTypeError : public ParseError {
 public:
  using ParseError::ParseError;
};

struct RawDataset {
  std::string name;
  Matrix x;  // N x d
  std::vector<GroundTruth> y;

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
  std::size_t anomaly_count() const;
};

/// Each row: d numeric features followed by a 0/1 label (1 = anomalous).
/// A first line whose cells are not all numeric is treated as a header.
RawDataset load_csv(const std::filesystem::path& path, std::string name = {});
RawDataset parse_csv(std::string_view text, std::string name = {});

struct BenchmarkStats {
  std::string_view name;
  std::size_t samples;
  std::size_t dims;
  std::size_t outliers;
};

/// Reference sizes of the six classic tabular outlier benchmarks.
inline constexpr std::array<BenchmarkStats, 6> kBenchmarkStats{{
    {"arrhythmia", 452, 274, 66},
    {"cardio", 1831, 21, 176},
    {"satellite", 6435, 36, 2036},
    {"satimage-2", 5803, 36, 71},
    {"shuttle", 49097, 9, 3511},
    {"thyroid", 3772, 6, 93},
}};

std::optional<BenchmarkStats> benchmark_stats(std::string_view name);

/// `name = path` lines; '#' starts a comment. Relative paths resolve against
/// the manifest's directory.
std::map<std::string, std::filesystem::path> load_manifest(const std::filesystem::path& path);

struct Split {
  RawDataset train;
  RawDataset test;
};

/// Stratified shuffle split: |train| = round(0.6 N), anomalies split
/// round(0.6 A) / rest. Throws DataError if a class has fewer than 2 rows.
Split split_60_40(const RawDataset& raw, std::uint64_t seed);

struct ScenarioConfig {
  double gamma_l = 0.0;  // m / (n + m)
  double gamma_p = 0.0;  // anomaly fraction of the unlabeled pool
  std::uint64_t seed = 0;

  void validate() const;
};

struct Standardization {
  Vector mean;                        // per kept feature
  Vector stddev;                      // per kept feature
  std::vector<std::size_t> kept;      // original feature indices
  std::vector<std::size_t> dropped;   // constant on the training rows
};

struct SemiDataset {
  Matrix x_train;
  std::vector<SemiLabel> tags;
  std::vector<GroundTruth> train_truth;  // hidden labels, for auditing only
  Matrix x_test;
  std::vector<GroundTruth> y_test;
  std::optional<Standardization> transform;

  std::size_t unlabeled_count() const;
  std::size_t labeled_count() const;
};

/// Builds the training pool from the split's training side:
///  - every training normal goes to the unlabeled pool;
///  - k = round(gamma_p * N / (1 - gamma_p)) anomalies are hidden there;
///  - m = round(gamma_l * n / (1 - gamma_l)) anomalies become labeled
///    (m >= 1 whenever gamma_l > 0);
///  - remaining training anomalies are discarded.
/// The test side is copied untouched. Throws ConfigError when the split does
/// not hold k + m anomalies.
SemiDataset make_scenario(const Split& split, const ScenarioConfig& cfg);

/// Z-scores train and test with training-row statistics (population std).
/// Features whose training std is below 1e-12 are dropped and reported on
/// stderr.
SemiDataset standardize(SemiDataset semi);

/// Normals ~ N(0, I_d), anomalies ~ N(separation * 1, I_d); normals first.
RawDataset synth_gaussians(std::size_t n_normal, std::size_t n_anomalous, std::size_t d,
                           double separation, std::uint64_t seed);

}  // namespace esad
