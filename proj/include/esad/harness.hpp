#pragma once

// Experiment runner. One run = for each seed:
//   split 60:40 -> build scenario -> standardize -> train -> score -> AUC,
// then mean and (population) standard deviation over the completed seeds.
// Every random stream of a seed is derived from that seed alone, so two runs
// that share seeds share splits and scenarios (paired comparisons).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "esad/data.hpp"
#include "esad/losses.hpp"
#include "esad/metrics.hpp"
#include "esad/model.hpp"

namespace esad {

enum class Method { Esad, DeepSadBaseline };

struct SyntheticSpec {
  std::size_t n_normal = 800;
  std::size_t n_anomalous = 80;
  std::size_t dim = 8;
  double separation = 6.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string dataset = "synthetic";
  std::filesystem::path data_path;      // CSV; empty for synthetic
  std::filesystem::path manifest_path;  // alternative to data_path
  SyntheticSpec synthetic;

  Method method = Method::Esad;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double gamma_l = 0.01;
  double gamma_p = 0.0;
  double epsilon = kDefaultEpsilon;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  SgdConfig sgd;
  std::size_t hidden_dim = 0;  // 0: max(32, 2 * rep)
  std::size_t rep_dim = 0;     // 0: clamp(d, 2, 32)
  PhiKind phi = PhiKind::Permutation;
  double phi_sigma = 1.0;
  // Deep SAD stage lengths; 0 means half of sgd.epochs each.
  std::size_t pretrain_epochs = 0;
  std::size_t finetune_epochs = 0;

  void validate() const;
  /// Flat `key = value` view; parse_config(to_kv()) reproduces the config.
  std::map<std::string, std::string> to_kv() const;
  ModelShape shape_for(std::size_t input_dim) const;
  std::size_t stage1_epochs() const;
  std::size_t stage2_epochs() const;
};

/// Parses `key = value` lines ('#' comments). Unknown keys are errors.
/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::map<std::string, std::string>& kv,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Accepts "0,1,2" and ranges such as "0-9".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Derived per-purpose stream of a seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Thrown when a loss or gradient turns non-finite during training.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(std::size_t epoch, std::size_t batch, std::string component);
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }
  const std::string& component() const { return component_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
  std::string component_;
};

struct EsadTrainResult {
  EsadModel model;
  LossBreakdown final_loss;            // mean over the last epoch's batches
  std::vector<LossBreakdown> history;  // one entry per epoch
};

/// End-to-end training of the full objective on a standardized dataset.
EsadTrainResult train_esad(const ExperimentConfig& cfg, const SemiDataset& semi, std::uint64_t seed);

struct SadBaselineResult {
  MlpStack encoder;
  MlpStack decoder;
  MlpStack pretrained_encoder;  // encoder as it was when the center was taken
  Vector center;
  double pretrain_loss = 0.0;  // last pretraining epoch
  double finetune_loss = 0.0;  // last fine-tuning epoch
  std::vector<double> pretrain_history;
  std::vector<double> finetune_history;
};

/// Two-stage baseline: autoencoder pretraining, center = mean encoding of
/// every training row, then encoder-only SVDD fine-tuning.
SadBaselineResult train_sad_baseline(const ExperimentConfig& cfg, const SemiDataset& semi,
                                     std::uint64_t seed);

/// |encoder(x) - c| per row.
std::vector<ScoredSample> score_sad_baseline(const SadBaselineResult& model, const Matrix& x,
                                             std::span<const GroundTruth> truth);

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double auc = 0.0;
  std::size_t n_test_normal = 0;
  std::size_t n_test_anomalous = 0;
  std::size_t n_unlabeled = 0;
  std::size_t n_labeled = 0;
  /// Baseline runs report rec = pretraining loss, norm = SVDD loss, ass = 0.
  LossBreakdown final_loss;

  friend bool operator==(const SeedResult&, const SeedResult&) = default;
};

struct RunReport {
  std::map<std::string, std::string> config;
  std::vector<SeedResult> seeds;
  double mean_auc = 0.0;
  double std_auc = 0.0;
  std::size_t completed = 0;
  bool partial = false;
  double wall_seconds = 0.0;

  bool all_completed() const { return !partial && completed == seeds.size(); }
  void aggregate();

  /// One JSON object per seed, then one summary object.
  void write_jsonl(std::ostream& os) const;
  static RunReport read_jsonl(std::istream& is);

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Loads (or synthesizes) the configured dataset.
RawDataset load_dataset(const ExperimentConfig& cfg);

/// Runs one seed end to end; exceptions are captured into the result.
SeedResult run_seed(const ExperimentConfig& cfg, const RawDataset& raw, std::uint64_t seed,
                    std::vector<ScoredSample>* scores = nullptr);

RunReport run_experiment(const ExperimentConfig& cfg);
RunReport run_experiment(const ExperimentConfig& cfg, const RawDataset& raw);

struct SweepRow {
  double value = 0.0;
  RunReport report;
};

/// Paired over seeds: every value reuses the same splits and scenarios.
std::vector<SweepRow> sweep_lambda1(const ExperimentConfig& cfg, const std::vector<double>& values);
std::vector<SweepRow> sweep_lambda1(const ExperimentConfig& cfg, const RawDataset& raw,
                                    const std::vector<double>& values);
std::vector<SweepRow> sweep_pollution(const ExperimentConfig& cfg, const std::vector<double>& values);
std::vector<SweepRow> sweep_pollution(const ExperimentConfig& cfg, const RawDataset& raw,
                                      const std::vector<double>& values);

void print_report_table(std::ostream& os, const RunReport& report);
void print_sweep_table(std::ostream& os, const std::string& parameter, const std::vector<SweepRow>& rows);

/// Finite-difference check of the full objective through the pipeline on a
/// random small model and a mixed-label batch drawn from `seed`.
GradCheckReport check_esad_gradients(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace esad
