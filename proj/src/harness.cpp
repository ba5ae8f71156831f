#include "esad/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace esad {

namespace {

using Clock = std::chrono::steady_clock;

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

template <typename Fn>
void for_each_batch(std::size_t n, std::size_t batch_size, Fn&& fn) {
  std::size_t index = 0;
  for (std::size_t start = 0; start < n; start += batch_size, ++index) {
    fn(index, start, std::min(n, start + batch_size));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// config

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto lo = parse_uint("seeds", trim(item.substr(0, dash)));
      const auto hi = parse_uint("seeds", trim(item.substr(dash + 1)));
      if (hi < lo) throw ConfigError("config: bad seed range '" + item + "'");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(parse_uint("seeds", item));
    }
  }
  if (seeds.empty()) throw ConfigError("config: empty seed list");
  return seeds;
}

void ExperimentConfig::validate() const {
  sgd.validate();
  if (sgd.epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("config: lambdas must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("config: epsilon must be > 0");
  if (!(phi_sigma > 0.0)) throw ConfigError("config: phi_sigma must be > 0");
  if (seeds.empty()) throw ConfigError("config: no seeds");
  ScenarioConfig{gamma_l, gamma_p, 0}.validate();
  if (dataset != "synthetic" && data_path.empty() && manifest_path.empty()) {
    throw ConfigError("config: dataset '" + dataset + "' needs 'data' or 'manifest'");
  }
}

ModelShape ExperimentConfig::shape_for(std::size_t input_dim) const {
  ModelShape s = ModelShape::defaults_for(input_dim);
  if (rep_dim != 0) {
    s.rep_dim = rep_dim;
    s.hidden_dim = std::max<std::size_t>(32, 2 * rep_dim);
  }
  if (hidden_dim != 0) s.hidden_dim = hidden_dim;
  return s;
}

std::size_t ExperimentConfig::stage1_epochs() const {
  return pretrain_epochs ? pretrain_epochs : std::max<std::size_t>(1, sgd.epochs / 2);
}

std::size_t ExperimentConfig::stage2_epochs() const {
  return finetune_epochs ? finetune_epochs : std::max<std::size_t>(1, sgd.epochs - sgd.epochs / 2);
}

std::map<std::string, std::string> ExperimentConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["dataset"] = dataset;
  if (!data_path.empty()) kv["data"] = data_path.string();
  if (!manifest_path.empty()) kv["manifest"] = manifest_path.string();
  if (dataset == "synthetic") {
    kv["synth_normal"] = std::to_string(synthetic.n_normal);
    kv["synth_anomalous"] = std::to_string(synthetic.n_anomalous);
    kv["synth_dim"] = std::to_string(synthetic.dim);
    kv["synth_separation"] = format_double(synthetic.separation);
    kv["synth_seed"] = std::to_string(synthetic.seed);
  }
  kv["method"] = method == Method::Esad ? "esad" : "deepsad";
  kv["lambda1"] = format_double(lambda1);
  kv["lambda2"] = format_double(lambda2);
  kv["gamma_l"] = format_double(gamma_l);
  kv["gamma_p"] = format_double(gamma_p);
  kv["epsilon"] = format_double(epsilon);
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  kv["seeds"] = s;
  kv["lr"] = format_double(sgd.initial_lr);
  kv["decay_every"] = std::to_string(sgd.decay_every);
  kv["decay_factor"] = format_double(sgd.decay_factor);
  kv["batch_size"] = std::to_string(sgd.batch_size);
  kv["epochs"] = std::to_string(sgd.epochs);
  kv["clip_norm"] = format_double(sgd.clip_norm);
  kv["hidden"] = std::to_string(hidden_dim);
  kv["rep"] = std::to_string(rep_dim);
  kv["phi"] = phi == PhiKind::Permutation ? "permutation" : "gaussian";
  kv["phi_sigma"] = format_double(phi_sigma);
  kv["pretrain_epochs"] = std::to_string(pretrain_epochs);
  kv["finetune_epochs"] = std::to_string(finetune_epochs);
  return kv;
}

ExperimentConfig parse_config(const std::map<std::string, std::string>& kv,
                              const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "dataset") c.dataset = value;
    else if (key == "data") c.data_path = resolve(base_dir, value);
    else if (key == "manifest") c.manifest_path = resolve(base_dir, value);
    else if (key == "synth_normal") c.synthetic.n_normal = parse_uint(key, value);
    else if (key == "synth_anomalous") c.synthetic.n_anomalous = parse_uint(key, value);
    else if (key == "synth_dim") c.synthetic.dim = parse_uint(key, value);
    else if (key == "synth_separation") c.synthetic.separation = parse_double(key, value);
    else if (key == "synth_seed") c.synthetic.seed = parse_uint(key, value);
    else if (key == "method") {
      if (value == "esad") c.method = Method::Esad;
      else if (value == "deepsad" || value == "deep_sad") c.method = Method::DeepSadBaseline;
      else throw ConfigError("config: unknown method '" + value + "'");
    }
    else if (key == "lambda1") c.lambda1 = parse_double(key, value);
    else if (key == "lambda2") c.lambda2 = parse_double(key, value);
    else if (key == "gamma_l") c.gamma_l = parse_double(key, value);
    else if (key == "gamma_p") c.gamma_p = parse_double(key, value);
    else if (key == "epsilon") c.epsilon = parse_double(key, value);
    else if (key == "seeds") c.seeds = parse_seed_list(value);
    else if (key == "lr") c.sgd.initial_lr = parse_double(key, value);
    else if (key == "decay_every") c.sgd.decay_every = parse_uint(key, value);
    else if (key == "decay_factor") c.sgd.decay_factor = parse_double(key, value);
    else if (key == "batch_size") c.sgd.batch_size = parse_uint(key, value);
    else if (key == "epochs") c.sgd.epochs = parse_uint(key, value);
    else if (key == "clip_norm") c.sgd.clip_norm = parse_double(key, value);
    else if (key == "hidden") c.hidden_dim = parse_uint(key, value);
    else if (key == "rep") c.rep_dim = parse_uint(key, value);
    else if (key == "phi") {
      if (value == "permutation") c.phi = PhiKind::Permutation;
      else if (value == "gaussian") c.phi = PhiKind::GaussianNoise;
      else throw ConfigError("config: unknown phi '" + value + "'");
    }
    else if (key == "phi_sigma") c.phi_sigma = parse_double(key, value);
    else if (key == "pretrain_epochs") c.pretrain_epochs = parse_uint(key, value);
    else if (key == "finetune_epochs") c.finetune_epochs = parse_uint(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return parse_config(kv, base_dir);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// training

TrainingDivergedError::TrainingDivergedError(std::size_t epoch, std::size_t batch, std::string component)
    : std::runtime_error("training diverged: non-finite " + component + " at epoch " +
                         std::to_string(epoch) + ", batch " + std::to_string(batch)),
      epoch_(epoch),
      batch_(batch),
      component_(std::move(component)) {}

namespace {

void check_finite(const LossBreakdown& l, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(l.rec)) throw TrainingDivergedError(epoch, batch, "rec loss");
  if (!std::isfinite(l.norm)) throw TrainingDivergedError(epoch, batch, "norm loss");
  if (!std::isfinite(l.ass)) throw TrainingDivergedError(epoch, batch, "ass loss");
  if (!std::isfinite(l.total)) throw TrainingDivergedError(epoch, batch, "total loss");
}

PhiConfig make_phi(const ExperimentConfig& cfg, std::size_t d, std::uint64_t seed) {
  const auto phi_seed = derive_seed(seed, 4);
  if (cfg.phi == PhiKind::GaussianNoise) return PhiConfig::gaussian_noise(cfg.phi_sigma, phi_seed);
  return PhiConfig::random_permutation(d, phi_seed);
}

}  // namespace

EsadTrainResult train_esad(const ExperimentConfig& cfg, const SemiDataset& semi, std::uint64_t seed) {
  cfg.sgd.validate();
  const std::size_t n = semi.x_train.rows();
  const std::size_t d = semi.x_train.cols();
  if (n == 0) throw DataError("train_esad: empty training set");
  if (semi.tags.size() != n) throw ShapeError("train_esad: tag count != row count");

  const ModelShape shape = cfg.shape_for(d);
  EsadTrainResult result;
  result.model = new_model(shape.input_dim, shape.hidden_dim, shape.rep_dim, derive_seed(seed, 3));
  EsadModel& model = result.model;

  ObjectiveConfig objective;
  objective.lambda1 = cfg.lambda1;
  objective.lambda2 = cfg.lambda2;
  objective.epsilon = cfg.epsilon;
  if (semi.labeled_count() > 0) objective.phi = make_phi(cfg, d, seed);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 5));

  ModelGrads grads = zero_grads(model);
  std::vector<PipelineOutput> outputs;
  std::vector<PipelineSample> samples;
  std::vector<PipelineSampleGrads> sample_grads;

  for (std::size_t epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
    const double lr = cfg.sgd.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown epoch_loss;
    epoch_loss.lambda1 = cfg.lambda1;
    epoch_loss.lambda2 = cfg.lambda2;
    std::size_t batches = 0;

    for_each_batch(n, cfg.sgd.batch_size, [&](std::size_t b, std::size_t lo, std::size_t hi) {
      outputs.clear();
      samples.clear();
      for (std::size_t i = lo; i < hi; ++i) outputs.push_back(forward_pipeline(model, semi.x_train.row(order[i])));
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& o = outputs[i - lo];
        samples.push_back({semi.x_train.row(order[i]), o.z, o.x_hat, o.z_hat, semi.tags[order[i]], order[i]});
      }
      const LossBreakdown loss = esad_objective(samples, objective, &sample_grads);
      check_finite(loss, epoch, b);

      grads.set_zero();
      for (std::size_t k = 0; k < outputs.size(); ++k) {
        const auto& g = sample_grads[k];
        backward_pipeline(model, outputs[k], g.z, g.x_hat, g.z_hat, grads);
      }
      if (!grads.all_finite()) throw TrainingDivergedError(epoch, b, "gradient");
      const std::array<StackGrads*, 3> parts{&grads.enc1, &grads.dec, &grads.enc2};
      clip_global_norm(parts, cfg.sgd.clip_norm);
      sgd_step(model, grads, lr);

      epoch_loss.rec += loss.rec;
      epoch_loss.norm += loss.norm;
      epoch_loss.ass += loss.ass;
      epoch_loss.total += loss.total;
      ++batches;
    });

    const double inv = 1.0 / static_cast<double>(batches);
    epoch_loss.rec *= inv;
    epoch_loss.norm *= inv;
    epoch_loss.ass *= inv;
    epoch_loss.total *= inv;
    result.history.push_back(epoch_loss);
  }
  result.final_loss = result.history.back();
  return result;
}

SadBaselineResult train_sad_baseline(const ExperimentConfig& cfg, const SemiDataset& semi,
                                     std::uint64_t seed) {
  cfg.sgd.validate();
  const std::size_t n = semi.x_train.rows();
  const std::size_t d = semi.x_train.cols();
  if (n == 0) throw DataError("train_sad_baseline: empty training set");
  if (semi.tags.size() != n) throw ShapeError("train_sad_baseline: tag count != row count");

  const ModelShape shape = cfg.shape_for(d);
  std::mt19937_64 init(derive_seed(seed, 3));
  SadBaselineResult res;
  res.encoder = make_encoder(shape, init);
  res.decoder = make_decoder(shape, init);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 5));

  // Stage 1: autoencoder pretraining on all rows, labels ignored.
  StackGrads enc_grads = res.encoder.zero_grads();
  StackGrads dec_grads = res.decoder.zero_grads();
  std::vector<ForwardResult> enc_out;
  std::vector<ForwardResult> dec_out;
  std::vector<ReconPair> pairs;
  std::vector<Vector> grad_x_hat;
  for (std::size_t epoch = 0; epoch < cfg.stage1_epochs(); ++epoch) {
    const double lr = cfg.sgd.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for_each_batch(n, cfg.sgd.batch_size, [&](std::size_t b, std::size_t lo, std::size_t hi) {
      enc_out.clear();
      dec_out.clear();
      pairs.clear();
      for (std::size_t i = lo; i < hi; ++i) {
        enc_out.push_back(forward(res.encoder, semi.x_train.row(order[i])));
        dec_out.push_back(forward(res.decoder, enc_out.back().output));
      }
      for (std::size_t i = lo; i < hi; ++i) pairs.push_back({semi.x_train.row(order[i]), dec_out[i - lo].output});
      const double loss = sad_rec_objective(pairs, &grad_x_hat);
      if (!std::isfinite(loss)) throw TrainingDivergedError(epoch, b, "pretrain rec loss");
      enc_grads.set_zero();
      dec_grads.set_zero();
      Vector grad_z;
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        backward_accumulate(res.decoder, dec_out[k].cache, grad_x_hat[k], dec_grads, &grad_z);
        backward_accumulate(res.encoder, enc_out[k].cache, grad_z, enc_grads, nullptr);
      }
      if (!enc_grads.all_finite() || !dec_grads.all_finite()) {
        throw TrainingDivergedError(epoch, b, "pretrain gradient");
      }
      const std::array<StackGrads*, 2> parts{&enc_grads, &dec_grads};
      clip_global_norm(parts, cfg.sgd.clip_norm);
      sgd_step(res.encoder, enc_grads, lr);
      sgd_step(res.decoder, dec_grads, lr);
      sum += loss;
      ++batches;
    });
    res.pretrain_history.push_back(sum / static_cast<double>(batches));
  }
  res.pretrain_loss = res.pretrain_history.back();

  // Center: mean encoding of every training row after pretraining.
  res.pretrained_encoder = res.encoder;
  std::vector<Vector> encodings;
  encodings.reserve(n);
  for (std::size_t r = 0; r < n; ++r) encodings.push_back(forward(res.encoder, semi.x_train.row(r)).output);
  SvddState state;
  state.center = svdd_center(encodings);
  res.center = state.center;

  // Stage 2: encoder-only fine-tuning.
  std::vector<LatentSample> latents;
  std::vector<Vector> grad_z;
  for (std::size_t epoch = 0; epoch < cfg.stage2_epochs(); ++epoch) {
    const double lr = cfg.sgd.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for_each_batch(n, cfg.sgd.batch_size, [&](std::size_t b, std::size_t lo, std::size_t hi) {
      enc_out.clear();
      latents.clear();
      for (std::size_t i = lo; i < hi; ++i) enc_out.push_back(forward(res.encoder, semi.x_train.row(order[i])));
      for (std::size_t i = lo; i < hi; ++i) latents.push_back({enc_out[i - lo].output, semi.tags[order[i]]});
      const double loss = svdd_objective(latents, state, cfg.epsilon, &grad_z);
      if (!std::isfinite(loss)) throw TrainingDivergedError(epoch, b, "svdd loss");
      enc_grads.set_zero();
      for (std::size_t k = 0; k < latents.size(); ++k) {
        backward_accumulate(res.encoder, enc_out[k].cache, grad_z[k], enc_grads, nullptr);
      }
      if (!enc_grads.all_finite()) throw TrainingDivergedError(epoch, b, "svdd gradient");
      const std::array<StackGrads*, 1> parts{&enc_grads};
      clip_global_norm(parts, cfg.sgd.clip_norm);
      sgd_step(res.encoder, enc_grads, lr);
      sum += loss;
      ++batches;
    });
    res.finetune_history.push_back(sum / static_cast<double>(batches));
  }
  res.finetune_loss = res.finetune_history.back();
  return res;
}

std::vector<ScoredSample> score_sad_baseline(const SadBaselineResult& model, const Matrix& x,
                                             std::span<const GroundTruth> truth) {
  if (x.cols() != model.encoder.input_dim()) throw ShapeError("score_sad_baseline: feature count");
  if (truth.size() != x.rows()) throw ShapeError("score_sad_baseline: label count != row count");
  std::vector<ScoredSample> out;
  out.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto z = forward(model.encoder, x.row(r)).output;
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) s += (z[k] - model.center[k]) * (z[k] - model.center[k]);
    out.push_back({std::sqrt(s), truth[r]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// experiments

RawDataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset == "synthetic" && cfg.data_path.empty()) {
    const auto& s = cfg.synthetic;
    return synth_gaussians(s.n_normal, s.n_anomalous, s.dim, s.separation, s.seed);
  }
  std::filesystem::path path = cfg.data_path;
  if (path.empty()) {
    const auto manifest = load_manifest(cfg.manifest_path);
    const auto it = manifest.find(cfg.dataset);
    if (it == manifest.end()) {
      throw DataError("manifest " + cfg.manifest_path.string() + " has no entry for '" + cfg.dataset + "'");
    }
    path = it->second;
  }
  return load_csv(path, cfg.dataset);
}

SeedResult run_seed(const ExperimentConfig& cfg, const RawDataset& raw, std::uint64_t seed,
                    std::vector<ScoredSample>* scores) {
  SeedResult r;
  r.seed = seed;
  try {
    const Split split = split_60_40(raw, derive_seed(seed, 1));
    const SemiDataset semi =
        standardize(make_scenario(split, {cfg.gamma_l, cfg.gamma_p, derive_seed(seed, 2)}));
    r.n_unlabeled = semi.unlabeled_count();
    r.n_labeled = semi.labeled_count();

    std::vector<ScoredSample> scored;
    if (cfg.method == Method::Esad) {
      const auto trained = train_esad(cfg, semi, seed);
      r.final_loss = trained.final_loss;
      scored = score_dataset(trained.model, semi.x_test, semi.y_test, cfg.lambda1);
    } else {
      const auto trained = train_sad_baseline(cfg, semi, seed);
      r.final_loss.rec = trained.pretrain_loss;
      r.final_loss.norm = trained.finetune_loss;
      r.final_loss.ass = 0.0;
      r.final_loss.lambda1 = 1.0;
      r.final_loss.lambda2 = 0.0;
      r.final_loss.total = loss_total(trained.pretrain_loss, trained.finetune_loss, 0.0, 1.0, 0.0);
      scored = score_sad_baseline(trained, semi.x_test, semi.y_test);
    }
    const AucResult a = auc(scored);
    r.auc = a.auc;
    r.n_test_normal = a.n_normal;
    r.n_test_anomalous = a.n_anomalous;
    r.ok = true;
    if (scores != nullptr) *scores = std::move(scored);
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

void RunReport::aggregate() {
  completed = 0;
  double sum = 0.0;
  for (const auto& s : seeds) {
    if (!s.ok) continue;
    ++completed;
    sum += s.auc;
  }
  partial = completed != seeds.size();
  if (completed == 0) {
    mean_auc = std_auc = 0.0;
    return;
  }
  mean_auc = sum / static_cast<double>(completed);
  double var = 0.0;
  for (const auto& s : seeds) {
    if (s.ok) var += (s.auc - mean_auc) * (s.auc - mean_auc);
  }
  std_auc = std::sqrt(var / static_cast<double>(completed));
}

RunReport run_experiment(const ExperimentConfig& cfg, const RawDataset& raw) {
  cfg.validate();
  const auto start = Clock::now();
  RunReport report;
  report.config = cfg.to_kv();
  for (const auto seed : cfg.seeds) report.seeds.push_back(run_seed(cfg, raw, seed));
  report.aggregate();
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, load_dataset(cfg));
}

std::vector<SweepRow> sweep_lambda1(const ExperimentConfig& cfg, const RawDataset& raw,
                                    const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no values");
  std::vector<SweepRow> rows;
  for (double v : values) {
    ExperimentConfig c = cfg;
    c.lambda1 = v;
    rows.push_back({v, run_experiment(c, raw)});
  }
  return rows;
}

std::vector<SweepRow> sweep_lambda1(const ExperimentConfig& cfg, const std::vector<double>& values) {
  cfg.validate();
  return sweep_lambda1(cfg, load_dataset(cfg), values);
}

std::vector<SweepRow> sweep_pollution(const ExperimentConfig& cfg, const RawDataset& raw,
                                      const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no values");
  std::vector<SweepRow> rows;
  for (double v : values) {
    ExperimentConfig c = cfg;
    c.gamma_p = v;
    rows.push_back({v, run_experiment(c, raw)});
  }
  return rows;
}

std::vector<SweepRow> sweep_pollution(const ExperimentConfig& cfg, const std::vector<double>& values) {
  cfg.validate();
  return sweep_pollution(cfg, load_dataset(cfg), values);
}

// ---------------------------------------------------------------------------
// reports

namespace {

nlohmann::json loss_to_json(const LossBreakdown& l) {
  return {{"rec", l.rec}, {"norm", l.norm}, {"ass", l.ass},
          {"total", l.total}, {"lambda1", l.lambda1}, {"lambda2", l.lambda2}};
}

LossBreakdown loss_from_json(const nlohmann::json& j) {
  LossBreakdown l;
  l.rec = j.at("rec").get<double>();
  l.norm = j.at("norm").get<double>();
  l.ass = j.at("ass").get<double>();
  l.total = j.at("total").get<double>();
  l.lambda1 = j.at("lambda1").get<double>();
  l.lambda2 = j.at("lambda2").get<double>();
  return l;
}

}  // namespace

void RunReport::write_jsonl(std::ostream& os) const {
  for (const auto& s : seeds) {
    nlohmann::json j{{"record", "seed"},
                     {"seed", s.seed},
                     {"ok", s.ok},
                     {"error", s.error},
                     {"auc", s.auc},
                     {"n_test_normal", s.n_test_normal},
                     {"n_test_anomalous", s.n_test_anomalous},
                     {"n_unlabeled", s.n_unlabeled},
                     {"n_labeled", s.n_labeled},
                     {"loss", loss_to_json(s.final_loss)}};
    os << j.dump() << '\n';
  }
  nlohmann::json summary{{"record", "summary"},
                         {"mean_auc", mean_auc},
                         {"std_auc", std_auc},
                         {"completed", completed},
                         {"partial", partial},
                         {"wall_seconds", wall_seconds},
                         {"config", config}};
  os << summary.dump() << '\n';
}

RunReport RunReport::read_jsonl(std::istream& is) {
  RunReport r;
  bool have_summary = false;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto kind = j.at("record").get<std::string>();
    if (kind == "seed") {
      SeedResult s;
      s.seed = j.at("seed").get<std::uint64_t>();
      s.ok = j.at("ok").get<bool>();
      s.error = j.at("error").get<std::string>();
      s.auc = j.at("auc").get<double>();
      s.n_test_normal = j.at("n_test_normal").get<std::size_t>();
      s.n_test_anomalous = j.at("n_test_anomalous").get<std::size_t>();
      s.n_unlabeled = j.at("n_unlabeled").get<std::size_t>();
      s.n_labeled = j.at("n_labeled").get<std::size_t>();
      s.final_loss = loss_from_json(j.at("loss"));
      r.seeds.push_back(std::move(s));
    } else if (kind == "summary") {
      r.mean_auc = j.at("mean_auc").get<double>();
      r.std_auc = j.at("std_auc").get<double>();
      r.completed = j.at("completed").get<std::size_t>();
      r.partial = j.at("partial").get<bool>();
      r.wall_seconds = j.at("wall_seconds").get<double>();
      r.config = j.at("config").get<std::map<std::string, std::string>>();
      have_summary = true;
    } else {
      throw std::runtime_error("report: unknown record kind '" + kind + "'");
    }
  }
  if (!have_summary) throw std::runtime_error("report: missing summary record");
  return r;
}

void print_report_table(std::ostream& os, const RunReport& report) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  const auto cfg = [&](const char* k) {
    const auto it = report.config.find(k);
    return it == report.config.end() ? std::string("?") : it->second;
  };
  os << "dataset " << cfg("dataset") << "  method " << cfg("method") << "  lambda1 " << cfg("lambda1")
     << "  lambda2 " << cfg("lambda2") << "  gamma_l " << cfg("gamma_l") << "  gamma_p " << cfg("gamma_p")
     << '\n';
  os << std::left << std::setw(8) << "seed" << std::setw(10) << "status" << std::right << std::setw(10)
     << "AUC%" << std::setw(12) << "rec" << std::setw(12) << "norm" << std::setw(12) << "ass"
     << "  labeled/unlabeled\n";
  os << std::fixed;
  for (const auto& s : report.seeds) {
    os << std::left << std::setw(8) << s.seed << std::setw(10) << (s.ok ? "ok" : "FAILED") << std::right;
    if (s.ok) {
      os << std::setprecision(2) << std::setw(10) << 100.0 * s.auc << std::setprecision(5) << std::setw(12)
         << s.final_loss.rec << std::setw(12) << s.final_loss.norm << std::setw(12) << s.final_loss.ass
         << "  " << s.n_labeled << "/" << s.n_unlabeled << '\n';
    } else {
      os << "  " << s.error << '\n';
    }
  }
  os << std::setprecision(1) << "AUC " << 100.0 * report.mean_auc << " +- " << 100.0 * report.std_auc
     << " over " << report.completed << "/" << report.seeds.size() << " seeds" << std::setprecision(2)
     << "  (" << report.wall_seconds << " s)" << (report.partial ? "  PARTIAL" : "") << '\n';
  os.flags(flags);
  os.precision(prec);
}

void print_sweep_table(std::ostream& os, const std::string& parameter, const std::vector<SweepRow>& rows) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::left << std::setw(12) << parameter << std::right << std::setw(10) << "AUC%" << std::setw(10)
     << "std" << std::setw(10) << "seeds" << '\n';
  for (const auto& row : rows) {
    os << std::left << std::setw(12) << format_double(row.value) << std::right << std::fixed
       << std::setprecision(2) << std::setw(10) << 100.0 * row.report.mean_auc << std::setw(10)
       << 100.0 * row.report.std_auc << std::setw(10)
       << (std::to_string(row.report.completed) + "/" + std::to_string(row.report.seeds.size()))
       << (row.report.partial ? "  PARTIAL" : "");
    const auto failed = std::find_if(row.report.seeds.begin(), row.report.seeds.end(),
                                     [](const SeedResult& r) { return !r.ok; });
    if (failed != row.report.seeds.end()) os << "  (" << failed->error << ')';
    os << '\n';
    os.flags(flags);
  }
  os.flags(flags);
  os.precision(prec);
}

// ---------------------------------------------------------------------------
// gradient check of the full objective

GradCheckReport check_esad_gradients(std::uint64_t seed, const GradCheckOptions& options) {
  std::mt19937_64 rng(seed);
  auto pick = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  const std::size_t d = pick(3, 6);
  const std::size_t h = pick(3, 7);
  const std::size_t r = pick(2, 4);
  EsadModel model = new_model(d, h, r, derive_seed(seed, 3));
  // Small nonzero biases so that bias gradients are generic.
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto* stack : {&model.enc1, &model.dec, &model.enc2}) {
    for (auto& layer : stack->layers()) {
      for (double& b : layer.bias) b = 0.1 * gauss(rng);
    }
    stack->mark_modified();
  }

  const std::size_t batch = pick(3, 6);
  Matrix x(batch, d);
  for (double& v : x.data()) v = gauss(rng);
  std::vector<SemiLabel> tags(batch);
  for (std::size_t i = 0; i < batch; ++i) tags[i] = static_cast<SemiLabel>(i % 3);
  std::shuffle(tags.begin(), tags.end(), rng);

  ObjectiveConfig obj;
  obj.lambda1 = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
  obj.lambda2 = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
  obj.phi = (seed % 2 == 0) ? PhiConfig::random_permutation(d, seed) : PhiConfig::gaussian_noise(0.5, seed);

  auto evaluate = [&](ModelGrads* grads) {
    std::vector<PipelineOutput> outs;
    outs.reserve(batch);
    std::vector<PipelineSample> samples;
    for (std::size_t i = 0; i < batch; ++i) outs.push_back(forward_pipeline(model, x.row(i)));
    for (std::size_t i = 0; i < batch; ++i) {
      samples.push_back({x.row(i), outs[i].z, outs[i].x_hat, outs[i].z_hat, tags[i], i});
    }
    std::vector<PipelineSampleGrads> g;
    const auto loss = esad_objective(samples, obj, grads ? &g : nullptr);
    if (grads != nullptr) {
      for (std::size_t i = 0; i < batch; ++i) backward_pipeline(model, outs[i], g[i].z, g[i].x_hat, g[i].z_hat, *grads);
    }
    return loss.total;
  };

  ModelGrads grads = zero_grads(model);
  evaluate(&grads);
  const auto analytic = grads.blocks();
  const auto params = parameter_blocks(model);
  return grad_check(params, analytic, [&] {
    model.enc1.mark_modified();
    return evaluate(nullptr);
  }, options);
}

}  // namespace esad
