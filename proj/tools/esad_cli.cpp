// Command-line front end for the experiment harness.
//
//   esad run --config exp.cfg [--seed-list 0-9] [--out report.jsonl] [--scores scores.csv]
//   esad sweep-lambda1 --config exp.cfg --values 0.01,1,100
//   esad sweep-pollution --config exp.cfg --values 0,0.05,0.1,0.2
//   esad gradcheck [--models 20] [--seed 0]
//   esad bench-auc [--n 100000] [--reps 5] [--seed 0]
//
// Exit status is 0 only if every seed of every run completed.

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "esad/harness.hpp"

namespace {

using esad::ExperimentConfig;

ExperimentConfig load(const std::string& path, const std::string& seed_list) {
  ExperimentConfig cfg = esad::load_config(path);
  if (!seed_list.empty()) cfg.seeds = esad::parse_seed_list(seed_list);
  return cfg;
}

void write_jsonl(const std::string& path, const std::vector<esad::RunReport>& reports) {
  if (path.empty()) return;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (const auto& r : reports) r.write_jsonl(os);
}

int sweep_exit(const std::vector<esad::SweepRow>& rows) {
  for (const auto& r : rows) {
    if (!r.report.all_completed()) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised anomaly detection experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed_list;
  std::string out_path;
  std::string scores_path;
  std::vector<double> values;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key = value experiment file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed-list", seed_list, "override seeds, e.g. 0-9 or 1,4,7");
    cmd->add_option("--out", out_path, "write JSON-lines report here");
  };

  auto* run = app.add_subcommand("run", "train and evaluate over the configured seeds");
  add_common(run);
  run->add_option("--scores", scores_path, "CSV of test scores (index,score,label) for the first seed");

  auto* sweep_l1 = app.add_subcommand("sweep-lambda1", "paired-seed sweep over lambda1");
  add_common(sweep_l1);
  sweep_l1->add_option("--values", values, "lambda1 values")->required()->delimiter(',');

  auto* sweep_p = app.add_subcommand("sweep-pollution", "paired-seed sweep over gamma_p");
  add_common(sweep_p);
  sweep_p->add_option("--values", values, "gamma_p values")->required()->delimiter(',');

  std::size_t models = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  gradcheck->add_option("--models", models, "number of random models");
  gradcheck->add_option("--seed", seed, "first seed");
  gradcheck->add_option("--tolerance", tolerance, "max relative error");

  std::size_t n = 100000;
  std::size_t reps = 5;
  auto* bench = app.add_subcommand("bench-auc", "time the sorting AUC on random scores");
  bench->add_option("--n", n, "samples per instance");
  bench->add_option("--reps", reps, "repetitions");
  bench->add_option("--seed", seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = load(config_path, seed_list);
      const auto raw = esad::load_dataset(cfg);
      esad::RunReport report;
      report.config = cfg.to_kv();
      const auto start = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        std::vector<esad::ScoredSample> scores;
        report.seeds.push_back(esad::run_seed(cfg, raw, cfg.seeds[i], i == 0 ? &scores : nullptr));
        if (i == 0 && !scores_path.empty() && report.seeds.back().ok) {
          std::ofstream os(scores_path);
          esad::write_scores_csv(os, scores);
        }
      }
      report.aggregate();
      report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      esad::print_report_table(std::cout, report);
      write_jsonl(out_path, {report});
      return report.all_completed() ? 0 : 1;
    }
    if (sweep_l1->parsed() || sweep_p->parsed()) {
      const auto cfg = load(config_path, seed_list);
      const bool lambda = sweep_l1->parsed();
      const auto rows = lambda ? esad::sweep_lambda1(cfg, values) : esad::sweep_pollution(cfg, values);
      esad::print_sweep_table(std::cout, lambda ? "lambda1" : "gamma_p", rows);
      std::vector<esad::RunReport> reports;
      for (const auto& r : rows) reports.push_back(r.report);
      write_jsonl(out_path, reports);
      return sweep_exit(rows);
    }
    if (gradcheck->parsed()) {
      esad::GradCheckOptions opts;
      opts.tolerance = tolerance;
      double worst = 0.0;
      std::size_t failures = 0;
      for (std::size_t i = 0; i < models; ++i) {
        const auto rep = esad::check_esad_gradients(seed + i, opts);
        worst = std::max(worst, rep.max_rel_error);
        failures += rep.passed() ? 0 : 1;
        std::cout << "model " << seed + i << ": " << rep.checked << " params, max rel err "
                  << std::scientific << std::setprecision(3) << rep.max_rel_error << std::defaultfloat
                  << (rep.passed() ? "" : "  FLAGGED") << '\n';
      }
      std::cout << "worst " << std::scientific << worst << ", " << failures << " model(s) flagged\n";
      return failures == 0 ? 0 : 1;
    }
    if (bench->parsed()) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::bernoulli_distribution coin(0.1);
      std::vector<esad::ScoredSample> samples(n);
      double total = 0.0;
      for (std::size_t r = 0; r < reps; ++r) {
        for (auto& s : samples) {
          const bool anomalous = coin(rng);
          s.truth = anomalous ? esad::GroundTruth::Anomalous : esad::GroundTruth::Normal;
          s.score = std::round((gauss(rng) + (anomalous ? 1.0 : 0.0)) * 100.0) / 100.0;
        }
        const auto t0 = std::chrono::steady_clock::now();
        const auto a = esad::auc(samples);
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        total += dt;
        std::cout << "rep " << r << ": auc " << std::setprecision(6) << a.auc << " in " << dt * 1e3 << " ms\n";
      }
      std::cout << "mean " << total / static_cast<double>(reps) * 1e3 << " ms for n = " << n << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
