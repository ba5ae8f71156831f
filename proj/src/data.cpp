#include "esad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

namespace esad {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::size_t round_count(double v) { return static_cast<std::size_t>(std::llround(v)); }

RawDataset take_rows(const RawDataset& raw, std::span<const std::size_t> rows) {
  RawDataset out;
  out.name = raw.name;
  out.x = Matrix(rows.size(), raw.dim());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = raw.x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
    out.y.push_back(raw.y[rows[i]]);
  }
  return out;
}

}  // namespace

std::size_t RawDataset::anomaly_count() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), GroundTruth::Anomalous));
}

// ---------------------------------------------------------------------------
// CSV

RawDataset parse_csv(std::string_view text, std::string name) {
  RawDataset out;
  out.name = std::move(name);
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t line_no = 0;
  bool seen_row = false;

  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = trim(text.substr(pos, nl == std::string_view::npos ? nl : nl - pos));
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    const auto cells = split_cells(line);
    if (!seen_row) {
      const bool numeric = std::all_of(cells.begin(), cells.end(),
                                       [](std::string_view c) { return parse_number(c).has_value(); });
      if (!numeric && out.y.empty() && line_no == 1) continue;  // header
      if (cells.size() < 2) throw ParseError("csv: need at least one feature and a label", line_no);
      cols = cells.size();
      seen_row = true;
    }
    if (cells.size() != cols) {
      throw ParseError("csv: expected " + std::to_string(cols) + " cells, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t c = 0; c + 1 < cols; ++c) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        throw FeatureTypeError("csv: feature " + std::to_string(c) + " is not a finite number: '" +
                                   std::string(cells[c]) + "'",
                               line_no);
      }
      values.push_back(*v);
    }
    const auto label = parse_number(cells.back());
    if (!label || (*label != 0.0 && *label != 1.0)) {
      throw ParseError("csv: label must be 0 or 1, found '" + std::string(cells.back()) + "'", line_no);
    }
    out.y.push_back(*label == 1.0 ? GroundTruth::Anomalous : GroundTruth::Normal);
  }
  if (out.y.empty()) throw ParseError("csv: no data rows", line_no);
  out.x = Matrix(out.y.size(), cols - 1, std::move(values));
  return out;
}

RawDataset load_csv(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("csv: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (name.empty()) name = path.stem().string();
  return parse_csv(ss.str(), std::move(name));
}

std::optional<BenchmarkStats> benchmark_stats(std::string_view name) {
  for (const auto& s : kBenchmarkStats) {
    if (s.name == name) return s;
  }
  return std::nullopt;
}

std::map<std::string, std::filesystem::path> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path.string());
  std::map<std::string, std::filesystem::path> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ParseError("manifest: expected 'name = path'", line_no);
    const std::string key(trim(view.substr(0, eq)));
    std::filesystem::path value(std::string(trim(view.substr(eq + 1))));
    if (key.empty() || value.empty()) throw ParseError("manifest: empty name or path", line_no);
    if (value.is_relative()) value = path.parent_path() / value;
    out[key] = value;
  }
  return out;
}

// ---------------------------------------------------------------------------
// split

Split split_60_40(const RawDataset& raw, std::uint64_t seed) {
  std::vector<std::size_t> normals;
  std::vector<std::size_t> anomalies;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    (raw.y[i] == GroundTruth::Anomalous ? anomalies : normals).push_back(i);
  }
  if (normals.size() < 2 || anomalies.size() < 2) {
    throw DataError("split: each class needs at least 2 samples (normal " +
                    std::to_string(normals.size()) + ", anomalous " +
                    std::to_string(anomalies.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(normals.begin(), normals.end(), rng);
  std::shuffle(anomalies.begin(), anomalies.end(), rng);

  const std::size_t n_train = round_count(0.6 * static_cast<double>(raw.size()));
  const std::size_t a_train = round_count(0.6 * static_cast<double>(anomalies.size()));
  const std::size_t n_train_normal = n_train - a_train;

  std::vector<std::size_t> train(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(n_train_normal));
  train.insert(train.end(), anomalies.begin(), anomalies.begin() + static_cast<std::ptrdiff_t>(a_train));
  std::vector<std::size_t> test(normals.begin() + static_cast<std::ptrdiff_t>(n_train_normal), normals.end());
  test.insert(test.end(), anomalies.begin() + static_cast<std::ptrdiff_t>(a_train), anomalies.end());
  std::shuffle(train.begin(), train.end(), rng);
  std::shuffle(test.begin(), test.end(), rng);

  return {take_rows(raw, train), take_rows(raw, test)};
}

// ---------------------------------------------------------------------------
// scenarios

void ScenarioConfig::validate() const {
  if (!(gamma_l >= 0.0 && gamma_l < 1.0)) throw ConfigError("scenario: gamma_l must lie in [0, 1)");
  if (!(gamma_p >= 0.0 && gamma_p < 1.0)) throw ConfigError("scenario: gamma_p must lie in [0, 1)");
}

std::size_t SemiDataset::unlabeled_count() const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), SemiLabel::Unlabeled));
}

std::size_t SemiDataset::labeled_count() const { return tags.size() - unlabeled_count(); }

SemiDataset make_scenario(const Split& split, const ScenarioConfig& cfg) {
  cfg.validate();
  const auto& train = split.train;
  std::vector<std::size_t> normals;
  std::vector<std::size_t> anomalies;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train.y[i] == GroundTruth::Anomalous ? anomalies : normals).push_back(i);
  }
  const double n_normal = static_cast<double>(normals.size());
  const std::size_t hidden = round_count(cfg.gamma_p * n_normal / (1.0 - cfg.gamma_p));
  const double pool = n_normal + static_cast<double>(hidden);
  std::size_t labeled = round_count(cfg.gamma_l * pool / (1.0 - cfg.gamma_l));
  if (labeled == 0 && cfg.gamma_l > 0.0) labeled = 1;

  if (hidden + labeled > anomalies.size()) {
    throw ConfigError("scenario: gamma_l = " + std::to_string(cfg.gamma_l) + " and gamma_p = " +
                      std::to_string(cfg.gamma_p) + " need " + std::to_string(labeled) +
                      " labeled + " + std::to_string(hidden) + " hidden anomalies, but the training split has " +
                      std::to_string(anomalies.size()) + " (short by " +
                      std::to_string(hidden + labeled - anomalies.size()) + ")");
  }
  if (normals.empty() && hidden == 0 && labeled == 0) {
    throw ConfigError("scenario: empty training pool");
  }

  std::mt19937_64 rng(splitmix64(cfg.seed));
  std::shuffle(anomalies.begin(), anomalies.end(), rng);

  struct Entry {
    std::size_t row;
    SemiLabel tag;
  };
  std::vector<Entry> entries;
  entries.reserve(normals.size() + hidden + labeled);
  for (std::size_t r : normals) entries.push_back({r, SemiLabel::Unlabeled});
  for (std::size_t i = 0; i < labeled; ++i) entries.push_back({anomalies[i], SemiLabel::LabeledAnomalous});
  for (std::size_t i = labeled; i < labeled + hidden; ++i) entries.push_back({anomalies[i], SemiLabel::Unlabeled});
  std::shuffle(entries.begin(), entries.end(), rng);

  SemiDataset semi;
  semi.x_train = Matrix(entries.size(), train.dim());
  semi.tags.reserve(entries.size());
  semi.train_truth.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto src = train.x.row(entries[i].row);
    std::copy(src.begin(), src.end(), semi.x_train.row(i).begin());
    semi.tags.push_back(entries[i].tag);
    semi.train_truth.push_back(train.y[entries[i].row]);
  }
  semi.x_test = split.test.x;
  semi.y_test = split.test.y;
  return semi;
}

SemiDataset standardize(SemiDataset semi) {
  const std::size_t d = semi.x_train.cols();
  const std::size_t n = semi.x_train.rows();
  if (n == 0) throw DataError("standardize: empty training set");
  if (semi.x_test.rows() > 0 && semi.x_test.cols() != d) throw ShapeError("standardize: test width");

  Standardization t;
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += semi.x_train(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double dv = semi.x_train(r, c) - mean;
      var += dv * dv;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd < 1e-12) {
      t.dropped.push_back(c);
      continue;
    }
    t.kept.push_back(c);
    t.mean.push_back(mean);
    t.stddev.push_back(sd);
  }
  if (!t.dropped.empty()) {
    std::cerr << "warning: dropping " << t.dropped.size() << " constant feature(s):";
    for (std::size_t c : t.dropped) std::cerr << ' ' << c;
    std::cerr << '\n';
  }
  if (t.kept.empty()) throw DataError("standardize: every feature is constant on the training rows");

  auto apply = [&t](const Matrix& in) {
    Matrix out(in.rows(), t.kept.size());
    for (std::size_t r = 0; r < in.rows(); ++r) {
      for (std::size_t k = 0; k < t.kept.size(); ++k) {
        out(r, k) = (in(r, t.kept[k]) - t.mean[k]) / t.stddev[k];
      }
    }
    return out;
  };
  semi.x_train = apply(semi.x_train);
  semi.x_test = apply(semi.x_test);
  semi.transform = std::move(t);
  return semi;
}

RawDataset synth_gaussians(std::size_t n_normal, std::size_t n_anomalous, std::size_t d,
                           double separation, std::uint64_t seed) {
  if (n_normal < 1 || n_anomalous < 1 || d < 1) {
    throw ConfigError("synth_gaussians: counts and dimension must be >= 1");
  }
  if (!(separation >= 0.0)) throw ConfigError("synth_gaussians: separation must be >= 0");
  RawDataset out;
  out.name = "synthetic";
  out.x = Matrix(n_normal + n_anomalous, d);
  out.y.reserve(n_normal + n_anomalous);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t r = 0; r < n_normal + n_anomalous; ++r) {
    const bool anomalous = r >= n_normal;
    const double shift = anomalous ? separation : 0.0;
    for (double& v : out.x.row(r)) v = shift + gauss(rng);
    out.y.push_back(anomalous ? GroundTruth::Anomalous : GroundTruth::Normal);
  }
  return out;
}

}  // namespace esad
