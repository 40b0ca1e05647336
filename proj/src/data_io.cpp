#include "npclust/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace npc {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

FeatureMatrix read_features(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  std::size_t start = 0;
  {
    const auto cells = split_csv(lines[0]);
    double v;
    if (std::any_of(cells.begin(), cells.end(), [&](const std::string& c) { return !parse_double(c, v); })) start = 1;
  }
  if (start >= lines.size()) throw DataError(path.string() + ": no data rows");
  std::vector<std::vector<double>> rows;
  std::size_t d = 0;
  for (std::size_t li = start; li < lines.size(); ++li) {
    const std::size_t row = li - start;
    const auto cells = split_csv(lines[li]);
    if (rows.empty()) d = cells.size();
    if (cells.size() != d) {
      throw DataError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " columns, expected " + std::to_string(d));
    }
    std::vector<double> values(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (!parse_double(cells[j], values[j])) {
        throw DataError(path.string() + ": non-numeric cell at row " + std::to_string(row) + ", column " +
                        std::to_string(j));
      }
      if (!std::isfinite(values[j])) {
        throw DataError(path.string() + ": non-finite value at row " + std::to_string(row) + ", column " +
                        std::to_string(j));
      }
    }
    rows.push_back(std::move(values));
  }
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return FeatureMatrix(std::move(m));
}

void write_features(const fs::path& path, const FeatureMatrix& data) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) os << (j ? "," : "") << format_double(data.rows()(i, j));
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

std::vector<int> read_labels(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  std::vector<int> labels;
  labels.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto s = trim(lines[i]);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
      throw DataError(path.string() + ": line " + std::to_string(i) + " is not a non-negative integer");
    }
    labels.push_back(v);
  }
  return labels;
}

void write_labels(const fs::path& path, std::span<const int> labels) {
  std::string out;
  for (int v : labels) {
    out += std::to_string(v);
    out += '\n';
  }
  write_file_atomic(path, out);
}

double component_stddev(const GaussianComponent& c) {
  return std::sqrt(c.sigma.matrix().trace() / static_cast<double>(c.sigma.dim()));
}

GeneratedData generate_gmm(int k, int n, int d, double separation, const std::optional<std::vector<double>>& weights,
                           std::uint64_t seed) {
  if (k < 1 || n < 1 || d < 1) throw DomainError("generate_gmm: k, n and d must be positive");
  std::vector<double> w(static_cast<std::size_t>(k), 1.0 / k);
  if (weights) {
    if (static_cast<int>(weights->size()) != k) throw DomainError("generate_gmm: weight count must equal k");
    const double total = std::accumulate(weights->begin(), weights->end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9 || std::any_of(weights->begin(), weights->end(), [](double x) { return x < 0.0; })) {
      throw DomainError("generate_gmm: weights must lie on the simplex");
    }
    w = *weights;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> eig(0.3, 3.0);

  std::vector<GaussianComponent> comps(static_cast<std::size_t>(k));
  double mean_sd = 0.0;
  for (auto& c : comps) {
    Matrix g(d, d);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < d; ++i) g(i, j) = normal(rng);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector lambda(d);
    for (int i = 0; i < d; ++i) lambda(i) = eig(rng);
    Matrix sigma = q * lambda.asDiagonal() * q.transpose();
    sigma = 0.5 * (sigma + sigma.transpose());
    c.sigma = SpdMatrix(sigma);
    mean_sd += component_stddev(c);
  }
  mean_sd /= k;

  const double min_dist = separation * mean_sd;
  const double half_width = std::max(1.0, min_dist * std::pow(static_cast<double>(k), 1.0 / d));
  std::uniform_real_distribution<double> box(-half_width, half_width);
  int rejections = 0;
  for (int c = 0; c < k; ++c) {
    for (;;) {
      Vector mu(d);
      for (int i = 0; i < d; ++i) mu(i) = box(rng);
      bool ok = true;
      for (int p = 0; p < c && ok; ++p) ok = (mu - comps[static_cast<std::size_t>(p)].mu).norm() >= min_dist;
      if (ok) {
        comps[static_cast<std::size_t>(c)].mu = mu;
        break;
      }
      if (++rejections >= 10000) throw DomainError("generate_gmm: could not place the component means");
    }
    comps[static_cast<std::size_t>(c)].pi = w[static_cast<std::size_t>(c)];
  }

  std::discrete_distribution<int> pick(w.begin(), w.end());
  RowMatrix x(n, d);
  std::vector<int> labels(static_cast<std::size_t>(n));
  Vector z(d);
  for (int i = 0; i < n; ++i) {
    const int c = pick(rng);
    labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < d; ++j) z(j) = normal(rng);
    const auto& comp = comps[static_cast<std::size_t>(c)];
    x.row(i) = (comp.mu + comp.sigma.factor() * z).transpose();
  }
  return {FeatureMatrix(std::move(x)), std::move(labels), std::move(comps)};
}

std::vector<double> sample_flat_dirichlet(int k, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (auto& v : p) total += (v = gamma(rng));
  for (auto& v : p) v /= total;
  return p;
}

Subsample imbalance_subsample(const FeatureMatrix& data, std::span<const int> labels,
                              const std::optional<std::vector<double>>& proportions, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(labels.size()) != data.n()) throw DomainError("imbalance_subsample: label count mismatch");
  const auto compact = compact_labels(labels);
  const int k = static_cast<int>(compact.relabel.size());
  std::mt19937_64 rng(seed);
  std::vector<double> p;
  if (proportions) {
    if (static_cast<int>(proportions->size()) != k) {
      throw DomainError("imbalance_subsample: need one proportion per class");
    }
    for (double v : *proportions)
      if (!(v > 0.0 && v <= 1.0)) throw DomainError("imbalance_subsample: proportions must lie in (0, 1]");
    p = *proportions;
  } else {
    p = sample_flat_dirichlet(k, rng);
    const double mx = *std::max_element(p.begin(), p.end());
    for (auto& v : p) v /= mx;
  }

  std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < compact.z.size(); ++i) members[static_cast<std::size_t>(compact.z[i])].push_back(static_cast<int>(i));
  std::vector<int> keep;
  for (int c = 0; c < k; ++c) {
    const auto& m = members[static_cast<std::size_t>(c)];
    auto count = static_cast<std::size_t>(std::llround(p[static_cast<std::size_t>(c)] * static_cast<double>(m.size())));
    if (!proportions) count = std::max<std::size_t>(count, 1);
    if (count == 0) throw DataError("imbalance_subsample: class " + std::to_string(c) + " would keep no members");
    std::sample(m.begin(), m.end(), std::back_inserter(keep), static_cast<std::ptrdiff_t>(count), rng);
  }
  std::sort(keep.begin(), keep.end());

  Subsample out{data.subset(keep), {}, keep, p};
  out.labels.reserve(keep.size());
  for (int i : keep) out.labels.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<int> RunRecord::k_trajectory() const {
  std::vector<int> out;
  out.reserve(history.size());
  for (const auto& e : history) out.push_back(e.k);
  return out;
}

nlohmann::json RunRecord::summary() const {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json hist = json::array();
  for (const auto& e : history) {
    hist.push_back({{"epoch", e.epoch},
                    {"k", e.k},
                    {"cluster_loss", e.cluster_loss},
                    {"sub_loss", e.sub_loss},
                    {"splits_accepted", e.splits_accepted},
                    {"merges_accepted", e.merges_accepted},
                    {"proposal", e.proposal}});
  }
  json j = {{"final_k", final_k()},
            {"k_trajectory", k_trajectory()},
            {"acc", opt(metrics.acc)},
            {"nmi", opt(metrics.nmi)},
            {"ari", opt(metrics.ari)},
            {"silhouette", opt(metrics.silhouette)},
            {"config", config},
            {"seed", seed},
            {"epochs", static_cast<int>(history.size())},
            {"history", hist},
            {"wall_clock_sec", wall_clock_sec}};
  if (!log_posterior_trace.empty()) j["log_posterior_trace"] = log_posterior_trace;
  return j;
}

void write_run(const RunRecord& record, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "params", ec);
  if (ec) throw DataError("cannot create " + (dir / "params").string() + ": " + ec.message());
  write_labels(dir / "labels.csv", record.labels);
  write_file_atomic(dir / "summary.json", record.summary().dump(2) + "\n");
  for (std::size_t c = 0; c < record.clusters.size(); ++c) {
    const auto& comp = record.clusters[c];
    std::ostringstream os;
    os << format_double(comp.pi) << '\n';
    for (Eigen::Index j = 0; j < comp.mu.size(); ++j) os << (j ? "," : "") << format_double(comp.mu(j));
    os << '\n';
    const Matrix& s = comp.sigma.matrix();
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.cols(); ++j) os << (j ? "," : "") << format_double(s(i, j));
      os << '\n';
    }
    write_file_atomic(dir / "params" / ("cluster_" + std::to_string(c) + ".csv"), os.str());
  }
  if (!record.log_posterior_trace.empty()) {
    std::ostringstream os;
    for (double v : record.log_posterior_trace) os << format_double(v) << '\n';
    write_file_atomic(dir / "trace.csv", os.str());
  }
}

}  // namespace npc
