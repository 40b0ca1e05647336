#pragma once

// Dataset ingestion, synthetic data, imbalance subsampling and run artifacts.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "npclust/model.hpp"

namespace npc {

// Malformed or unreadable input/output files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Comma-separated reals, one point per row. A non-numeric first line is
// treated as a header.
FeatureMatrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureMatrix& data);

// One non-negative integer per line.
std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const int> labels);

// Writes via a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

struct GeneratedData {
  FeatureMatrix data;
  std::vector<int> labels;
  std::vector<GaussianComponent> components;
};

// Component standard deviation used for separation: sqrt(trace(Sigma) / d).
double component_stddev(const GaussianComponent& c);

// Means at pairwise distance >= separation * (mean component stddev), random
// rotated covariances with condition number <= 10, labels drawn per weights.
GeneratedData generate_gmm(int k, int n, int d, double separation,
                           const std::optional<std::vector<double>>& weights, std::uint64_t seed);

std::vector<double> sample_flat_dirichlet(int k, std::mt19937_64& rng);

struct Subsample {
  FeatureMatrix data;
  std::vector<int> labels;
  std::vector<int> rows;  // indices into the input, ascending
  std::vector<double> proportions;
};

// Keeps round(p_c * N_c) uniformly chosen members of every class c. Without
// proportions, the retention profile is a flat-Dirichlet histogram scaled so
// its largest bin keeps every member; in that mode each class keeps at least
// one point.
Subsample imbalance_subsample(const FeatureMatrix& data, std::span<const int> labels,
                              const std::optional<std::vector<double>>& proportions, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  int k = 0;
  double cluster_loss = 0.0;
  double sub_loss = 0.0;
  int splits_accepted = 0;
  int merges_accepted = 0;
  std::string proposal = "none";  // round run after this epoch: none, split or merge
};

struct Metrics {
  std::optional<double> acc;
  std::optional<double> nmi;
  std::optional<double> ari;
  std::optional<double> silhouette;
};

struct RunRecord {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
  std::vector<int> labels;
  std::vector<GaussianComponent> clusters;
  Metrics metrics;
  std::vector<double> log_posterior_trace;  // oracle-EM runs only
  double wall_clock_sec = 0.0;

  int final_k() const { return count_distinct(labels); }
  std::vector<int> k_trajectory() const;
  nlohmann::json summary() const;
};

// labels.csv, summary.json and params/cluster_<k>.csv (weight, mean, then
// covariance rows). Oracle runs also get trace.csv.
void write_run(const RunRecord& record, const std::filesystem::path& dir);

}  // namespace npc
