#pragma once

#include <array>
#include <map>
#include <span>
#include <vector>

#include "npclust/numerics.hpp"

namespace npc {

// N points in R^d, one per row. All entries finite.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(RowMatrix rows);

  Eigen::Index n() const { return rows_.rows(); }
  Eigen::Index d() const { return rows_.cols(); }
  const RowMatrix& rows() const { return rows_; }
  auto row(Eigen::Index i) const { return rows_.row(i); }

  FeatureMatrix subset(std::span<const int> indices) const;
  Vector mean() const;

 private:
  RowMatrix rows_;
};

// Cluster indices are 0-based; subcluster indices are {0, 1}.
struct HardLabels {
  std::vector<int> z;
  std::vector<int> sub;
};

struct CompactedLabels {
  std::vector<int> z;
  std::map<int, int> relabel;  // old -> new
};

// Order-preserving compaction of arbitrary non-negative labels onto {0..K'-1}.
CompactedLabels compact_labels(std::span<const int> z);

int count_distinct(std::span<const int> z);

// N x K row-stochastic matrix of soft assignments.
using Responsibilities = Matrix;

bool rows_stochastic(const Responsibilities& r, double tol = 1e-9);
std::vector<int> argmax_rows(const Responsibilities& r);

struct NIWHyper {
  Vector m;
  double kappa = 1.0;
  double nu = 1.0;
  Matrix psi;
  double alpha = 1.0;

  int dim() const { return static_cast<int>(m.size()); }
  // Throws DomainError / FactorizationError when an invariant fails.
  void validate() const;
};

struct GaussianComponent {
  Vector mu;
  SpdMatrix sigma;
  double pi = 1.0;
};

using SubclusterPair = std::array<GaussianComponent, 2>;

struct MixtureState {
  std::vector<GaussianComponent> clusters;
  std::vector<SubclusterPair> subclusters;

  int k() const { return static_cast<int>(clusters.size()); }
  void normalize_weights();
  void check_invariants(double tol = 1e-9) const;
};

}  // namespace npc
