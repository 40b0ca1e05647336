#include "npclust/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace npc {

FeatureMatrix::FeatureMatrix(RowMatrix rows) : rows_(std::move(rows)) {
  if (rows_.rows() < 1 || rows_.cols() < 1) throw DomainError("FeatureMatrix: need n >= 1 and d >= 1");
  for (Eigen::Index i = 0; i < rows_.rows(); ++i)
    for (Eigen::Index j = 0; j < rows_.cols(); ++j)
      if (!std::isfinite(rows_(i, j))) {
        throw DomainError("FeatureMatrix: non-finite entry at row " + std::to_string(i) + ", column " +
                          std::to_string(j));
      }
}

FeatureMatrix FeatureMatrix::subset(std::span<const int> indices) const {
  RowMatrix out(static_cast<Eigen::Index>(indices.size()), d());
  for (std::size_t i = 0; i < indices.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows_.row(indices[i]);
  return FeatureMatrix(std::move(out));
}

Vector FeatureMatrix::mean() const { return rows_.colwise().mean().transpose(); }

CompactedLabels compact_labels(std::span<const int> z) {
  std::set<int> distinct(z.begin(), z.end());
  CompactedLabels out;
  int next = 0;
  for (int v : distinct) out.relabel[v] = next++;
  out.z.reserve(z.size());
  for (int v : z) out.z.push_back(out.relabel.at(v));
  return out;
}

int count_distinct(std::span<const int> z) {
  return static_cast<int>(std::set<int>(z.begin(), z.end()).size());
}

bool rows_stochastic(const Responsibilities& r, double tol) {
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < r.cols(); ++k) {
      const double v = r(i, k);
      if (!(v >= 0.0 && v <= 1.0)) return false;
      s += v;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

std::vector<int> argmax_rows(const Responsibilities& r) {
  std::vector<int> out(static_cast<std::size_t>(r.rows()));
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    Eigen::Index best = 0;
    r.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

void NIWHyper::validate() const {
  const int d = dim();
  if (d < 1) throw DomainError("NIWHyper: empty prior mean");
  if (!(kappa > 0.0)) throw DomainError("NIWHyper: kappa must be positive");
  if (!(nu > d - 1)) throw DomainError("NIWHyper: nu must exceed d - 1");
  if (!(alpha > 0.0)) throw DomainError("NIWHyper: alpha must be positive");
  if (psi.rows() != d || psi.cols() != d) throw DomainError("NIWHyper: psi has wrong shape");
  SpdMatrix check(psi);
}

void MixtureState::normalize_weights() {
  double total = 0.0;
  for (const auto& c : clusters) total += c.pi;
  for (auto& c : clusters) c.pi /= total;
}

void MixtureState::check_invariants(double tol) const {
  if (clusters.empty()) throw DomainError("MixtureState: k must be at least 1");
  if (subclusters.size() != clusters.size()) throw DomainError("MixtureState: subcluster count mismatch");
  double total = 0.0;
  for (const auto& c : clusters) {
    if (!(c.pi > 0.0 && c.pi <= 1.0 + tol)) throw DomainError("MixtureState: weight out of (0, 1]");
    total += c.pi;
  }
  if (std::abs(total - 1.0) > tol) throw DomainError("MixtureState: weights do not sum to 1");
  for (const auto& pair : subclusters) {
    if (std::abs(pair[0].pi + pair[1].pi - 1.0) > tol) {
      throw DomainError("MixtureState: subcluster weights do not sum to 1");
    }
  }
}

}  // namespace npc
