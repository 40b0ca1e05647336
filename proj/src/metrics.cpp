#include "npclust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "parallel.hpp"

namespace npc {

namespace {

void check_lengths(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw DomainError("metrics: label vectors differ in length");
  if (pred.empty()) throw DomainError("metrics: empty label vectors");
}

double choose2(long n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

double entropy(const std::vector<long>& sums, double n) {
  double h = 0.0;
  for (long c : sums)
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  return h;
}

}  // namespace

ContingencyTable contingency(std::span<const int> pred, std::span<const int> truth) {
  check_lengths(pred, truth);
  const auto p = compact_labels(pred);
  const auto t = compact_labels(truth);
  const auto kp = p.relabel.size();
  const auto kt = t.relabel.size();
  ContingencyTable table;
  table.counts.assign(kp, std::vector<long>(kt, 0));
  table.row_sums.assign(kp, 0);
  table.col_sums.assign(kt, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto a = static_cast<std::size_t>(p.z[i]);
    const auto b = static_cast<std::size_t>(t.z[i]);
    ++table.counts[a][b];
    ++table.row_sums[a];
    ++table.col_sums[b];
  }
  table.total = static_cast<long>(pred.size());
  return table;
}

std::vector<int> hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DomainError("hungarian: cost matrix must be square");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  // Shortest augmenting paths with row/column potentials; 1-based internally.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) assignment[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  return assignment;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
  const auto table = contingency(pred, truth);
  const auto kp = table.row_sums.size();
  const auto kt = table.col_sums.size();
  const auto n = static_cast<Eigen::Index>(std::max(kp, kt));
  Matrix cost = Matrix::Zero(n, n);
  for (std::size_t a = 0; a < kp; ++a)
    for (std::size_t b = 0; b < kt; ++b)
      cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = -static_cast<double>(table.counts[a][b]);
  const auto assignment = hungarian(cost);
  long matched = 0;
  for (std::size_t a = 0; a < kp; ++a) {
    const auto b = static_cast<std::size_t>(assignment[a]);
    if (b < kt) matched += table.counts[a][b];
  }
  return static_cast<double>(matched) / static_cast<double>(table.total);
}

double nmi(std::span<const int> pred, std::span<const int> truth) {
  const auto table = contingency(pred, truth);
  const double n = static_cast<double>(table.total);
  const double hp = entropy(table.row_sums, n);
  const double ht = entropy(table.col_sums, n);
  if (hp == 0.0 && ht == 0.0) return 1.0;
  if (hp == 0.0 || ht == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t a = 0; a < table.row_sums.size(); ++a)
    for (std::size_t b = 0; b < table.col_sums.size(); ++b) {
      const long c = table.counts[a][b];
      if (c == 0) continue;
      const double pab = static_cast<double>(c) / n;
      mi += pab * std::log(static_cast<double>(c) * n /
                           (static_cast<double>(table.row_sums[a]) * static_cast<double>(table.col_sums[b])));
    }
  return std::clamp(2.0 * mi / (hp + ht), 0.0, 1.0);
}

double ari(std::span<const int> pred, std::span<const int> truth) {
  const auto table = contingency(pred, truth);
  if (table.total < 2) throw DomainError("ari: need at least two points");
  long long index = 0;
  for (const auto& row : table.counts)
    for (long c : row) index += static_cast<long long>(c) * (c - 1) / 2;
  long long sum_rows = 0;
  long long sum_cols = 0;
  for (long c : table.row_sums) sum_rows += static_cast<long long>(c) * (c - 1) / 2;
  for (long c : table.col_sums) sum_cols += static_cast<long long>(c) * (c - 1) / 2;
  const double expected = static_cast<double>(sum_rows) * static_cast<double>(sum_cols) / choose2(table.total);
  const double max_index = 0.5 * static_cast<double>(sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (static_cast<double>(index) - expected) / (max_index - expected);
}

double silhouette(const FeatureMatrix& data, std::span<const int> labels, int threads) {
  if (static_cast<Eigen::Index>(labels.size()) != data.n()) throw DomainError("silhouette: label count mismatch");
  const auto compact = compact_labels(labels);
  const int k = static_cast<int>(compact.relabel.size());
  if (k < 2) throw DomainError("silhouette: undefined for fewer than two clusters");
  const int n = static_cast<int>(data.n());
  std::vector<long> sizes(static_cast<std::size_t>(k), 0);
  for (int z : compact.z) ++sizes[static_cast<std::size_t>(z)];
  const RowMatrix& x = data.rows();
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  detail::parallel_for(n, threads, [&](int i) {
    const int own = compact.z[static_cast<std::size_t>(i)];
    if (sizes[static_cast<std::size_t>(own)] < 2) return;
    std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
    for (int j = 0; j < n; ++j) sums[static_cast<std::size_t>(compact.z[static_cast<std::size_t>(j)])] += (x.row(i) - x.row(j)).norm();
    const double a = sums[static_cast<std::size_t>(own)] / static_cast<double>(sizes[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own) b = std::min(b, sums[static_cast<std::size_t>(c)] / static_cast<double>(sizes[static_cast<std::size_t>(c)]));
    const double denom = std::max(a, b);
    s[static_cast<std::size_t>(i)] = denom > 0.0 ? (b - a) / denom : 0.0;
  });
  double total = 0.0;
  for (double v : s) total += v;
  return total / n;
}

}  // namespace npc
