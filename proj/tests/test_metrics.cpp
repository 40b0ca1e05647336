#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "npclust/metrics.hpp"
#include "oracles.hpp"

using namespace npc;

namespace {

std::vector<int> random_labels(int n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, k - 1);
  std::vector<int> z(static_cast<std::size_t>(n));
  for (auto& v : z) v = u(rng);
  return z;
}

std::vector<int> random_perm(int k, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(k));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

double assignment_cost(const Matrix& cost, const std::vector<int>& a) {
  double c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) c += cost(static_cast<Eigen::Index>(i), a[i]);
  return c;
}

}  // namespace

TEST_CASE("contingency: marginals are consistent") {
  const std::vector<int> pred{0, 0, 5, 5, 2};
  const std::vector<int> truth{1, 1, 1, 0, 0};
  const auto t = contingency(pred, truth);
  CHECK(t.total == 5);
  CHECK(t.row_sums == std::vector<long>{2, 1, 2});
  CHECK(t.col_sums == std::vector<long>{2, 3});
  CHECK(t.counts[0][1] == 2);
  CHECK(t.counts[2][0] == 1);
  const std::vector<int> shorter{0, 1};
  CHECK_THROWS_AS(contingency(pred, shorter), DomainError);
}

TEST_CASE("hungarian: examples") {
  Matrix c = Matrix::Ones(4, 4) - Matrix::Identity(4, 4);
  CHECK(hungarian(c) == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(hungarian(Matrix::Zero(2, 3)), DomainError);
}

TEST_CASE("hungarian: matches permutation enumeration for n <= 6") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 6;
    Matrix c(n, n);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = (trial % 3 == 0) ? std::round(u(rng)) : u(rng);
    const auto a = hungarian(c);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK(assignment_cost(c, a) == doctest::Approx(oracle::brute_min_assignment(c)).epsilon(1e-12));
    // Adding a constant per row leaves the optimum unchanged.
    Matrix shifted = c;
    for (int i = 0; i < n; ++i) shifted.row(i).array() += u(rng);
    CHECK(assignment_cost(c, hungarian(shifted)) == doctest::Approx(assignment_cost(c, a)).epsilon(1e-12));
  }
}

TEST_CASE("clustering_accuracy: examples") {
  const std::vector<int> t{0, 0, 1, 1, 2, 2};
  CHECK(clustering_accuracy(t, t) == 1.0);
  const std::vector<int> relabeled{2, 2, 0, 0, 1, 1};
  CHECK(clustering_accuracy(relabeled, t) == 1.0);
  const std::vector<int> truth{0, 0, 1, 1};
  const std::vector<int> pred{0, 1, 0, 1};
  CHECK(clustering_accuracy(pred, truth) == 0.5);
  const std::vector<int> shorter{0, 1};
  CHECK_THROWS_AS(clustering_accuracy(shorter, truth), DomainError);
}

TEST_CASE("clustering_accuracy: matches brute-force matching, including K_pred != K_true") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 8;
    const auto pred = random_labels(n, 1 + trial % 5, rng);
    const auto truth = random_labels(n, 1 + (trial / 5) % 5, rng);
    CHECK(clustering_accuracy(pred, truth) == doctest::Approx(oracle::brute_accuracy(pred, truth)).epsilon(1e-15));
  }
}

TEST_CASE("property: accuracy is symmetric when K_pred == K_true") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_labels(30, 4, rng);
    const auto b = random_labels(30, 4, rng);
    if (count_distinct(a) != count_distinct(b)) continue;
    CHECK(clustering_accuracy(a, b) == clustering_accuracy(b, a));
  }
}

TEST_CASE("nmi: examples") {
  const std::vector<int> t{0, 0, 1, 1, 2};
  CHECK(nmi(t, t) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<int> one{0, 0, 0};
  CHECK(nmi(one, one) == 1.0);
  const std::vector<int> split{0, 1, 1};
  CHECK(nmi(one, split) == 0.0);

  const std::vector<int> truth{0, 0, 1, 1};
  const std::vector<int> pred{0, 0, 0, 1};
  const double ht = std::log(2.0);
  const double hp = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  const double mi = 0.5 * std::log(2.0 * 4.0 / (3.0 * 2.0)) + 0.25 * std::log(1.0 * 4.0 / (3.0 * 2.0)) +
                    0.25 * std::log(1.0 * 4.0 / (1.0 * 2.0));
  CHECK(nmi(pred, truth) == doctest::Approx(2.0 * mi / (hp + ht)).epsilon(1e-14));
}

TEST_CASE("nmi: independent partitions score near zero") {
  std::mt19937_64 rng(4);
  const auto a = random_labels(10000, 5, rng);
  const auto b = random_labels(10000, 7, rng);
  CHECK(nmi(a, b) <= 0.05);
}

TEST_CASE("ari: examples") {
  const std::vector<int> t{0, 0, 1, 1, 2};
  CHECK(ari(t, t) == 1.0);
  const std::vector<int> one(6, 0);
  std::vector<int> singletons(6);
  std::iota(singletons.begin(), singletons.end(), 0);
  CHECK(ari(one, singletons) == 0.0);
  const std::vector<int> single{0};
  CHECK_THROWS_AS(ari(single, single), DomainError);
}

TEST_CASE("ari: matches pair enumeration for every random instance with N <= 8") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + trial % 7;
    const auto pred = random_labels(n, 1 + trial % 4, rng);
    const auto truth = random_labels(n, 1 + (trial / 4) % 4, rng);
    CHECK(std::abs(ari(pred, truth) - oracle::brute_ari(pred, truth)) <= 1e-12);
  }
}

TEST_CASE("silhouette: examples") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.1);
  RowMatrix rows(100, 2);
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    const double c = i < 50 ? 0.0 : 10.0;
    rows(i, 0) = c + g(rng);
    rows(i, 1) = g(rng);
    labels.push_back(i < 50 ? 0 : 1);
  }
  const FeatureMatrix x(rows);
  CHECK(silhouette(x, labels) >= 0.95);

  // A singleton cluster contributes 0: compare with the same set minus that point.
  RowMatrix tiny(5, 1);
  tiny << 0.0, 0.1, 0.2, 5.0, 20.0;
  const std::vector<int> lab{0, 0, 0, 1, 2};
  const double s = silhouette(FeatureMatrix(tiny), lab);
  CHECK(s == doctest::Approx(oracle::direct_silhouette(tiny, lab)).epsilon(1e-12));
  const std::vector<int> one(5, 0);
  CHECK_THROWS_AS(silhouette(FeatureMatrix(tiny), one), DomainError);
}

TEST_CASE("silhouette: singleton point contributes exactly zero") {
  RowMatrix pts(3, 1);
  pts << 0.0, 1.0, 10.0;
  const std::vector<int> lab{0, 0, 1};
  // s(0) = s(1) = (b - a)/max(a, b) with a = 1; point 2 is alone.
  const double s0 = (10.0 - 1.0) / 10.0;
  const double s1 = (9.0 - 1.0) / 9.0;
  CHECK(silhouette(FeatureMatrix(pts), lab) == doctest::Approx((s0 + s1 + 0.0) / 3.0).epsilon(1e-14));
}

TEST_CASE("silhouette: matches the direct O(N^2) formula and is thread-independent") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 49;
    RowMatrix rows(n, 3);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = g(rng);
    auto lab = random_labels(n, 2 + trial % 4, rng);
    lab[0] = 0;
    lab[1] = 1;
    const FeatureMatrix x(rows);
    const double s = silhouette(x, lab);
    CHECK(std::abs(s - oracle::direct_silhouette(rows, lab)) <= 1e-12);
    CHECK(silhouette(x, lab, 4) == s);
  }
}

TEST_CASE("property: metrics are invariant under label bijections and stay in range") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 20 + trial;
    const int k = 2 + trial % 5;
    auto pred = random_labels(n, k, rng);
    pred[0] = 0;
    pred[1] = 1;
    const auto truth = random_labels(n, 2 + trial % 3, rng);
    RowMatrix rows(n, 2);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = g(rng);
    const FeatureMatrix x(rows);
    const auto perm = random_perm(k, rng);
    const auto relabeled = oracle::relabel(pred, perm);
    const double acc = clustering_accuracy(pred, truth);
    const double nm = nmi(pred, truth);
    const double ar = ari(pred, truth);
    const double si = silhouette(x, pred);
    CHECK(clustering_accuracy(relabeled, truth) == acc);
    CHECK(nmi(relabeled, truth) == doctest::Approx(nm).epsilon(1e-12));
    CHECK(ari(relabeled, truth) == doctest::Approx(ar).epsilon(1e-12));
    CHECK(silhouette(x, relabeled) == doctest::Approx(si).epsilon(1e-12));
    CHECK((acc >= 0.0 && acc <= 1.0));
    CHECK((nm >= 0.0 && nm <= 1.0));
    CHECK((ar >= -1.0 && ar <= 1.0));
    CHECK((si >= -1.0 && si <= 1.0));
  }
}
