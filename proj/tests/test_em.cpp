#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "npclust/data_io.hpp"
#include "npclust/em.hpp"
#include "npclust/metrics.hpp"
#include "oracles.hpp"

using namespace npc;

namespace {

NIWHyper weak_prior(const FeatureMatrix& x, double psi = 0.005) {
  const int d = static_cast<int>(x.d());
  return NIWHyper{x.mean(), 1e-4, d + 2.0, Matrix::Identity(d, d) * psi, 10.0};
}

// Two isotropic blobs at -c and +c along every axis.
GeneratedData two_blobs(int n_each, int d, double c, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  RowMatrix rows(2 * n_each, d);
  std::vector<int> labels;
  for (int i = 0; i < 2 * n_each; ++i) {
    const int lab = i < n_each ? 0 : 1;
    for (int j = 0; j < d; ++j) rows(i, j) = (lab == 0 ? -c : c) + g(rng);
    labels.push_back(lab);
  }
  return {FeatureMatrix(rows), labels, {}};
}

std::vector<int> members_of(std::span<const int> z, int k) {
  std::vector<int> out;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i] == k) out.push_back(static_cast<int>(i));
  return out;
}

MixtureState state_from(const std::vector<Vector>& mus, const std::vector<Matrix>& sigmas,
                        const std::vector<double>& pis) {
  MixtureState s;
  for (std::size_t k = 0; k < mus.size(); ++k) s.clusters.push_back({mus[k], SpdMatrix(sigmas[k]), pis[k]});
  return s;
}

}  // namespace

TEST_CASE("e_step_targets: examples") {
  const auto data = two_blobs(10, 2, 1.0, 0.5, 1).data;
  const auto one = state_from({Vector::Zero(2)}, {Matrix::Identity(2, 2)}, {1.0});
  const auto r1 = e_step_targets(data, one);
  for (Eigen::Index i = 0; i < r1.rows(); ++i) CHECK(r1(i, 0) == 1.0);

  RowMatrix origin = RowMatrix::Zero(1, 1);
  const auto sym = state_from({Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)},
                              {Matrix::Identity(1, 1), Matrix::Identity(1, 1)}, {0.5, 0.5});
  const auto r2 = e_step_targets(FeatureMatrix(origin), sym);
  CHECK(r2(0, 0) == 0.5);
  CHECK(r2(0, 1) == 0.5);
}

TEST_CASE("e_step_targets: matches the linear-space oracle on a random K = 3 mixture") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  RowMatrix rows(20, 2);
  for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = 2.0 * g(rng);
  std::vector<Vector> mus;
  std::vector<Matrix> sigmas;
  for (int k = 0; k < 3; ++k) {
    mus.push_back((Vector(2) << g(rng), g(rng)).finished());
    Matrix b(2, 2);
    b << g(rng), g(rng), g(rng), g(rng);
    sigmas.push_back(b * b.transpose() + Matrix::Identity(2, 2));
  }
  const std::vector<double> pis{0.2, 0.5, 0.3};
  const auto r = e_step_targets(FeatureMatrix(rows), state_from(mus, sigmas, pis));
  const auto ref = oracle::naive_responsibilities(rows, mus, sigmas, pis);
  CHECK((r - ref).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(rows_stochastic(r));
}

TEST_CASE("e_step_targets: all -inf rows fall back to uniform and flag") {
  auto s = state_from({Vector::Zero(1), Vector::Constant(1, 3.0)}, {Matrix::Identity(1, 1), Matrix::Identity(1, 1)},
                      {0.0, 0.0});
  RowMatrix x = RowMatrix::Zero(2, 1);
  bool degenerate = false;
  const auto r = e_step_targets(FeatureMatrix(x), s, &degenerate);
  CHECK(degenerate);
  CHECK(r(0, 0) == 0.5);
  CHECK(rows_stochastic(r));
}

TEST_CASE("property: e_step_targets rows are stochastic even far from every component") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1e4);
  RowMatrix x(200, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  const auto s = state_from({Vector::Zero(2), Vector::Constant(2, 1.0)},
                            {Matrix::Identity(2, 2) * 1e-4, Matrix::Identity(2, 2) * 1e-3}, {0.5, 0.5});
  CHECK(rows_stochastic(e_step_targets(FeatureMatrix(x), s)));
}

TEST_CASE("m_step: one-hot truth labels recover blob centers") {
  const auto blobs = two_blobs(2000, 2, 5.0, 0.5, 4);
  const auto comps = m_step(blobs.data, one_hot(blobs.labels, 2), weak_prior(blobs.data));
  CHECK((comps[0].mu - Vector::Constant(2, -5.0)).norm() <= 0.05);
  CHECK((comps[1].mu - Vector::Constant(2, 5.0)).norm() <= 0.05);
  CHECK(comps[0].pi == doctest::Approx(0.5));
}

TEST_CASE("m_step: uniform responsibilities give identical components") {
  const auto blobs = two_blobs(50, 2, 3.0, 1.0, 5);
  const auto comps = m_step(blobs.data, Matrix::Constant(100, 2, 0.5), weak_prior(blobs.data));
  CHECK((comps[0].mu - comps[1].mu).norm() == 0.0);
  CHECK((comps[0].mu - blobs.data.mean()).norm() <= 1e-6);
  CHECK(comps[0].pi == 0.5);
  CHECK(comps[1].pi == 0.5);
}

TEST_CASE("property: m_step with one-hot r equals the hard-assignment MAP") {
  const auto blobs = two_blobs(100, 3, 2.0, 1.0, 6);
  std::mt19937_64 rng(6);
  std::vector<int> z(200);
  for (auto& v : z) v = static_cast<int>(rng() % 3);
  const auto prior = weak_prior(blobs.data);
  const auto comps = m_step(blobs.data, one_hot(z, 3), prior);
  for (int k = 0; k < 3; ++k) {
    const auto idx = members_of(z, k);
    const auto ref = weighted_map_estimate(accumulate_stats(blobs.data, idx), prior, 200.0);
    CHECK(comps[static_cast<std::size_t>(k)].mu == ref.mu);
    CHECK(comps[static_cast<std::size_t>(k)].sigma.matrix() == ref.sigma.matrix());
    CHECK(comps[static_cast<std::size_t>(k)].pi == doctest::Approx(ref.pi).epsilon(1e-14));
  }
}

TEST_CASE("m_step: fixed point of converged classical EM") {
  const auto gen = generate_gmm(3, 600, 2, 4.0, std::nullopt, 7);
  const auto prior = weak_prior(gen.data);
  // tol < 0 disables the early stop.
  const auto res = em_oracle(gen.data, 3, prior, 500, 7, -1.0);
  const auto next = em_oracle(gen.data, 3, prior, 501, 7, -1.0);
  const auto again = m_step(gen.data, e_step_targets(gen.data, res.state), prior);
  for (int k = 0; k < 3; ++k) {
    CHECK(next.state.clusters[static_cast<std::size_t>(k)].mu == again[static_cast<std::size_t>(k)].mu);
  }
  for (int k = 0; k < 3; ++k) {
    const auto& a = res.state.clusters[static_cast<std::size_t>(k)];
    const auto& b = again[static_cast<std::size_t>(k)];
    CHECK((a.mu - b.mu).norm() <= 1e-8);
    CHECK((a.sigma.matrix() - b.sigma.matrix()).norm() <= 1e-8);
    CHECK(std::abs(a.pi - b.pi) <= 1e-8);
  }
}

TEST_CASE("m_step: an empty column gets the prior mode and the weight floor") {
  const auto blobs = two_blobs(20, 2, 2.0, 1.0, 8);
  Matrix r = Matrix::Zero(40, 2);
  r.col(0).setOnes();
  const auto prior = weak_prior(blobs.data);
  const auto comps = m_step(blobs.data, r, prior);
  const auto mode = weighted_map_estimate(SufficientStats::zero(2), prior, 1.0);
  CHECK(comps[1].mu == mode.mu);
  CHECK(comps[1].sigma.matrix() == mode.sigma.matrix());
  CHECK(comps[1].pi == doctest::Approx(kWeightFloor).epsilon(1e-6));
  CHECK(comps[0].pi + comps[1].pi == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("subcluster_m_step: examples") {
  const auto blobs = two_blobs(200, 2, 4.0, 0.3, 9);
  const auto prior = weak_prior(blobs.data);

  Matrix all0 = Matrix::Zero(400, 2);
  all0.col(0).setOnes();
  const auto p0 = subcluster_m_step(blobs.data, all0, prior);
  const auto mode = weighted_map_estimate(SufficientStats::zero(2), prior, 1.0);
  CHECK(p0[1].mu == mode.mu);
  CHECK(p0[1].pi == doctest::Approx(1e-12).epsilon(1e-6));
  CHECK(p0[0].pi == doctest::Approx(1.0 - 1e-12).epsilon(1e-15));
  CHECK(p0[0].pi + p0[1].pi == doctest::Approx(1.0).epsilon(1e-15));

  const auto half = subcluster_m_step(blobs.data, Matrix::Constant(400, 2, 0.5), prior);
  CHECK(half[0].mu == half[1].mu);
  CHECK(half[0].sigma.matrix() == half[1].sigma.matrix());
  CHECK(half[0].pi == half[1].pi);

  const auto km = kmeans(blobs.data, 2, 3);
  const auto pair = subcluster_m_step(blobs.data, one_hot(km, 2), prior);
  for (const auto& c : pair) {
    const double target = c.mu(0) < 0 ? -4.0 : 4.0;
    CHECK((c.mu - Vector::Constant(2, target)).norm() <= 0.1);
  }
  CHECK_THROWS_AS(subcluster_m_step(blobs.data, Matrix::Constant(400, 3, 1.0 / 3), prior), DomainError);
}

TEST_CASE("kmeans: examples") {
  const auto blobs = two_blobs(100, 2, 10.0, 0.1, 10);
  const auto one = kmeans(blobs.data, 1, 1);
  CHECK(std::all_of(one.begin(), one.end(), [](int v) { return v == 0; }));
  CHECK(clustering_accuracy(kmeans(blobs.data, 2, 5), blobs.labels) == 1.0);

  RowMatrix rows(6, 1);
  rows << 0, 1, 2, 3, 4, 5;
  const auto each = kmeans(FeatureMatrix(rows), 6, 2);
  CHECK(count_distinct(each) == 6);
  CHECK_THROWS_AS(kmeans(FeatureMatrix(rows), 7, 2), DomainError);
  CHECK_THROWS_AS(kmeans(FeatureMatrix(rows), 0, 2), DomainError);
}

TEST_CASE("kmeans: deterministic per seed, duplicate points never leave empty clusters") {
  const auto gen = generate_gmm(4, 500, 3, 4.0, std::nullopt, 11);
  CHECK(kmeans(gen.data, 4, 21) == kmeans(gen.data, 4, 21));
  RowMatrix dup = RowMatrix::Zero(10, 2);
  dup.row(9) << 1.0, 1.0;
  const auto z = kmeans(FeatureMatrix(dup), 2, 1);
  CHECK(count_distinct(z) == 2);
}

TEST_CASE("InputScaling: centers and rescales to unit RMS") {
  const auto gen = generate_gmm(3, 300, 2, 5.0, std::nullopt, 12);
  const auto s = InputScaling::fit(gen.data);
  const RowMatrix y = s.apply(gen.data.rows());
  CHECK(y.colwise().mean().norm() <= 1e-12);
  CHECK(std::sqrt(y.squaredNorm() / static_cast<double>(y.size())) == doctest::Approx(1.0).epsilon(1e-12));
  const Vector p = gen.data.row(5).transpose();
  CHECK((s.apply(p) - y.row(5).transpose()).norm() <= 1e-12);
  RowMatrix constant = RowMatrix::Constant(4, 2, 3.0);
  CHECK(InputScaling::fit(FeatureMatrix(constant)).scale == 1.0);
}

TEST_CASE("initialize_model: consistent shapes") {
  const auto gen = generate_gmm(3, 300, 2, 6.0, std::nullopt, 13);
  const auto prior = weak_prior(gen.data);
  const auto model = initialize_model(gen.data, 3, prior, TrainConfig{}, 5);
  CHECK(model.k() == 3);
  CHECK(model.cluster_net.k_out() == 3);
  CHECK(model.sub_nets.size() == 3);
  CHECK(model.state.subclusters.size() == 3);
  CHECK(model.labels.z.size() == 300);
  CHECK_NOTHROW(model.state.check_invariants());
  for (int k = 0; k < 3; ++k) {
    const auto idx = model.members(k);
    int ones = 0;
    for (int i : idx) ones += model.labels.sub[static_cast<std::size_t>(i)];
    CHECK(ones > 0);
    CHECK(ones < static_cast<int>(idx.size()));
  }
}

TEST_CASE("train_epoch_fixed_k: deterministic per (seed, threads)") {
  const auto gen = generate_gmm(4, 800, 2, 6.0, std::nullopt, 14);
  const auto prior = weak_prior(gen.data);
  for (int threads : {1, 3}) {
    TrainConfig cfg;
    cfg.threads = threads;
    auto a = initialize_model(gen.data, 4, prior, cfg, 9);
    auto b = initialize_model(gen.data, 4, prior, cfg, 9);
    for (int e = 0; e < 8; ++e) {
      const auto ra = train_epoch_fixed_k(gen.data, a, prior, cfg, e);
      const auto rb = train_epoch_fixed_k(gen.data, b, prior, cfg, e);
      CHECK(ra.cluster_loss == rb.cluster_loss);
      CHECK(ra.sub_loss == rb.sub_loss);
      CHECK(ra.hard_counts == rb.hard_counts);
      CHECK(ra.target_kl == rb.target_kl);
    }
    CHECK(a.labels.z == b.labels.z);
    CHECK(a.cluster_net.params().w1 == b.cluster_net.params().w1);
  }
}

TEST_CASE("train_epoch_fixed_k: reports are consistent and training makes progress") {
  const auto gen = generate_gmm(3, 1500, 2, 8.0, std::nullopt, 15);
  const auto prior = weak_prior(gen.data);
  TrainConfig cfg;
  auto model = initialize_model(gen.data, 3, prior, cfg, 3);
  std::vector<double> losses;
  for (int e = 0; e < 50; ++e) {
    const auto rep = train_epoch_fixed_k(gen.data, model, prior, cfg, e);
    CHECK(rep.k == 3);
    CHECK(std::accumulate(rep.hard_counts.begin(), rep.hard_counts.end(), 0) == 1500);
    CHECK_NOTHROW(model.state.check_invariants());
    losses.push_back(rep.cluster_loss);
  }
  CHECK(losses.back() < losses.front());
  CHECK(clustering_accuracy(model.labels.z, gen.labels) >= 0.99);
}

TEST_CASE("train_epoch_fixed_k: freeze holds the mixture until the net fits") {
  const auto gen = generate_gmm(3, 600, 2, 8.0, std::nullopt, 16);
  const auto prior = weak_prior(gen.data);
  TrainConfig cfg;
  cfg.freeze_epochs = 3;
  auto model = initialize_model(gen.data, 3, prior, cfg, 1);
  const auto mu0 = model.state.clusters[0].mu;
  for (int e = 0; e < 3; ++e) {
    const auto rep = train_epoch_fixed_k(gen.data, model, prior, cfg, e);
    CHECK(rep.frozen);
    CHECK(model.state.clusters[0].mu == mu0);
  }
  cfg.freeze_epochs = 0;
  auto live = initialize_model(gen.data, 3, prior, cfg, 1);
  CHECK_FALSE(live.frozen());
  CHECK_FALSE(train_epoch_fixed_k(gen.data, live, prior, cfg, 0).frozen);

  // An unreachable KL target with a near-total gain requirement: the freeze
  // ends as soon as the minimum length is served.
  cfg.freeze_epochs = 2;
  cfg.freeze_kl = 0.0;
  cfg.freeze_min_gain = 0.999999;
  auto stalled = initialize_model(gen.data, 3, prior, cfg, 1);
  CHECK(train_epoch_fixed_k(gen.data, stalled, prior, cfg, 0).frozen);
  CHECK(train_epoch_fixed_k(gen.data, stalled, prior, cfg, 1).frozen);
  CHECK_FALSE(train_epoch_fixed_k(gen.data, stalled, prior, cfg, 2).frozen);
  CHECK_FALSE(stalled.frozen());
}

TEST_CASE("em_oracle: monotone trace, single-cluster convergence, blob recovery") {
  const auto gen = generate_gmm(3, 900, 2, 8.0, std::nullopt, 17);
  const auto prior = weak_prior(gen.data);
  const auto res = em_oracle(gen.data, 3, prior, 30, 4);
  for (std::size_t t = 1; t < res.trace.size(); ++t) CHECK(res.trace[t] >= res.trace[t - 1] - 1e-7);
  CHECK(clustering_accuracy(res.labels, gen.labels) >= 0.99);

  const auto single = em_oracle(gen.data, 1, prior, 30, 4);
  CHECK(single.iterations <= 2);
  const auto global = weighted_map_estimate(accumulate_stats(gen.data, std::vector<double>(900, 1.0)), prior, 900.0);
  CHECK((single.state.clusters[0].mu - global.mu).norm() <= 1e-10);
}

TEST_CASE("property: em_oracle trace is monotone across random mixtures") {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    const auto gen = generate_gmm(4, 400, 2, 2.0, std::nullopt, seed);
    const auto res = em_oracle(gen.data, 5, weak_prior(gen.data, 0.05), 60, seed, 0.0);
    for (std::size_t t = 1; t < res.trace.size(); ++t) CHECK(res.trace[t] >= res.trace[t - 1] - 1e-7);
  }
}
