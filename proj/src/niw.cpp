#include "npclust/niw.hpp"

#include <cmath>
#include <numbers>

namespace npc {

SufficientStats SufficientStats::zero(int d) {
  return {0.0, Vector::Zero(d), Matrix::Zero(d, d)};
}

SufficientStats& SufficientStats::operator+=(const SufficientStats& other) {
  nw += other.nw;
  sum_x += other.sum_x;
  sum_xxt += other.sum_xxt;
  return *this;
}

SufficientStats accumulate_stats(const FeatureMatrix& points, std::span<const double> weights) {
  if (static_cast<Eigen::Index>(weights.size()) != points.n()) {
    throw DomainError("accumulate_stats: weight count does not match point count");
  }
  const int d = static_cast<int>(points.d());
  auto stats = SufficientStats::zero(d);
  for (Eigen::Index i = 0; i < points.n(); ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w < 0.0 || !std::isfinite(w)) throw DomainError("accumulate_stats: negative or non-finite weight");
    if (w == 0.0) continue;
    const Vector x = points.row(i).transpose();
    stats.nw += w;
    stats.sum_x += w * x;
    stats.sum_xxt.selfadjointView<Eigen::Lower>().rankUpdate(x, w);
  }
  stats.sum_xxt = stats.sum_xxt.selfadjointView<Eigen::Lower>();
  return stats;
}

SufficientStats accumulate_stats(const FeatureMatrix& points, std::span<const int> indices) {
  const int d = static_cast<int>(points.d());
  auto stats = SufficientStats::zero(d);
  for (int i : indices) {
    const Vector x = points.row(i).transpose();
    stats.nw += 1.0;
    stats.sum_x += x;
    stats.sum_xxt.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
  }
  stats.sum_xxt = stats.sum_xxt.selfadjointView<Eigen::Lower>();
  return stats;
}

Matrix repair_spd(const Matrix& m) {
  Matrix sym = 0.5 * (m + m.transpose());
  try {
    cholesky_logdet(sym);
    return sym;
  } catch (const FactorizationError&) {
  }
  const double d = static_cast<double>(sym.rows());
  double jitter = 1e-6 * std::abs(sym.trace()) / d;
  if (!(jitter > 0.0)) jitter = 1e-6;
  for (int attempt = 0;; ++attempt) {
    Matrix trial = sym + jitter * Matrix::Identity(sym.rows(), sym.cols());
    try {
      cholesky_logdet(trial);
      return trial;
    } catch (const FactorizationError&) {
      if (attempt == 3) throw;
    }
    jitter *= 10.0;
  }
}

NIWPosterior niw_posterior(const NIWHyper& prior, const SufficientStats& stats) {
  if (stats.dim() != prior.dim()) throw DomainError("niw_posterior: dimension mismatch");
  if (stats.nw == 0.0) return {prior.kappa, prior.m, prior.nu, prior.psi};
  NIWPosterior post;
  post.kappa_star = prior.kappa + stats.nw;
  post.m_star = (prior.kappa * prior.m + stats.sum_x) / post.kappa_star;
  post.nu_star = prior.nu + stats.nw;
  const Matrix scatter = prior.nu * prior.psi + prior.kappa * prior.m * prior.m.transpose() + stats.sum_xxt -
                         post.kappa_star * post.m_star * post.m_star.transpose();
  post.psi_star = repair_spd(scatter / post.nu_star);
  return post;
}

NIWHyper as_prior(const NIWPosterior& post, double alpha) {
  return {post.m_star, post.kappa_star, post.nu_star, post.psi_star, alpha};
}

double log_marginal(const SufficientStats& stats, const NIWHyper& prior) {
  const double n = stats.nw;
  if (n < 0.0 || std::abs(n - std::round(n)) > 1e-9) {
    throw DomainError("log_marginal: statistics must come from a hard-assigned point set");
  }
  if (n == 0.0) return 0.0;
  const int d = prior.dim();
  const auto post = niw_posterior(prior, stats);
  const double logdet_prior = cholesky_logdet(prior.nu * prior.psi).logdet;
  const double logdet_post = cholesky_logdet(post.nu_star * post.psi_star).logdet;
  return -0.5 * n * d * std::log(std::numbers::pi) + multivariate_log_gamma(d, 0.5 * post.nu_star) -
         multivariate_log_gamma(d, 0.5 * prior.nu) + 0.5 * prior.nu * logdet_prior -
         0.5 * post.nu_star * logdet_post + 0.5 * d * std::log(prior.kappa / post.kappa_star);
}

GaussianComponent weighted_map_estimate(const SufficientStats& stats, const NIWHyper& prior, double total_n) {
  const auto post = niw_posterior(prior, stats);
  const double d = static_cast<double>(prior.dim());
  Matrix sigma = post.nu_star * post.psi_star / (post.nu_star + d + 1.0);
  return {post.m_star, SpdMatrix(repair_spd(sigma)), stats.nw / total_n};
}

}  // namespace npc
