#pragma once

// Conjugate Normal-Inverse-Wishart algebra over (soft-)weighted sufficient
// statistics.
//
// Prior hyperparameters (m, kappa, nu, psi) use the convention in which the
// inverse-Wishart scale matrix is nu * psi. The posterior after observing
// statistics (n, sum x, sum x x^T) is
//
//   kappa* = kappa + n
//   m*     = (kappa m + sum x) / kappa*
//   nu*    = nu + n
//   psi*   = (nu psi + kappa m m^T + sum x x^T - kappa* m* m*^T) / nu*
//
// and the marginal likelihood of a hard-assigned point set is
//
//   pi^{-nd/2} Gamma_d(nu*/2)/Gamma_d(nu/2) |nu psi|^{nu/2} / |nu* psi*|^{nu*/2} (kappa/kappa*)^{d/2}

#include <span>

#include "npclust/model.hpp"

namespace npc {

struct SufficientStats {
  double nw = 0.0;
  Vector sum_x;
  Matrix sum_xxt;

  static SufficientStats zero(int d);
  int dim() const { return static_cast<int>(sum_x.size()); }

  SufficientStats& operator+=(const SufficientStats& other);
  friend SufficientStats operator+(SufficientStats a, const SufficientStats& b) { return a += b; }
};

SufficientStats accumulate_stats(const FeatureMatrix& points, std::span<const double> weights);
// Hard-assignment statistics over the listed rows.
SufficientStats accumulate_stats(const FeatureMatrix& points, std::span<const int> indices);

struct NIWPosterior {
  double kappa_star;
  Vector m_star;
  double nu_star;
  Matrix psi_star;
};

NIWPosterior niw_posterior(const NIWHyper& prior, const SufficientStats& stats);

// The posterior viewed as a prior for further conjugate updates.
NIWHyper as_prior(const NIWPosterior& post, double alpha);

// Symmetrize, then add jitter 1e-6 * trace/d * I (x10, up to three escalations)
// until the Cholesky factorization succeeds.
Matrix repair_spd(const Matrix& m);

// Log marginal likelihood of a hard-assigned point set. stats.nw must be an
// integer count.
double log_marginal(const SufficientStats& stats, const NIWHyper& prior);

// Weighted MAP estimate: mean m*, covariance nu* psi* / (nu* + d + 1) and
// unnormalized weight nw / total_n.
GaussianComponent weighted_map_estimate(const SufficientStats& stats, const NIWHyper& prior,
                                        double total_n);

}  // namespace npc
