#include "npclust/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace npc {

double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("log_gamma: argument must be positive and finite, got " + std::to_string(x));
  }
  return std::lgamma(x);
}

double multivariate_log_gamma(int d, double x) {
  if (d < 1) throw DomainError("multivariate_log_gamma: dimension must be positive");
  if (!(x > 0.5 * (d - 1))) {
    throw DomainError("multivariate_log_gamma: need x > (d-1)/2");
  }
  double acc = 0.25 * d * (d - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= d; ++j) acc += log_gamma(x + 0.5 * (1 - j));
  return acc;
}

CholeskyResult cholesky_logdet(const Matrix& m) {
  if (m.rows() != m.cols()) throw DomainError("cholesky_logdet: matrix is not square");
  const Eigen::Index n = m.rows();
  Matrix l = Matrix::Zero(n, n);
  double logdet = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (Eigen::Index p = 0; p < j; ++p) diag -= l(j, p) * l(j, p);
    if (!(diag > 0.0) || !std::isfinite(diag)) {
      throw FactorizationError(static_cast<std::size_t>(j),
                               "matrix is not positive definite (pivot " + std::to_string(j) + ")");
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    logdet += 2.0 * std::log(ljj);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (Eigen::Index p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
      l(i, j) = s / ljj;
    }
  }
  return {std::move(l), logdet};
}

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > rel_tol * scale) return false;
  return true;
}

SpdMatrix::SpdMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() == 0) throw DomainError("SpdMatrix: empty matrix");
  if (!is_symmetric(m_)) throw DomainError("SpdMatrix: matrix is not symmetric");
  auto [l, ld] = cholesky_logdet(m_);
  chol_ = std::move(l);
  logdet_ = ld;
}

SpdMatrix SpdMatrix::identity(int d, double scale) {
  return SpdMatrix(Matrix::Identity(d, d) * scale);
}

double SpdMatrix::mahalanobis_sq(const Eigen::Ref<const Vector>& diff) const {
  const Vector y = chol_.triangularView<Eigen::Lower>().solve(diff);
  return y.squaredNorm();
}

double gaussian_logpdf(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu,
                       const SpdMatrix& sigma) {
  if (x.size() != mu.size() || x.size() != sigma.dim()) {
    throw DomainError("gaussian_logpdf: dimension mismatch");
  }
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * sigma.logdet() -
         0.5 * sigma.mahalanobis_sq(x - mu);
}

double gaussian_logpdf(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu,
                       const Matrix& sigma) {
  if (x.size() != mu.size() || x.size() != sigma.rows()) {
    throw DomainError("gaussian_logpdf: dimension mismatch");
  }
  return gaussian_logpdf(x, mu, SpdMatrix(sigma));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace npc
