#pragma once

// Scalar and dense-matrix primitives used by the Bayesian algebra.
// Everything probabilistic is handled in log space.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace npc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised when a matrix that should be positive definite is not.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(std::size_t pivot, const std::string& what)
      : std::runtime_error(what), pivot_(pivot) {}
  std::size_t pivot() const { return pivot_; }

 private:
  std::size_t pivot_;
};

double log_gamma(double x);

// ln Gamma_d(x) = d(d-1)/4 ln(pi) + sum_{j=1..d} ln Gamma(x + (1-j)/2)
double multivariate_log_gamma(int d, double x);

struct CholeskyResult {
  Matrix factor;  // lower triangular L with L L^T = M
  double logdet;
};

// Plain (unpivoted) Cholesky. Throws FactorizationError with the index of the
// first non-positive pivot.
CholeskyResult cholesky_logdet(const Matrix& m);

// Symmetric positive-definite matrix with its factorization cached.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(Matrix m);

  static SpdMatrix identity(int d, double scale = 1.0);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  const Matrix& factor() const { return chol_; }
  double logdet() const { return logdet_; }

  // (x - mu)^T M^{-1} (x - mu) via a triangular solve.
  double mahalanobis_sq(const Eigen::Ref<const Vector>& diff) const;

 private:
  Matrix m_;
  Matrix chol_;
  double logdet_ = 0.0;
};

double gaussian_logpdf(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu,
                       const SpdMatrix& sigma);
double gaussian_logpdf(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu,
                       const Matrix& sigma);

double log_sum_exp(std::span<const double> values);

bool is_symmetric(const Matrix& m, double rel_tol = 1e-10);

}  // namespace npc
