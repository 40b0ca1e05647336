#include "npclust/neural.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace npc {

namespace {

RowMatrix log_softmax_rows(const RowMatrix& logits) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

Matrix drop_column(const Matrix& m, int k) {
  Matrix out(m.rows(), m.cols() - 1);
  out.leftCols(k) = m.leftCols(k);
  out.rightCols(m.cols() - k - 1) = m.rightCols(m.cols() - k - 1);
  return out;
}

Vector drop_entry(const Vector& v, int k) {
  Vector out(v.size() - 1);
  out.head(k) = v.head(k);
  out.tail(v.size() - k - 1) = v.tail(v.size() - k - 1);
  return out;
}

Matrix append_column(const Matrix& m, const Vector& col) {
  Matrix out(m.rows(), m.cols() + 1);
  out.leftCols(m.cols()) = m;
  out.col(m.cols()) = col;
  return out;
}

Vector append_entry(const Vector& v, double x) {
  Vector out(v.size() + 1);
  out.head(v.size()) = v;
  out(v.size()) = x;
  return out;
}

}  // namespace

NetParams NetParams::zeros_like(const NetParams& p) {
  return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Vector::Zero(p.b1.size()),
          Matrix::Zero(p.w2.rows(), p.w2.cols()), Vector::Zero(p.b2.size())};
}

void NetParams::set_zero() {
  w1.setZero();
  b1.setZero();
  w2.setZero();
  b2.setZero();
}

Responsibilities softmax_rows(const RowMatrix& logits) {
  return log_softmax_rows(logits).array().exp().matrix();
}

AssignNet AssignNet::init(int d_in, int hidden, int k_out, std::uint64_t seed) {
  if (d_in < 1 || hidden < 1 || k_out < 1) throw DomainError("AssignNet::init: dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& w) {
    const double scale = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  };
  AssignNet net;
  net.params_.w1.resize(d_in, hidden);
  net.params_.w2.resize(hidden, k_out);
  fill(net.params_.w1);
  fill(net.params_.w2);
  net.params_.b1 = Vector::Zero(hidden);
  net.params_.b2 = Vector::Zero(k_out);
  net.m_ = NetParams::zeros_like(net.params_);
  net.v_ = NetParams::zeros_like(net.params_);
  return net;
}

AssignNet::Activations AssignNet::run(const RowMatrix& batch) const {
  if (batch.cols() != d_in()) throw DomainError("AssignNet: input dimension mismatch");
  Activations act;
  act.pre = batch * params_.w1;
  act.pre.rowwise() += params_.b1.transpose();
  act.hidden = act.pre.cwiseMax(0.0);
  act.logits = act.hidden * params_.w2;
  act.logits.rowwise() += params_.b2.transpose();
  return act;
}

RowMatrix AssignNet::logits(const RowMatrix& batch) const { return run(batch).logits; }

Responsibilities AssignNet::forward(const RowMatrix& batch) const { return softmax_rows(logits(batch)); }

NetParams AssignNet::backprop(const RowMatrix& batch, const Activations& act, const RowMatrix& dlogits) const {
  NetParams g;
  g.w2 = act.hidden.transpose() * dlogits;
  g.b2 = dlogits.colwise().sum().transpose();
  RowMatrix dpre = dlogits * params_.w2.transpose();
  dpre = (act.pre.array() > 0.0).select(dpre, 0.0);
  g.w1 = batch.transpose() * dpre;
  g.b1 = dpre.colwise().sum().transpose();
  return g;
}

LossGrad AssignNet::kl_cluster_loss_grad(const RowMatrix& batch, const Responsibilities& target) const {
  if (target.cols() != k_out()) throw DomainError("kl_cluster_loss_grad: target K does not match the net");
  if (target.rows() != batch.rows()) throw DomainError("kl_cluster_loss_grad: target rows do not match batch");
  const auto act = run(batch);
  const RowMatrix logr = log_softmax_rows(act.logits);
  const RowMatrix r = logr.array().exp().matrix();
  const RowMatrix logt = target.array().max(kTargetFloor).log().matrix();
  // dL_i/dz_j = r_j (log r_j - log t_j - L_i)
  const RowMatrix diff = logr - logt;
  const Vector per_point = (r.array() * diff.array()).rowwise().sum();
  RowMatrix dlogits = diff;
  dlogits.colwise() -= per_point;
  dlogits = (r.array() * dlogits.array()).matrix();
  return {per_point.sum(), backprop(batch, act, dlogits)};
}

LossGrad AssignNet::isotropic_subcluster_loss_grad(const RowMatrix& batch, const Vector& mean0,
                                                   const Vector& mean1) const {
  if (k_out() != 2) throw DomainError("isotropic_subcluster_loss_grad: net must have two outputs");
  const auto act = run(batch);
  const RowMatrix r = softmax_rows(act.logits);
  RowMatrix dist(batch.rows(), 2);
  dist.col(0) = (batch.rowwise() - mean0.transpose()).rowwise().squaredNorm();
  dist.col(1) = (batch.rowwise() - mean1.transpose()).rowwise().squaredNorm();
  // dL_i/dz_j = r_j (D_j - sum_l r_l D_l)
  const Vector per_point = (r.array() * dist.array()).rowwise().sum();
  RowMatrix dlogits = dist;
  dlogits.colwise() -= per_point;
  dlogits = (r.array() * dlogits.array()).matrix();
  return {per_point.sum(), backprop(batch, act, dlogits)};
}

void AssignNet::adam_step(const NetParams& grads, double lr, const AdamConfig& cfg) {
  if (grads.w1.rows() != params_.w1.rows() || grads.w1.cols() != params_.w1.cols() ||
      grads.w2.rows() != params_.w2.rows() || grads.w2.cols() != params_.w2.cols() ||
      grads.b1.size() != params_.b1.size() || grads.b2.size() != params_.b2.size()) {
    throw DomainError("adam_step: gradient shapes do not match parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  };
  update(params_.w1, m_.w1, v_.w1, grads.w1);
  update(params_.b1, m_.b1, v_.b1, grads.b1);
  update(params_.w2, m_.w2, v_.w2, grads.w2);
  update(params_.b2, m_.b2, v_.b2, grads.b2);
}

void AssignNet::duplicate_output_unit(int k, double noise_scale, std::mt19937_64* rng) {
  if (k < 0 || k >= k_out()) throw std::out_of_range("duplicate_output_unit: unit index out of range");
  Vector col = params_.w2.col(k);
  double bias = params_.b2(k);
  if (noise_scale > 0.0) {
    if (rng == nullptr) throw DomainError("duplicate_output_unit: noise requires a random generator");
    std::normal_distribution<double> noise(0.0, noise_scale);
    for (Eigen::Index i = 0; i < col.size(); ++i) col(i) += noise(*rng);
    bias += noise(*rng);
  }
  params_.w2 = append_column(params_.w2, col);
  params_.b2 = append_entry(params_.b2, bias);
  m_.w2 = append_column(m_.w2, m_.w2.col(k));
  m_.b2 = append_entry(m_.b2, m_.b2(k));
  v_.w2 = append_column(v_.w2, v_.w2.col(k));
  v_.b2 = append_entry(v_.b2, v_.b2(k));
}

void AssignNet::remove_output_unit(int k) {
  if (k < 0 || k >= k_out()) throw std::out_of_range("remove_output_unit: unit index out of range");
  if (k_out() == 1) throw DomainError("remove_output_unit: cannot remove the last output unit");
  params_.w2 = drop_column(params_.w2, k);
  params_.b2 = drop_entry(params_.b2, k);
  m_.w2 = drop_column(m_.w2, k);
  m_.b2 = drop_entry(m_.b2, k);
  v_.w2 = drop_column(v_.w2, k);
  v_.b2 = drop_entry(v_.b2, k);
}

}  // namespace npc
