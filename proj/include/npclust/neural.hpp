#pragma once

// One-hidden-layer soft-assignment network with a resizable softmax output
// layer, trained with hand-derived gradients and Adam.
//
//   r = softmax(W2^T relu(W1^T x + b1) + b2)
//
// Batches are row-major (one point per row), so internally the forward pass is
// H = relu(X W1 + 1 b1^T), Z = H W2 + 1 b2^T.

#include <cstdint>
#include <random>

#include "npclust/model.hpp"

namespace npc {

// KL targets are clamped below at this value before taking logs.
inline constexpr double kTargetFloor = 1e-10;

struct NetParams {
  Matrix w1;  // d_in x h
  Vector b1;  // h
  Matrix w2;  // h x k_out
  Vector b2;  // k_out

  static NetParams zeros_like(const NetParams& p);
  void set_zero();
};

struct LossGrad {
  double loss = 0.0;
  NetParams grads;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AssignNet {
 public:
  AssignNet() = default;

  // Xavier-uniform weights, zero biases; deterministic per seed.
  static AssignNet init(int d_in, int hidden, int k_out, std::uint64_t seed);

  int d_in() const { return static_cast<int>(params_.w1.rows()); }
  int hidden() const { return static_cast<int>(params_.w1.cols()); }
  int k_out() const { return static_cast<int>(params_.w2.cols()); }

  const NetParams& params() const { return params_; }
  NetParams& params() { return params_; }
  const NetParams& first_moment() const { return m_; }
  const NetParams& second_moment() const { return v_; }
  long step_count() const { return t_; }

  RowMatrix logits(const RowMatrix& batch) const;
  Responsibilities forward(const RowMatrix& batch) const;

  // sum_i KL(r_i || target_i), target clamped below at 1e-10.
  LossGrad kl_cluster_loss_grad(const RowMatrix& batch, const Responsibilities& target) const;

  // sum_i sum_j r_ij ||x_i - mu_j||^2 with the means held constant. Requires k_out == 2.
  LossGrad isotropic_subcluster_loss_grad(const RowMatrix& batch, const Vector& mean0,
                                          const Vector& mean1) const;

  void adam_step(const NetParams& grads, double lr, const AdamConfig& cfg = {});

  // Appends a copy of output unit k (weights, bias and optimizer moments).
  // Optional Gaussian noise of the given stddev is added to the copy.
  void duplicate_output_unit(int k, double noise_scale = 0.0, std::mt19937_64* rng = nullptr);
  void remove_output_unit(int k);

 private:
  struct Activations {
    RowMatrix pre;     // X W1 + b1
    RowMatrix hidden;  // relu(pre)
    RowMatrix logits;
  };
  Activations run(const RowMatrix& batch) const;
  NetParams backprop(const RowMatrix& batch, const Activations& act, const RowMatrix& dlogits) const;

  NetParams params_;
  NetParams m_;
  NetParams v_;
  long t_ = 0;
};

// Row-wise softmax of a logit matrix.
Responsibilities softmax_rows(const RowMatrix& logits);

}  // namespace npc
