#pragma once

// Fixed-K training: E-step targets, the net-driven M-step, subcluster
// maintenance, K-means initialization and the classical Bayesian EM baseline.

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "npclust/neural.hpp"
#include "npclust/niw.hpp"

namespace npc {

// Floor applied to the weight of a component that received no mass.
inline constexpr double kWeightFloor = 1e-12;

struct TrainConfig {
  int hidden = 50;
  int batch = 128;
  double lr_cluster = 5e-4;
  double lr_sub = 5e-3;
  int threads = 1;
  // After initialization or an accepted split/merge the M-steps are skipped
  // so the nets can fit the new partition: for at least freeze_epochs, then
  // until the mean KL(net || E-step target) per point drops to freeze_kl, but
  // never longer than freeze_max. A freeze also ends once that KL improves by
  // less than the fraction freeze_min_gain over one epoch: a net stuck with an
  // output unit it never selects will not recover by waiting.
  int freeze_epochs = 5;
  double freeze_kl = 0.1;
  int freeze_max = 100;
  double freeze_min_gain = 0.01;
};

// Affine map applied to features before they reach the nets: subtract the
// feature means, divide by the root-mean-square of the centered entries. The
// mixture itself always works in the original coordinates.
struct InputScaling {
  Vector shift;
  double scale = 1.0;

  static InputScaling fit(const FeatureMatrix& data);
  RowMatrix apply(const RowMatrix& x) const;
  Vector apply(const Vector& x) const;
};

// Everything the training loop mutates: mixture parameters, the clustering
// net, one subclustering net per cluster, and the current hard labels.
struct ClusterModel {
  MixtureState state;
  AssignNet cluster_net;
  std::vector<AssignNet> sub_nets;
  HardLabels labels;
  InputScaling input;
  // Per cluster: the next subcluster M-step uses labels.sub as one-hot
  // responsibilities instead of the subclustering net's output.
  std::vector<bool> sub_bootstrap;
  // Epochs spent in the current freeze, or -1 when the M-steps are running.
  int frozen_for = -1;
  double freeze_last_kl = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng;

  int k() const { return state.k(); }
  bool frozen() const { return frozen_for >= 0; }
  void start_freeze() {
    frozen_for = 0;
    freeze_last_kl = std::numeric_limits<double>::infinity();
  }
  // Indices of the points currently hard-assigned to cluster k.
  std::vector<int> members(int k) const;
};

struct EpochReport {
  int epoch = 0;
  double cluster_loss = 0.0;
  double sub_loss = 0.0;
  int k = 0;
  int sub_resets = 0;       // clusters whose collapsed subclusters were re-seeded
  bool frozen = false;      // M-steps skipped this epoch
  double target_kl = 0.0;   // mean KL(net || E-step target) after the net's sweep
  std::vector<int> hard_counts;
};

// r^E_ik proportional to pi_k N(x_i; mu_k, Sigma_k), via log-sum-exp. Rows whose
// log-densities are all -inf become uniform and set *degenerate.
Responsibilities e_step_targets(const FeatureMatrix& data, const MixtureState& state,
                                bool* degenerate = nullptr);

// Weighted MAP per column of r; weights normalized (with a floor for empty columns).
std::vector<GaussianComponent> m_step(const FeatureMatrix& data, const Responsibilities& r,
                                      const NIWHyper& prior);

SubclusterPair subcluster_m_step(const FeatureMatrix& data_k, const Responsibilities& r_sub,
                                 const NIWHyper& prior);

// Subcluster parameters for a cluster with no points: two copies of the prior mode.
SubclusterPair empty_subclusters(const NIWHyper& prior);

// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded at the
// point farthest from its centroid. The best of `restarts` runs (lowest
// within-cluster sum of squares) is returned.
std::vector<int> kmeans(const FeatureMatrix& data, int k, std::uint64_t seed, int iters = 100,
                        int restarts = 10);

Responsibilities one_hot(std::span<const int> labels, int k);

// K-means(init_k) clusters, K-means(2) subclusters, hard weighted MAP
// parameters and freshly initialized nets.
ClusterModel initialize_model(const FeatureMatrix& data, int init_k, const NIWHyper& prior,
                              const TrainConfig& cfg, std::uint64_t seed);

// Runs one randomized K-means(2) on the members of cluster k, writes the result into
// model.labels.sub, sets the subcluster parameters and flags the cluster for a
// bootstrapped first M-step.
void bootstrap_subclusters(const FeatureMatrix& data, ClusterModel& model, int k, const NIWHyper& prior);

// bootstrap_subclusters plus a freshly initialized subclustering net.
void reseed_subclusters(const FeatureMatrix& data, ClusterModel& model, int k, const NIWHyper& prior,
                        const TrainConfig& cfg);

// Sets subcluster labels of cluster k from an explicit 0/1 split of its members.
void bootstrap_subclusters(const FeatureMatrix& data, ClusterModel& model, int k,
                           std::span<const int> members, std::span<const int> sub_of_member,
                           const NIWHyper& prior);

EpochReport train_epoch_fixed_k(const FeatureMatrix& data, ClusterModel& model, const NIWHyper& prior,
                                const TrainConfig& cfg, int epoch);

// Unnormalized log posterior maximized by the M-step:
//   sum_i log sum_k pi_k N(x_i) + sum_k log p(mu_k, Sigma_k)
// with log p(mu, Sigma) = -(nu+d+1)/2 log|Sigma| - 1/2 tr(nu psi Sigma^-1)
//                         - kappa/2 (mu-m)^T Sigma^-1 (mu-m).
double log_posterior(const FeatureMatrix& data, const MixtureState& state, const NIWHyper& prior);

struct OracleResult {
  MixtureState state;
  std::vector<int> labels;
  std::vector<double> trace;
  int iterations = 0;
};

// Classical Bayesian EM: alternate e_step_targets and m_step with r = r^E.
// Stops early once the log posterior improves by less than tol.
OracleResult em_oracle(const FeatureMatrix& data, int k, const NIWHyper& prior, int epochs,
                       std::uint64_t seed, double tol = 1e-10);

}  // namespace npc
