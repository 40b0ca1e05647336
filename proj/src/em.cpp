#include "npclust/em.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "parallel.hpp"

namespace npc {

namespace {

RowMatrix gather_rows(const RowMatrix& src, std::span<const int> idx) {
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(idx[i]);
  return out;
}

Responsibilities gather_rows(const Responsibilities& src, std::span<const int> idx) {
  Responsibilities out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(idx[i]);
  return out;
}

std::vector<int> shuffled_indices(int n, std::mt19937_64& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

// Log-density of every point under one component: N x 1.
Vector component_logpdf(const FeatureMatrix& data, const GaussianComponent& c) {
  const auto d = static_cast<double>(data.d());
  Matrix diff = (data.rows().rowwise() - c.mu.transpose()).transpose();
  c.sigma.factor().triangularView<Eigen::Lower>().solveInPlace(diff);
  const double norm = -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * c.sigma.logdet();
  return (norm - 0.5 * diff.colwise().squaredNorm().array()).transpose();
}

// Weights nw_j / total, floored and renormalized.
void normalize_with_floor(std::span<GaussianComponent> comps) {
  double total = 0.0;
  for (auto& c : comps) {
    c.pi = std::max(c.pi, kWeightFloor);
    total += c.pi;
  }
  for (auto& c : comps) c.pi /= total;
}

// Trains a net for one sweep of shuffled minibatches.
template <typename LossFn>
double minibatch_sweep(AssignNet& net, const RowMatrix& x, int batch, double lr, std::mt19937_64& rng,
                       LossFn&& loss_fn) {
  const int n = static_cast<int>(x.rows());
  const auto perm = shuffled_indices(n, rng);
  double total = 0.0;
  for (int start = 0; start < n; start += batch) {
    const int stop = std::min(n, start + batch);
    std::span<const int> idx(perm.data() + start, static_cast<std::size_t>(stop - start));
    const auto lg = loss_fn(gather_rows(x, idx), idx);
    total += lg.loss;
    net.adam_step(lg.grads, lr);
  }
  return total;
}

}  // namespace

InputScaling InputScaling::fit(const FeatureMatrix& data) {
  InputScaling out;
  out.shift = data.mean();
  const double ms = (data.rows().rowwise() - out.shift.transpose()).squaredNorm() /
                    static_cast<double>(data.rows().size());
  out.scale = ms > 0.0 ? std::sqrt(ms) : 1.0;
  return out;
}

RowMatrix InputScaling::apply(const RowMatrix& x) const {
  return (x.rowwise() - shift.transpose()) / scale;
}

Vector InputScaling::apply(const Vector& x) const { return (x - shift) / scale; }

std::vector<int> ClusterModel::members(int k) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < labels.z.size(); ++i)
    if (labels.z[i] == k) out.push_back(static_cast<int>(i));
  return out;
}

Responsibilities e_step_targets(const FeatureMatrix& data, const MixtureState& state, bool* degenerate) {
  const Eigen::Index n = data.n();
  const int k = state.k();
  Matrix logp(n, k);
  for (int c = 0; c < k; ++c) {
    logp.col(c) = component_logpdf(data, state.clusters[static_cast<std::size_t>(c)]).array() +
                  std::log(state.clusters[static_cast<std::size_t>(c)].pi);
  }
  Responsibilities r(n, k);
  if (degenerate != nullptr) *degenerate = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logp.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      r.row(i).setConstant(1.0 / k);
      if (degenerate != nullptr) *degenerate = true;
      continue;
    }
    r.row(i) = (logp.row(i).array() - mx).exp();
    r.row(i) /= r.row(i).sum();
  }
  return r;
}

std::vector<GaussianComponent> m_step(const FeatureMatrix& data, const Responsibilities& r,
                                      const NIWHyper& prior) {
  if (r.rows() != data.n()) throw DomainError("m_step: responsibilities do not match data");
  std::vector<GaussianComponent> out;
  out.reserve(static_cast<std::size_t>(r.cols()));
  const auto n = static_cast<double>(data.n());
  for (Eigen::Index k = 0; k < r.cols(); ++k) {
    const Vector w = r.col(k);
    const auto stats = accumulate_stats(data, std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
    out.push_back(weighted_map_estimate(stats, prior, n));
  }
  normalize_with_floor(out);
  return out;
}

SubclusterPair subcluster_m_step(const FeatureMatrix& data_k, const Responsibilities& r_sub,
                                 const NIWHyper& prior) {
  if (r_sub.cols() != 2 || r_sub.rows() != data_k.n()) {
    throw DomainError("subcluster_m_step: expected N_k x 2 responsibilities");
  }
  auto comps = m_step(data_k, r_sub, prior);
  return {std::move(comps[0]), std::move(comps[1])};
}

SubclusterPair empty_subclusters(const NIWHyper& prior) {
  auto mode = weighted_map_estimate(SufficientStats::zero(prior.dim()), prior, 1.0);
  mode.pi = 0.5;
  return {mode, mode};
}

Responsibilities one_hot(std::span<const int> labels, int k) {
  Responsibilities r = Responsibilities::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) r(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return r;
}

namespace {

// One Lloyd run from a k-means++ seeding.
std::vector<int> lloyd(const FeatureMatrix& data, int k, std::uint64_t seed, int iters) {
  const int n = static_cast<int>(data.n());
  const RowMatrix& x = data.rows();
  std::mt19937_64 rng(seed);

  RowMatrix centers(k, x.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  auto refresh = [&](int c) {
    for (int i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - centers.row(c)).squaredNorm());
  };
  centers.row(0) = x.row(std::uniform_int_distribution<int>(0, n - 1)(rng));
  refresh(0);
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    int pick;
    if (total > 0.0) {
      std::discrete_distribution<int> dd(d2.begin(), d2.end());
      pick = dd(rng);
    } else {
      pick = std::uniform_int_distribution<int>(0, n - 1)(rng);
    }
    centers.row(c) = x.row(pick);
    refresh(c);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      dist[static_cast<std::size_t>(i)] = (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      const auto far = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
      labels[static_cast<std::size_t>(far)] = c;
      ++counts[static_cast<std::size_t>(c)];
      dist[static_cast<std::size_t>(far)] = 0.0;
      changed = true;
    }
    if (!changed) break;
    centers.setZero();
    for (int i = 0; i < n; ++i) centers.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) centers.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  return labels;
}

double inertia(const FeatureMatrix& data, std::span<const int> labels, int k) {
  const RowMatrix& x = data.rows();
  RowMatrix centers = RowMatrix::Zero(k, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    centers.row(labels[i]) += x.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (int c = 0; c < k; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) /= counts[static_cast<std::size_t>(c)];
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total += (x.row(static_cast<Eigen::Index>(i)) - centers.row(labels[i])).squaredNorm();
  return total;
}

}  // namespace

std::vector<int> kmeans(const FeatureMatrix& data, int k, std::uint64_t seed, int iters, int restarts) {
  if (k < 1) throw DomainError("kmeans: k must be positive");
  if (k > data.n()) throw DomainError("kmeans: k exceeds the number of points");
  if (restarts < 1) throw DomainError("kmeans: restarts must be positive");
  std::mt19937_64 rng(seed);
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    auto labels = lloyd(data, k, rng(), iters);
    const double cost = inertia(data, labels, k);
    if (cost < best_cost) {
      best_cost = cost;
      best = std::move(labels);
    }
  }
  return best;
}

void bootstrap_subclusters(const FeatureMatrix& data, ClusterModel& model, int k,
                           std::span<const int> members, std::span<const int> sub_of_member,
                           const NIWHyper& prior) {
  auto& pair = model.state.subclusters[static_cast<std::size_t>(k)];
  if (members.empty()) {
    pair = empty_subclusters(prior);
  } else {
    for (std::size_t i = 0; i < members.size(); ++i)
      model.labels.sub[static_cast<std::size_t>(members[i])] = sub_of_member[i];
    pair = subcluster_m_step(data.subset(members), one_hot(sub_of_member, 2), prior);
  }
  model.sub_bootstrap[static_cast<std::size_t>(k)] = true;
}

void bootstrap_subclusters(const FeatureMatrix& data, ClusterModel& model, int k, const NIWHyper& prior) {
  const auto members = model.members(k);
  std::vector<int> sub(members.size(), 0);
  // A single randomized run: repeated bootstraps of the same cluster should
  // explore different two-way partitions.
  if (members.size() >= 2) sub = kmeans(data.subset(members), 2, model.rng(), 100, 1);
  bootstrap_subclusters(data, model, k, members, sub, prior);
}

void reseed_subclusters(const FeatureMatrix& data, ClusterModel& model, int k, const NIWHyper& prior,
                        const TrainConfig& cfg) {
  bootstrap_subclusters(data, model, k, prior);
  model.sub_nets[static_cast<std::size_t>(k)] = AssignNet::init(static_cast<int>(data.d()), cfg.hidden, 2, model.rng());
}

ClusterModel initialize_model(const FeatureMatrix& data, int init_k, const NIWHyper& prior,
                              const TrainConfig& cfg, std::uint64_t seed) {
  ClusterModel model;
  model.rng.seed(seed);
  model.input = InputScaling::fit(data);
  const auto n = static_cast<std::size_t>(data.n());
  model.labels.z = kmeans(data, init_k, model.rng());
  model.labels.sub.assign(n, 0);
  model.state.clusters = m_step(data, one_hot(model.labels.z, init_k), prior);
  model.state.subclusters.assign(static_cast<std::size_t>(init_k), empty_subclusters(prior));
  model.sub_bootstrap.assign(static_cast<std::size_t>(init_k), false);
  for (int k = 0; k < init_k; ++k) bootstrap_subclusters(data, model, k, prior);
  const int d = static_cast<int>(data.d());
  model.cluster_net = AssignNet::init(d, cfg.hidden, init_k, model.rng());
  if (cfg.freeze_epochs > 0) model.start_freeze();
  for (int k = 0; k < init_k; ++k) model.sub_nets.push_back(AssignNet::init(d, cfg.hidden, 2, model.rng()));
  return model;
}

EpochReport train_epoch_fixed_k(const FeatureMatrix& data, ClusterModel& model, const NIWHyper& prior,
                                const TrainConfig& cfg, int epoch) {
  const int k = model.k();
  if (model.cluster_net.k_out() != k || static_cast<int>(model.sub_nets.size()) != k) {
    throw DomainError("train_epoch_fixed_k: nets and mixture disagree on K");
  }
  EpochReport report;
  report.epoch = epoch;
  report.k = k;

  // (1) E-step targets from the previous epoch's parameters.
  const Responsibilities targets = e_step_targets(data, model.state);
  const RowMatrix xs = model.input.apply(data.rows());

  // (2) One sweep of the clustering net on the KL loss.
  report.cluster_loss = minibatch_sweep(
      model.cluster_net, xs, cfg.batch, cfg.lr_cluster, model.rng,
      [&](const RowMatrix& xb, std::span<const int> idx) {
        return model.cluster_net.kl_cluster_loss_grad(xb, gather_rows(targets, idx));
      });

  // (3) Hard labels from the net.
  const Responsibilities r = model.cluster_net.forward(xs);
  model.labels.z = argmax_rows(r);
  report.target_kl = (r.array() * (r.array().max(kTargetFloor).log() - targets.array().max(kTargetFloor).log()))
                         .sum() /
                     static_cast<double>(data.n());
  bool frozen = false;
  if (model.frozen()) {
    const int spent = model.frozen_for;
    const bool improving = report.target_kl < (1.0 - cfg.freeze_min_gain) * model.freeze_last_kl;
    frozen = spent < cfg.freeze_max &&
             (spent < cfg.freeze_epochs || (report.target_kl > cfg.freeze_kl && improving));
    model.freeze_last_kl = report.target_kl;
    model.frozen_for = frozen ? spent + 1 : -1;
  }
  report.frozen = frozen;
  std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < model.labels.z.size(); ++i)
    members[static_cast<std::size_t>(model.labels.z[i])].push_back(static_cast<int>(i));

  // (4) Subclustering nets on the isotropic loss, one cluster each.
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(k));
  for (auto& s : seeds) s = model.rng();
  std::vector<double> sub_losses(static_cast<std::size_t>(k), 0.0);
  std::vector<SubclusterPair> sub_params(model.state.subclusters);
  std::vector<int> new_sub = model.labels.sub;
  detail::parallel_for(k, cfg.threads, [&](int c) {
    const auto uc = static_cast<std::size_t>(c);
    const auto& idx = members[uc];
    if (idx.empty()) {
      sub_params[uc] = empty_subclusters(prior);
      return;
    }
    const FeatureMatrix data_k = data.subset(idx);
    const auto& pair = model.state.subclusters[uc];
    std::mt19937_64 rng(seeds[uc]);
    AssignNet& net = model.sub_nets[uc];
    // Distances in the scaled space are the original ones divided by scale^2.
    const RowMatrix xs_k = gather_rows(xs, idx);
    const Vector mu0 = model.input.apply(pair[0].mu);
    const Vector mu1 = model.input.apply(pair[1].mu);
    sub_losses[uc] = minibatch_sweep(net, xs_k, cfg.batch, cfg.lr_sub, rng,
                                     [&](const RowMatrix& xb, std::span<const int>) {
                                       return net.isotropic_subcluster_loss_grad(xb, mu0, mu1);
                                     });
    Responsibilities r_sub;
    if (model.sub_bootstrap[uc]) {
      std::vector<int> hard(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) hard[i] = model.labels.sub[static_cast<std::size_t>(idx[i])];
      r_sub = one_hot(hard, 2);
    } else {
      r_sub = net.forward(xs_k);
      const auto hard = argmax_rows(r_sub);
      for (std::size_t i = 0; i < idx.size(); ++i) new_sub[static_cast<std::size_t>(idx[i])] = hard[i];
    }
    // (5b) Subcluster M-step.
    if (!frozen) sub_params[uc] = subcluster_m_step(data_k, r_sub, prior);
  });
  for (double l : sub_losses) report.sub_loss += l;
  model.labels.sub = std::move(new_sub);
  model.state.subclusters = std::move(sub_params);
  // (5a) Cluster M-step with the net's responsibilities.
  if (!frozen) {
    std::fill(model.sub_bootstrap.begin(), model.sub_bootstrap.end(), false);
    model.state.clusters = m_step(data, r, prior);
  }

  // A cluster whose subclusters collapsed onto one side can never be split;
  // re-seed them with K-means(2) and a fresh subclustering net.
  for (int c = 0; c < k; ++c) {
    const auto& idx = members[static_cast<std::size_t>(c)];
    if (idx.size() < 2) continue;
    std::size_t ones = 0;
    for (int i : idx) ones += static_cast<std::size_t>(model.labels.sub[static_cast<std::size_t>(i)] == 1);
    if (ones != 0 && ones != idx.size()) continue;
    reseed_subclusters(data, model, c, prior, cfg);
    ++report.sub_resets;
  }

  report.hard_counts.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) report.hard_counts[static_cast<std::size_t>(c)] = static_cast<int>(members[static_cast<std::size_t>(c)].size());
  assert(rows_stochastic(r));
  return report;
}

double log_posterior(const FeatureMatrix& data, const MixtureState& state, const NIWHyper& prior) {
  const Eigen::Index n = data.n();
  const int k = state.k();
  const double d = static_cast<double>(data.d());
  Matrix logp(n, k);
  double log_prior = 0.0;
  const Matrix scale = prior.nu * prior.psi;
  for (int c = 0; c < k; ++c) {
    const auto& comp = state.clusters[static_cast<std::size_t>(c)];
    logp.col(c) = component_logpdf(data, comp).array() + std::log(comp.pi);
    const auto& l = comp.sigma.factor();
    const Matrix linv_scale = l.triangularView<Eigen::Lower>().solve(scale);
    const double trace_term = l.triangularView<Eigen::Lower>().solve(linv_scale.transpose()).trace();
    log_prior += -0.5 * (prior.nu + d + 1.0) * comp.sigma.logdet() - 0.5 * trace_term -
                 0.5 * prior.kappa * comp.sigma.mahalanobis_sq(comp.mu - prior.m);
  }
  double loglik = 0.0;
  std::vector<double> row(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) row[static_cast<std::size_t>(c)] = logp(i, c);
    loglik += log_sum_exp(row);
  }
  return loglik + log_prior;
}

OracleResult em_oracle(const FeatureMatrix& data, int k, const NIWHyper& prior, int epochs, std::uint64_t seed,
                       double tol) {
  OracleResult out;
  // Same initial partition as initialize_model with the same seed.
  std::mt19937_64 rng(seed);
  const auto init = kmeans(data, k, rng());
  out.state.clusters = m_step(data, one_hot(init, k), prior);
  out.state.subclusters.assign(static_cast<std::size_t>(k), empty_subclusters(prior));
  out.trace.push_back(log_posterior(data, out.state, prior));
  for (int it = 0; it < epochs; ++it) {
    const auto r = e_step_targets(data, out.state);
    out.state.clusters = m_step(data, r, prior);
    out.trace.push_back(log_posterior(data, out.state, prior));
    ++out.iterations;
    const double gain = out.trace.back() - out.trace[out.trace.size() - 2];
    if (std::abs(gain) <= tol * std::max(1.0, std::abs(out.trace.back()))) break;
  }
  out.labels = argmax_rows(e_step_targets(data, out.state));
  return out;
}

}  // namespace npc
