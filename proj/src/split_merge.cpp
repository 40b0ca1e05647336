#include "npclust/split_merge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace npc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<int>> members_by_cluster(const ClusterModel& model) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(model.k()));
  for (std::size_t i = 0; i < model.labels.z.size(); ++i)
    out[static_cast<std::size_t>(model.labels.z[i])].push_back(static_cast<int>(i));
  return out;
}

// Indices of the other clusters sorted by centroid distance to cluster a.
std::vector<int> nearest_clusters(const MixtureState& state, int a) {
  std::vector<int> others;
  for (int b = 0; b < state.k(); ++b)
    if (b != a) others.push_back(b);
  const auto& mu = state.clusters[static_cast<std::size_t>(a)].mu;
  std::stable_sort(others.begin(), others.end(), [&](int x, int y) {
    return (state.clusters[static_cast<std::size_t>(x)].mu - mu).squaredNorm() <
           (state.clusters[static_cast<std::size_t>(y)].mu - mu).squaredNorm();
  });
  return others;
}

// Points per cluster under the E-step targets' argmax.
std::vector<int> target_support(const FeatureMatrix& data, const MixtureState& state) {
  std::vector<int> counts(static_cast<std::size_t>(state.k()), 0);
  for (int z : argmax_rows(e_step_targets(data, state))) ++counts[static_cast<std::size_t>(z)];
  return counts;
}

// Removes cluster `hi` from every per-cluster container and shifts labels.
void erase_cluster(ClusterModel& model, int hi) {
  const auto uh = static_cast<std::ptrdiff_t>(hi);
  model.cluster_net.remove_output_unit(hi);
  model.state.clusters.erase(model.state.clusters.begin() + uh);
  model.state.subclusters.erase(model.state.subclusters.begin() + uh);
  model.sub_nets.erase(model.sub_nets.begin() + uh);
  model.sub_bootstrap.erase(model.sub_bootstrap.begin() + uh);
  for (int& z : model.labels.z)
    if (z > hi) --z;
}

// Folds cluster hi into lo. Members of lo become subcluster 0 and members of
// hi subcluster 1 of the merged cluster.
void apply_merge(const FeatureMatrix& data, ClusterModel& model, int lo, int hi,
                 const std::vector<int>& members_lo, const std::vector<int>& members_hi,
                 const NIWHyper& prior, const SurgeryConfig& cfg) {
  auto& clo = model.state.clusters[static_cast<std::size_t>(lo)];
  const double pi = clo.pi + model.state.clusters[static_cast<std::size_t>(hi)].pi;
  const auto stats = accumulate_stats(data, std::span<const int>(members_lo)) +
                     accumulate_stats(data, std::span<const int>(members_hi));
  clo = weighted_map_estimate(stats, prior, static_cast<double>(data.n()));
  clo.pi = pi;
  std::vector<int> members = members_lo;
  members.insert(members.end(), members_hi.begin(), members_hi.end());
  std::vector<int> sub(members_lo.size(), 0);
  sub.resize(members.size(), 1);
  for (int i : members_hi) model.labels.z[static_cast<std::size_t>(i)] = lo;
  model.sub_nets[static_cast<std::size_t>(lo)] =
      AssignNet::init(static_cast<int>(data.d()), cfg.train.hidden, 2, model.rng());
  bootstrap_subclusters(data, model, lo, members, sub, prior);
}

}  // namespace

UniformDraw uniform_from(std::mt19937_64& rng) {
  return [&rng] { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); };
}

double log_hastings_split(const SufficientStats& whole, const SufficientStats& part1,
                          const SufficientStats& part2, const NIWHyper& prior) {
  if (!(part1.nw >= 1.0) || !(part2.nw >= 1.0)) {
    throw DomainError("log_hastings_split: both subclusters must be nonempty");
  }
  return std::log(prior.alpha) + log_gamma(part1.nw) + log_marginal(part1, prior) + log_gamma(part2.nw) +
         log_marginal(part2, prior) - log_gamma(whole.nw) - log_marginal(whole, prior);
}

double log_hastings_merge(const SufficientStats& a, const SufficientStats& b, const NIWHyper& prior) {
  if (!(a.nw >= 1.0) || !(b.nw >= 1.0)) throw DomainError("log_hastings_merge: clusters must be nonempty");
  return -log_hastings_split(a + b, a, b, prior);
}

bool accept(double log_h, double draw) {
  const double threshold = log_h >= 0.0 ? 1.0 : std::exp(log_h);
  return draw < threshold;
}

std::vector<ProposalOutcome> propose_splits(const FeatureMatrix& data, ClusterModel& model,
                                            const NIWHyper& prior, const UniformDraw& draw,
                                            const SurgeryConfig& cfg) {
  const int k0 = model.k();
  const auto members = members_by_cluster(model);
  std::vector<ProposalOutcome> outcomes(static_cast<std::size_t>(k0));
  std::vector<std::array<std::vector<int>, 2>> parts(static_cast<std::size_t>(k0));

  for (int k = 0; k < k0; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    auto& out = outcomes[uk];
    out.kind = ProposalOutcome::Kind::Split;
    out.clusters = {k};
    for (int i : members[uk]) parts[uk][static_cast<std::size_t>(model.labels.sub[static_cast<std::size_t>(i)])].push_back(i);
    if (parts[uk][0].empty() || parts[uk][1].empty()) {
      out.skipped = true;
      out.log_h = -kInf;
      continue;
    }
    const auto s1 = accumulate_stats(data, std::span<const int>(parts[uk][0]));
    const auto s2 = accumulate_stats(data, std::span<const int>(parts[uk][1]));
    out.log_h = log_hastings_split(s1 + s2, s1, s2, prior);
  }
  for (auto& out : outcomes) {
    if (out.skipped) continue;
    out.rng_draw = draw();
    out.accepted = accept(out.log_h, out.rng_draw);
  }

  const int d = static_cast<int>(data.d());
  for (int k = 0; k < k0; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    if (!outcomes[uk].accepted) continue;
    const int child = model.k();
    model.cluster_net.duplicate_output_unit(k, cfg.noise_scale, &model.rng);

    const SubclusterPair sub = model.state.subclusters[uk];
    auto& parent = model.state.clusters[uk];
    const double pi = parent.pi;
    const double pi1 = pi * sub[0].pi;
    parent = GaussianComponent{sub[0].mu, sub[0].sigma, pi1};
    model.state.clusters.push_back(GaussianComponent{sub[1].mu, sub[1].sigma, pi - pi1});

    for (int i : parts[uk][1]) model.labels.z[static_cast<std::size_t>(i)] = child;
    model.state.subclusters.push_back(empty_subclusters(prior));
    model.sub_bootstrap.push_back(false);
    model.sub_nets[uk] = AssignNet::init(d, cfg.train.hidden, 2, model.rng());
    model.sub_nets.push_back(AssignNet::init(d, cfg.train.hidden, 2, model.rng()));
    bootstrap_subclusters(data, model, k, prior);
    bootstrap_subclusters(data, model, child, prior);
  }
  if (model.k() != k0) {
    model.state.normalize_weights();
    if (cfg.train.freeze_epochs > 0) model.start_freeze();
  }
  return outcomes;
}

std::vector<ProposalOutcome> propose_merges(const FeatureMatrix& data, ClusterModel& model,
                                            const NIWHyper& prior, const UniformDraw& draw,
                                            const SurgeryConfig& cfg) {
  std::vector<ProposalOutcome> outcomes;
  std::vector<int> orig(static_cast<std::size_t>(model.k()));
  std::iota(orig.begin(), orig.end(), 0);

  // Empty clusters carry no likelihood; fold each into its nearest neighbor.
  // A cluster the net has not picked up yet but the E-step still supports
  // (a fresh split child during a freeze) is left alone.
  while (model.k() > 1) {
    const auto members = members_by_cluster(model);
    const auto support = target_support(data, model.state);
    int e = -1;
    for (int c = 0; c < model.k() && e < 0; ++c)
      if (members[static_cast<std::size_t>(c)].empty() && support[static_cast<std::size_t>(c)] == 0) e = c;
    if (e < 0) break;
    const int b = nearest_clusters(model.state, e).front();
    const int lo = std::min(e, b);
    const int hi = std::max(e, b);
    ProposalOutcome out;
    out.kind = ProposalOutcome::Kind::Merge;
    out.clusters = {orig[static_cast<std::size_t>(e)], orig[static_cast<std::size_t>(b)]};
    out.log_h = kInf;
    out.rng_draw = 0.0;
    out.accepted = true;
    outcomes.push_back(out);
    apply_merge(data, model, lo, hi, members[static_cast<std::size_t>(lo)], members[static_cast<std::size_t>(hi)],
                prior, cfg);
    erase_cluster(model, hi);
    orig.erase(orig.begin() + hi);
  }
  if (model.k() < 2) {
    if (!outcomes.empty()) {
      model.state.normalize_weights();
      if (cfg.train.freeze_epochs > 0) model.start_freeze();
    }
    return outcomes;
  }

  const int k0 = model.k();
  const auto members = members_by_cluster(model);
  std::vector<SufficientStats> stats;
  stats.reserve(static_cast<std::size_t>(k0));
  for (const auto& m : members) stats.push_back(accumulate_stats(data, std::span<const int>(m)));

  std::vector<bool> consumed(static_cast<std::size_t>(k0), false);
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < k0; ++a) {
    if (consumed[static_cast<std::size_t>(a)] || members[static_cast<std::size_t>(a)].empty()) continue;
    auto neighbors = nearest_clusters(model.state, a);
    if (static_cast<int>(neighbors.size()) > cfg.neighbors) neighbors.resize(static_cast<std::size_t>(cfg.neighbors));
    for (int b : neighbors) {
      if (consumed[static_cast<std::size_t>(b)] || members[static_cast<std::size_t>(b)].empty()) continue;
      ProposalOutcome out;
      out.kind = ProposalOutcome::Kind::Merge;
      out.clusters = {orig[static_cast<std::size_t>(a)], orig[static_cast<std::size_t>(b)]};
      out.log_h = log_hastings_merge(stats[static_cast<std::size_t>(a)], stats[static_cast<std::size_t>(b)], prior);
      out.rng_draw = draw();
      out.accepted = accept(out.log_h, out.rng_draw);
      outcomes.push_back(out);
      if (out.accepted) {
        consumed[static_cast<std::size_t>(a)] = true;
        consumed[static_cast<std::size_t>(b)] = true;
        pairs.emplace_back(std::min(a, b), std::max(a, b));
        break;
      }
    }
  }

  for (const auto& [lo, hi] : pairs)
    apply_merge(data, model, lo, hi, members[static_cast<std::size_t>(lo)], members[static_cast<std::size_t>(hi)],
                prior, cfg);
  std::vector<int> removed;
  for (const auto& p : pairs) removed.push_back(p.second);
  std::sort(removed.rbegin(), removed.rend());
  for (int hi : removed) erase_cluster(model, hi);
  if (static_cast<int>(outcomes.size()) > 0 && std::any_of(outcomes.begin(), outcomes.end(),
                                                           [](const auto& o) { return o.accepted; })) {
    model.state.normalize_weights();
    if (cfg.train.freeze_epochs > 0) model.start_freeze();
  }
  return outcomes;
}

}  // namespace npc
