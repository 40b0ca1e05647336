#pragma once

// Split and merge proposals with Metropolis-Hastings acceptance, and the
// matching surgery on the mixture, the labels and the nets.

#include <functional>
#include <vector>

#include "npclust/em.hpp"

namespace npc {

// Source of uniform draws in [0, 1) for acceptance tests.
using UniformDraw = std::function<double()>;

UniformDraw uniform_from(std::mt19937_64& rng);

struct ProposalOutcome {
  enum class Kind { Split, Merge };
  Kind kind = Kind::Split;
  std::vector<int> clusters;  // indices in the pre-round numbering
  double log_h = 0.0;
  bool accepted = false;
  double rng_draw = 1.0;
  bool skipped = false;  // empty subcluster; counted as rejected
};

// log H_s = ln(alpha) + lnG(N1) + log f(X1) + lnG(N2) + log f(X2) - lnG(N) - log f(X).
// Throws DomainError if either side is empty.
double log_hastings_split(const SufficientStats& whole, const SufficientStats& part1,
                          const SufficientStats& part2, const NIWHyper& prior);

// -log_hastings_split(a + b, a, b).
double log_hastings_merge(const SufficientStats& a, const SufficientStats& b, const NIWHyper& prior);

bool accept(double log_h, double draw);

struct SurgeryConfig {
  TrainConfig train;
  double noise_scale = 0.0;  // symmetry-breaking noise on duplicated output units
  int neighbors = 3;
};

// Proposes splitting every cluster into its two hard subclusters. All ratios
// are evaluated against the pre-round state; accepted splits are then applied
// in ascending cluster order. The second child of cluster k is appended at the
// end of the cluster list.
std::vector<ProposalOutcome> propose_splits(const FeatureMatrix& data, ClusterModel& model,
                                            const NIWHyper& prior, const UniformDraw& draw,
                                            const SurgeryConfig& cfg = {});

// Clusters with no hard-assigned points are first merged into their nearest
// neighbor (log_h = +inf). Then, in ascending index order, each unconsumed
// cluster tries its nearest unconsumed neighbors by centroid distance; the
// first accepted merge consumes both. The lower index keeps its output unit.
std::vector<ProposalOutcome> propose_merges(const FeatureMatrix& data, ClusterModel& model,
                                            const NIWHyper& prior, const UniformDraw& draw,
                                            const SurgeryConfig& cfg = {});

}  // namespace npc
