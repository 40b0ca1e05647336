#pragma once

// Training schedule and stopping rule for the nonparametric fit, plus the
// classical-EM baseline run.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "npclust/data_io.hpp"
#include "npclust/split_merge.hpp"

namespace npc {

enum class PsiMode { IdentityScale, DataStdScale };

std::string to_string(PsiMode mode);
PsiMode parse_psi_mode(const std::string& s);

struct FitConfig {
  int init_k = 1;
  int hidden = 50;
  int batch = 128;
  double lr_cluster = 5e-4;
  double lr_sub = 5e-3;
  double alpha = 10.0;
  double kappa = 1e-4;
  std::optional<double> nu;  // defaults to d + 2
  double psi_scale = 0.005;
  PsiMode psi_mode = PsiMode::IdentityScale;
  int epochs_max = 300;
  int split_every = 10;
  int merge_every = 10;
  int merge_offset = 5;
  int warmup = 5;
  int patience = 5;  // proposal rounds in a row with nothing accepted
  // M-steps skipped after init and accepted proposals; see TrainConfig.
  int freeze_epochs = 5;
  double freeze_kl = 0.1;
  int freeze_max = 100;
  double freeze_min_gain = 0.01;
  // Re-seed the subclusters of clusters whose split was rejected.
  bool reseed_rejected = true;
  bool split_merge = true;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json(int d) const;
  TrainConfig train() const;
};

// m = data mean; psi = I * psi_scale or I * std(X) * psi_scale.
NIWHyper make_prior(const FeatureMatrix& data, const FitConfig& cfg);

enum class ProposalKind { None, Split, Merge };

// Which proposal, if any, runs after the given (0-based) epoch.
ProposalKind scheduled_proposal(const FitConfig& cfg, int epoch);

Metrics evaluate(const FeatureMatrix& data, std::span<const int> pred, std::span<const int> truth, int threads = 1);

// Observer invoked after every epoch (after any proposal round).
using EpochObserver = std::function<void(const EpochRecord&, const ClusterModel&)>;

// Truth labels, if given, are only read after training has finished.
RunRecord run_fit(const FeatureMatrix& data, const FitConfig& cfg, const std::vector<int>* truth = nullptr,
                  const EpochObserver& observer = {});

RunRecord run_oracle_em(const FeatureMatrix& data, int k, const FitConfig& cfg,
                        const std::vector<int>* truth = nullptr);

}  // namespace npc
