#include "npclust/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "npclust/metrics.hpp"

namespace npc {

std::string to_string(PsiMode mode) {
  return mode == PsiMode::IdentityScale ? "identity-scale" : "data-std-scale";
}

PsiMode parse_psi_mode(const std::string& s) {
  if (s == "identity-scale") return PsiMode::IdentityScale;
  if (s == "data-std-scale") return PsiMode::DataStdScale;
  throw DomainError("unknown psi mode '" + s + "'");
}

void FitConfig::validate() const {
  if (init_k < 1) throw DomainError("init_k must be at least 1");
  if (hidden < 1 || batch < 1) throw DomainError("hidden and batch must be positive");
  if (!(lr_cluster > 0.0) || !(lr_sub > 0.0)) throw DomainError("learning rates must be positive");
  if (!(alpha > 0.0) || !(kappa > 0.0) || !(psi_scale > 0.0)) throw DomainError("alpha, kappa and psi_scale must be positive");
  if (epochs_max < 1) throw DomainError("epochs_max must be positive");
  if (split_every < 0 || merge_every < 0 || warmup < 0 || patience < 1 || freeze_epochs < 0 ||
      freeze_max < freeze_epochs || !(freeze_kl >= 0.0) ||
      !(freeze_min_gain >= 0.0 && freeze_min_gain < 1.0)) throw DomainError("invalid proposal schedule");
  if (threads < 1) throw DomainError("threads must be positive");
}

nlohmann::json FitConfig::to_json(int d) const {
  return {{"init_k", init_k},
          {"hidden", hidden},
          {"batch", batch},
          {"lr_cluster", lr_cluster},
          {"lr_sub", lr_sub},
          {"alpha", alpha},
          {"kappa", kappa},
          {"nu", nu.value_or(d + 2.0)},
          {"psi_scale", psi_scale},
          {"psi_mode", to_string(psi_mode)},
          {"m_mode", "data-mean"},
          {"epochs_max", epochs_max},
          {"split_every", split_every},
          {"merge_every", merge_every},
          {"merge_offset", merge_offset},
          {"warmup", warmup},
          {"patience", patience},
          {"freeze_epochs", freeze_epochs},
          {"reseed_rejected", reseed_rejected},
          {"freeze_kl", freeze_kl},
          {"freeze_max", freeze_max},
          {"freeze_min_gain", freeze_min_gain},
          {"split_merge", split_merge},
          {"threads", threads}};
}

TrainConfig FitConfig::train() const { return {hidden, batch, lr_cluster, lr_sub, threads, freeze_epochs, freeze_kl, freeze_max,
                                                 freeze_min_gain}; }

NIWHyper make_prior(const FeatureMatrix& data, const FitConfig& cfg) {
  const auto d = static_cast<int>(data.d());
  NIWHyper prior;
  prior.m = data.mean();
  prior.kappa = cfg.kappa;
  prior.nu = cfg.nu.value_or(d + 2.0);
  prior.alpha = cfg.alpha;
  double scale = cfg.psi_scale;
  if (cfg.psi_mode == PsiMode::DataStdScale) {
    const auto& x = data.rows();
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / static_cast<double>(x.size());
    scale *= std::sqrt(var);
  }
  prior.psi = Matrix::Identity(d, d) * scale;
  prior.validate();
  return prior;
}

ProposalKind scheduled_proposal(const FitConfig& cfg, int epoch) {
  if (!cfg.split_merge || epoch < cfg.warmup) return ProposalKind::None;
  if (cfg.split_every > 0 && epoch % cfg.split_every == 0) return ProposalKind::Split;
  if (cfg.merge_every > 0 && epoch % cfg.merge_every == cfg.merge_offset % cfg.merge_every) return ProposalKind::Merge;
  return ProposalKind::None;
}

Metrics evaluate(const FeatureMatrix& data, std::span<const int> pred, std::span<const int> truth, int threads) {
  Metrics m;
  m.acc = clustering_accuracy(pred, truth);
  m.nmi = nmi(pred, truth);
  if (pred.size() >= 2) m.ari = ari(pred, truth);
  if (count_distinct(pred) >= 2) m.silhouette = silhouette(data, pred, threads);
  return m;
}

namespace {

// Compacted final labels and the parameters of the clusters that own points.
void finalize(RunRecord& record, const std::vector<int>& z, const MixtureState& state) {
  const auto compact = compact_labels(z);
  record.labels = compact.z;
  record.clusters.clear();
  double total = 0.0;
  for (const auto& [old, fresh] : compact.relabel) {
    record.clusters.push_back(state.clusters[static_cast<std::size_t>(old)]);
    total += record.clusters.back().pi;
  }
  for (auto& c : record.clusters) c.pi /= total;
}

void check_truth(const FeatureMatrix& data, const std::vector<int>* truth) {
  if (truth != nullptr && static_cast<Eigen::Index>(truth->size()) != data.n()) {
    throw DataError("truth labels: expected " + std::to_string(data.n()) + " labels, got " +
                    std::to_string(truth->size()));
  }
}

}  // namespace

RunRecord run_fit(const FeatureMatrix& data, const FitConfig& cfg, const std::vector<int>* truth,
                  const EpochObserver& observer) {
  cfg.validate();
  check_truth(data, truth);
  const auto start = std::chrono::steady_clock::now();
  const auto prior = make_prior(data, cfg);
  const TrainConfig train = cfg.train();
  const SurgeryConfig surgery{train};

  auto model = initialize_model(data, cfg.init_k, prior, train, cfg.seed);
  std::mt19937_64 proposal_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto draw = uniform_from(proposal_rng);

  RunRecord record;
  record.seed = cfg.seed;
  record.config = cfg.to_json(static_cast<int>(data.d()));
  int idle_rounds = 0;
  ProposalKind pending = ProposalKind::None;
  for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
    const auto report = train_epoch_fixed_k(data, model, prior, train, epoch);
    EpochRecord rec{epoch, model.k(), report.cluster_loss, report.sub_loss, 0, 0};

    // Hard labels lag the partition while the nets are frozen, so surgery
    // waits; the latest scheduled round runs once the freeze ends.
    if (const auto due = scheduled_proposal(cfg, epoch); due != ProposalKind::None) pending = due;
    const auto kind = model.frozen() ? ProposalKind::None : pending;
    if (kind != ProposalKind::None) {
      pending = ProposalKind::None;
      rec.proposal = kind == ProposalKind::Split ? "split" : "merge";
      const auto outcomes = kind == ProposalKind::Split ? propose_splits(data, model, prior, draw, surgery)
                                                        : propose_merges(data, model, prior, draw, surgery);
      const auto accepted =
          static_cast<int>(std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.accepted; }));
      (kind == ProposalKind::Split ? rec.splits_accepted : rec.merges_accepted) = accepted;
      rec.k = model.k();
      // A rejected split leaves the subclusters at the same fixed point; try a
      // different two-way partition next round.
      if (kind == ProposalKind::Split && cfg.reseed_rejected) {
        for (const auto& o : outcomes)
          if (!o.accepted) reseed_subclusters(data, model, o.clusters.front(), prior, train);
      }
      if (!outcomes.empty()) idle_rounds = accepted == 0 ? idle_rounds + 1 : 0;
    }
    record.history.push_back(rec);
    if (observer) observer(rec, model);
    if (cfg.split_merge && idle_rounds >= cfg.patience) break;
  }

  finalize(record, model.labels.z, model.state);
  if (truth != nullptr) record.metrics = evaluate(data, record.labels, *truth, cfg.threads);
  record.wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

RunRecord run_oracle_em(const FeatureMatrix& data, int k, const FitConfig& cfg, const std::vector<int>* truth) {
  cfg.validate();
  check_truth(data, truth);
  if (k < 1) throw DomainError("oracle EM needs k >= 1");
  const auto start = std::chrono::steady_clock::now();
  const auto prior = make_prior(data, cfg);
  const auto result = em_oracle(data, k, prior, cfg.epochs_max, cfg.seed);

  RunRecord record;
  record.seed = cfg.seed;
  record.config = cfg.to_json(static_cast<int>(data.d()));
  record.config["k"] = k;
  for (int it = 0; it < result.iterations; ++it) record.history.push_back({it, k, 0.0, 0.0, 0, 0});
  record.log_posterior_trace = result.trace;
  finalize(record, result.labels, result.state);
  if (truth != nullptr) record.metrics = evaluate(data, record.labels, *truth, cfg.threads);
  record.wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

}  // namespace npc
