// npclust: nonparametric clustering of precomputed feature vectors.
//
//   npclust fit        --features X.csv [--truth y.csv] --out DIR [options]
//   npclust oracle-em  --features X.csv --k K [--truth y.csv] --out DIR
//   npclust generate   --k K --n N --d D --separation S --out DIR
//   npclust imbalance  --features X.csv --labels y.csv [--proportions p1,p2,...] --out DIR
//   npclust eval       --pred a.csv --truth b.csv [--features X.csv]
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "npclust/metrics.hpp"
#include "npclust/runner.hpp"

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr int kNumericalError = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_fit_options(CLI::App& cmd, npc::FitConfig& cfg, std::string& psi_mode) {
  cmd.add_option("--init-k", cfg.init_k, "initial number of clusters")->capture_default_str();
  cmd.add_option("--hidden", cfg.hidden, "hidden units per net")->capture_default_str();
  cmd.add_option("--batch", cfg.batch, "minibatch size")->capture_default_str();
  cmd.add_option("--lr-cluster", cfg.lr_cluster, "clustering net learning rate")->capture_default_str();
  cmd.add_option("--lr-sub", cfg.lr_sub, "subclustering net learning rate")->capture_default_str();
  cmd.add_option("--alpha", cfg.alpha, "DP concentration")->capture_default_str();
  cmd.add_option("--kappa", cfg.kappa, "NIW mean pseudocount")->capture_default_str();
  cmd.add_option("--nu", cfg.nu, "NIW scatter pseudocount (default d + 2)");
  cmd.add_option("--psi-scale", cfg.psi_scale, "prior scatter scale")->capture_default_str();
  cmd.add_option("--psi-mode", psi_mode, "identity-scale | data-std-scale")
      ->check(CLI::IsMember({"identity-scale", "data-std-scale"}))
      ->capture_default_str();
  cmd.add_option("--epochs-max", cfg.epochs_max, "epoch cap")->capture_default_str();
  cmd.add_option("--split-every", cfg.split_every, "split proposal period in epochs")->capture_default_str();
  cmd.add_option("--merge-every", cfg.merge_every, "merge proposal period in epochs")->capture_default_str();
  cmd.add_option("--merge-offset", cfg.merge_offset, "merge proposal offset within its period")->capture_default_str();
  cmd.add_option("--warmup", cfg.warmup, "epochs before the first proposal")->capture_default_str();
  cmd.add_option("--patience", cfg.patience, "stop after this many idle proposal rounds")->capture_default_str();
  cmd.add_option("--freeze-epochs", cfg.freeze_epochs, "epochs without M-steps after init and accepted proposals")
      ->capture_default_str();
  cmd.add_option("--freeze-kl", cfg.freeze_kl, "mean KL(net || E-step target) that ends a freeze")
      ->capture_default_str();
  cmd.add_option("--freeze-max", cfg.freeze_max, "longest freeze in epochs")->capture_default_str();
  cmd.add_option("--freeze-min-gain", cfg.freeze_min_gain, "relative per-epoch KL gain below which a freeze ends")
      ->capture_default_str();
  cmd.add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  cmd.add_option("--threads", cfg.threads, "worker threads for data-parallel sections")->capture_default_str();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw UsageError("cannot parse '" + cell + "' as a number");
    }
  }
  return out;
}

void print_metrics(const npc::Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  std::cout << nlohmann::json{{"acc", opt(m.acc)}, {"nmi", opt(m.nmi)}, {"ari", opt(m.ari)},
                              {"silhouette", opt(m.silhouette)}}
                   .dump()
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric clustering with an inferred number of clusters"};
  app.require_subcommand(1);

  npc::FitConfig cfg;
  std::string psi_mode = "identity-scale";
  std::string features, truth, out_dir, labels_path, pred_path, proportions, weights;
  bool verbose = false;
  bool no_split_merge = false;
  bool no_reseed = false;
  int oracle_k = 0;
  int gen_k = 10, gen_n = 10000, gen_d = 2;
  double separation = 8.0;
  std::uint64_t seed = 0;

  auto* fit = app.add_subcommand("fit", "infer K and cluster a feature file");
  fit->add_option("--features", features, "features CSV")->required();
  fit->add_option("--truth", truth, "ground-truth labels, used only for evaluation");
  fit->add_option("--out", out_dir, "artifact directory")->required();
  fit->add_flag("--no-split-merge", no_split_merge, "keep K fixed at --init-k");
  fit->add_flag("--no-reseed", no_reseed, "keep subclusters of rejected splits instead of re-seeding them");
  fit->add_flag("-v,--verbose", verbose, "print per-epoch progress");
  add_fit_options(*fit, cfg, psi_mode);

  auto* oracle = app.add_subcommand("oracle-em", "classical Bayesian EM with a fixed K");
  oracle->add_option("--features", features, "features CSV")->required();
  oracle->add_option("--k", oracle_k, "number of clusters")->required();
  oracle->add_option("--truth", truth, "ground-truth labels, used only for evaluation");
  oracle->add_option("--out", out_dir, "artifact directory")->required();
  add_fit_options(*oracle, cfg, psi_mode);

  auto* gen = app.add_subcommand("generate", "sample a synthetic anisotropic Gaussian mixture");
  gen->add_option("--k", gen_k, "components")->capture_default_str();
  gen->add_option("--n", gen_n, "points")->capture_default_str();
  gen->add_option("--d", gen_d, "dimension")->capture_default_str();
  gen->add_option("--separation", separation, "minimum mean distance in mean stddevs")->capture_default_str();
  gen->add_option("--weights", weights, "comma-separated component weights (default uniform)");
  gen->add_option("--seed", seed, "random seed")->capture_default_str();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* imb = app.add_subcommand("imbalance", "subsample classes to create an imbalanced dataset");
  imb->add_option("--features", features, "features CSV")->required();
  imb->add_option("--labels", labels_path, "class labels")->required();
  imb->add_option("--proportions", proportions, "comma-separated per-class retention (default flat Dirichlet)");
  imb->add_option("--seed", seed, "random seed")->capture_default_str();
  imb->add_option("--out", out_dir, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "compare two label files");
  ev->add_option("--pred", pred_path, "predicted labels")->required();
  ev->add_option("--truth", truth, "ground-truth labels")->required();
  ev->add_option("--features", features, "features CSV (enables the silhouette score)");
  ev->add_option("--threads", cfg.threads, "worker threads")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    namespace fs = std::filesystem;
    if (*fit || *oracle) {
      cfg.psi_mode = npc::parse_psi_mode(psi_mode);
      cfg.split_merge = !no_split_merge;
      cfg.reseed_rejected = !no_reseed;
      try {
        cfg.validate();
      } catch (const npc::DomainError& e) {
        throw UsageError(e.what());
      }
      const auto data = npc::read_features(features);
      std::optional<std::vector<int>> y;
      if (!truth.empty()) y = npc::read_labels(truth);
      npc::RunRecord record;
      if (*fit) {
        npc::EpochObserver observer;
        if (verbose) {
          observer = [](const npc::EpochRecord& e, const npc::ClusterModel&) {
            std::cerr << "epoch " << e.epoch << " k=" << e.k << " cluster_loss=" << e.cluster_loss
                      << " sub_loss=" << e.sub_loss << " splits=" << e.splits_accepted
                      << " merges=" << e.merges_accepted << '\n';
          };
        }
        record = npc::run_fit(data, cfg, y ? &*y : nullptr, observer);
      } else {
        record = npc::run_oracle_em(data, oracle_k, cfg, y ? &*y : nullptr);
      }
      npc::write_run(record, out_dir);
      std::cout << "final_k=" << record.final_k() << '\n';
      if (y) print_metrics(record.metrics);
    } else if (*gen) {
      std::optional<std::vector<double>> w;
      if (!weights.empty()) w = parse_list(weights);
      const auto g = npc::generate_gmm(gen_k, gen_n, gen_d, separation, w, seed);
      fs::create_directories(out_dir);
      npc::write_features(fs::path(out_dir) / "features.csv", g.data);
      npc::write_labels(fs::path(out_dir) / "labels.csv", g.labels);
      nlohmann::json meta = {{"k", gen_k}, {"n", gen_n}, {"d", gen_d}, {"separation", separation}, {"seed", seed}};
      for (const auto& c : g.components) {
        meta["components"].push_back({{"weight", c.pi},
                                      {"mean", std::vector<double>(c.mu.data(), c.mu.data() + c.mu.size())},
                                      {"stddev", npc::component_stddev(c)}});
      }
      npc::write_file_atomic(fs::path(out_dir) / "meta.json", meta.dump(2) + "\n");
    } else if (*imb) {
      const auto data = npc::read_features(features);
      const auto y = npc::read_labels(labels_path);
      std::optional<std::vector<double>> p;
      if (!proportions.empty()) p = parse_list(proportions);
      const auto sub = npc::imbalance_subsample(data, y, p, seed);
      fs::create_directories(out_dir);
      npc::write_features(fs::path(out_dir) / "features.csv", sub.data);
      npc::write_labels(fs::path(out_dir) / "labels.csv", sub.labels);
      const nlohmann::json meta = {{"proportions", sub.proportions},
                                   {"mode", p ? "explicit" : "dirichlet"},
                                   {"seed", seed},
                                   {"n_in", data.n()},
                                   {"n_out", sub.data.n()}};
      npc::write_file_atomic(fs::path(out_dir) / "meta.json", meta.dump(2) + "\n");
      std::cout << meta.dump() << '\n';
    } else if (*ev) {
      const auto pred = npc::read_labels(pred_path);
      const auto y = npc::read_labels(truth);
      if (pred.size() != y.size()) throw npc::DataError("label files differ in length");
      npc::Metrics m;
      if (!features.empty()) {
        m = npc::evaluate(npc::read_features(features), pred, y, cfg.threads);
      } else {
        m.acc = npc::clustering_accuracy(pred, y);
        m.nmi = npc::nmi(pred, y);
        if (pred.size() >= 2) m.ari = npc::ari(pred, y);
      }
      print_metrics(m);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const npc::FactorizationError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const npc::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const npc::DomainError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return 0;
}
