#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "protonorm/aligner.hpp"
#include "protonorm/dataset.hpp"
#include "protonorm/network.hpp"
#include "protonorm/prototypes.hpp"

namespace protonorm {

enum class Mode { protonorm, fedproto };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);
std::string to_string(WeightedForm form);
WeightedForm parse_weighted_form(const std::string& text);

struct SpiralConfig {
  int points_per_class = 5000;
  int num_classes = 6;
  double noise_stddev = 1.0;
};

/// Defaults reproduce the spiral recipe: 10 clients, Dirichlet(0.1), 200 rounds, γ=10.
struct FederationConfig {
  int num_clients = 10;
  int rounds = 200;
  double participation_fraction = 1.0;
  Mode mode = Mode::protonorm;
  double lambda = 1.0;
  double gamma = 10.0;
  int local_epochs = 1;
  int batch_size = 32;
  double client_lr = 0.01;
  AlignerConfig aligner;
  int input_dim = 2;  // set from the dataset, not a config key
  std::vector<int> hidden_widths{64, 64, 64};
  int decision_dim = 2;
  Activation decision_activation = Activation::identity;
  SpiralConfig data;
  PartitionOptions partition;
  double train_fraction = 0.75;
  WeightedForm weighted_form = WeightedForm::literal;
  bool report_participants_only = false;
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0: one per hardware thread
  bool dump_prototypes = true;

  NetworkSpec network() const;
  /// Throws ConfigError naming the first violated key.
  void validate() const;
};

struct ClientState {
  int id = 0;
  LabeledDataset train;
  LabeledDataset test;
  Parameters params;
  PrototypeSet local_protos;
  double last_train_loss = 0.0;
  double best_acc = 0.0;
  bool evaluated = false;
};

struct LocalUpdateResult {
  PrototypeSet protos;
  double mean_train_loss = 0.0;
  std::size_t missing_targets = 0;
};

/// Trains `client` for `config.local_epochs` epochs of shuffled minibatch SGD on
/// cross-entropy plus λ·distance to `targets` (skipped when null), then recomputes
/// its local prototypes over the whole train shard.
LocalUpdateResult local_update(ClientState& client, const PrototypeSet* targets, const FederationConfig& config,
                               int round);

/// Fraction of test samples whose nearest local prototype has the right class;
/// nullopt for an empty test shard.
std::optional<double> evaluate(const ClientState& client, const NetworkSpec& spec);

struct ClientRoundMetrics {
  int client_id = 0;
  bool participated = false;
  double train_loss = 0.0;
  std::optional<double> test_acc;
  double best_acc = 0.0;
};

struct RoundReport {
  int round = 0;
  std::vector<ClientRoundMetrics> clients;
  double mean_acc = 0.0;
  double mean_best_acc = 0.0;
  int pa_iters = 0;
  std::vector<std::pair<int, double>> margins;  // (class id, normalized margin)
  double min_margin = 0.0;
  double mean_margin = 0.0;
  std::optional<AlignerTrace> trace;
  PrototypeSet globals;
};

/// Calls made into the server-side primitives; the mode contract is checked against these.
struct ServerCounters {
  int align_calls = 0;
  int simple_aggregations = 0;
  int weighted_aggregations = 0;
};

class Federation {
 public:
  /// Generates data, partitions it, splits shards and initializes every client.
  explicit Federation(FederationConfig config);
  /// Uses a caller-supplied dataset instead of the spiral generator.
  Federation(FederationConfig config, const LabeledDataset& data);

  RoundReport run_round(int round);

  const FederationConfig& config() const { return config_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const PrototypeSet& globals() const { return globals_; }
  const ServerCounters& counters() const { return counters_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Replaces the server's global prototypes (testing hook).
  void set_globals(PrototypeSet globals) { globals_ = std::move(globals); }

  /// Sorted client ids participating in `round`.
  std::vector<int> sample_clients(int round) const;

 private:
  void setup(const LabeledDataset& data);

  FederationConfig config_;
  NetworkSpec spec_;
  std::vector<ClientState> clients_;
  PrototypeSet globals_;
  ServerCounters counters_;
  std::vector<std::string> warnings_;
};

/// K seeded random unit vectors in R^d.
PrototypeSet random_unit_prototypes(int num_classes, int dim, std::uint64_t seed);

struct ExperimentResult {
  std::vector<RoundReport> reports;
  double final_mean_best_acc = 0.0;
  ServerCounters counters;
  std::vector<std::string> warnings;
};

using RoundObserver = std::function<void(const RoundReport&)>;

ExperimentResult run_experiment(const FederationConfig& config, const RoundObserver& observer = {});

}  // namespace protonorm
