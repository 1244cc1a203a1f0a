#include "protonorm/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "protonorm/error.hpp"
#include "protonorm/rng.hpp"

namespace protonorm {

std::string to_string(Mode mode) { return mode == Mode::protonorm ? "protonorm" : "fedproto"; }

Mode parse_mode(const std::string& text) {
  if (text == "protonorm") return Mode::protonorm;
  if (text == "fedproto") return Mode::fedproto;
  throw ConfigError("mode", "expected protonorm|fedproto, got '" + text + "'");
}

std::string to_string(WeightedForm form) { return form == WeightedForm::literal ? "literal" : "convex"; }

WeightedForm parse_weighted_form(const std::string& text) {
  if (text == "literal") return WeightedForm::literal;
  if (text == "convex") return WeightedForm::convex;
  throw ConfigError("weighted_form", "expected literal|convex, got '" + text + "'");
}

NetworkSpec FederationConfig::network() const {
  NetworkSpec spec;
  spec.widths.push_back(input_dim);
  spec.widths.insert(spec.widths.end(), hidden_widths.begin(), hidden_widths.end());
  spec.widths.push_back(decision_dim);
  spec.widths.push_back(data.num_classes);
  spec.decision_activation = decision_activation;
  return spec;
}

void FederationConfig::validate() const {
  if (num_clients < 1) throw ConfigError("clients", "must be >= 1");
  if (rounds < 1) throw ConfigError("rounds", "must be >= 1");
  if (!(participation_fraction > 0.0 && participation_fraction <= 1.0)) {
    throw ConfigError("participation_fraction", "must lie in (0, 1]");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "must be a finite value >= 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma", "must be a finite value > 0");
  if (local_epochs < 0) throw ConfigError("local_epochs", "must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (!(client_lr > 0.0)) throw ConfigError("client_lr", "must be > 0");
  aligner.validate();
  for (int w : hidden_widths) {
    if (w < 1) throw ConfigError("network.hidden", "widths must be positive");
  }
  if (decision_dim < 1) throw ConfigError("network.decision_dim", "must be >= 1");
  if (data.points_per_class < 2) throw ConfigError("points_per_class", "must be >= 2");
  if (data.num_classes < 2) throw ConfigError("num_classes", "must be >= 2");
  if (!(data.noise_stddev >= 0.0)) throw ConfigError("noise_stddev", "must be >= 0");
  if (partition.mode == PartitionMode::dirichlet && !(partition.alpha > 0.0)) throw ConfigError("alpha", "must be > 0");
  if (partition.classes_per_client < 1 || partition.classes_per_client > data.num_classes) {
    throw ConfigError("classes_per_client", "must lie in 1..num_classes");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction", "must lie in (0, 1)");
  if (threads < 0) throw ConfigError("threads", "must be >= 0");
}

PrototypeSet random_unit_prototypes(int num_classes, int dim, std::uint64_t seed) {
  Rng rng(seed);
  PrototypeSet out(num_classes, dim);
  for (int j = 0; j < num_classes; ++j) {
    Vector v(dim);
    do {
      for (int i = 0; i < dim; ++i) v(i) = rng.normal();
    } while (v.norm() == 0.0);
    out.set(j, v / v.norm());
  }
  return out;
}

namespace {

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

PrototypeSet prototypes_of(const ClientState& client, const NetworkSpec& spec) {
  const auto fwd = forward(spec, client.params, client.train.features);
  return local_prototypes(fwd.features, client.train.labels, spec.num_classes());
}

// Runs body(i) for i in [0, n) on up to `threads` workers; rethrows the failure
// with the lowest index so the reported error does not depend on scheduling.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body body) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  std::vector<std::exception_ptr> errors(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

LocalUpdateResult local_update(ClientState& client, const PrototypeSet* targets, const FederationConfig& config,
                               int round) {
  const NetworkSpec spec = config.network();
  const std::size_t n = client.train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  Rng rng(config.master_seed, StreamPurpose::batching,
          (static_cast<std::uint64_t>(round) << 24) + static_cast<std::uint64_t>(client.id));
  LocalUpdateResult result;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  std::vector<int> labels;
  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix inputs = gather_rows(client.train.features, rows);
      labels.resize(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = client.train.labels[rows[r]];
      auto step = loss_and_grads(spec, client.params, inputs, labels, targets, config.lambda,
                                 {round, client.id, static_cast<int>(batches)});
      sgd_step(client.params, step.grads, config.client_lr);
      loss_sum += step.loss;
      result.missing_targets += step.missing_targets;
      ++batches;
    }
  }
  result.mean_train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  client.last_train_loss = result.mean_train_loss;
  client.local_protos = prototypes_of(client, spec);
  result.protos = client.local_protos;
  return result;
}

std::optional<double> evaluate(const ClientState& client, const NetworkSpec& spec) {
  if (client.test.size() == 0 || client.local_protos.empty()) return std::nullopt;
  const auto fwd = forward(spec, client.params, client.test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < client.test.size(); ++i) {
    const Vector f = fwd.features.row(static_cast<Eigen::Index>(i)).transpose();
    if (classify_nearest(f, client.local_protos) == client.test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(client.test.size());
}

Federation::Federation(FederationConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto data = generate_spiral(config_.data.points_per_class, config_.data.num_classes, config_.master_seed,
                                    config_.data.noise_stddev);
  setup(data);
}

Federation::Federation(FederationConfig config, const LabeledDataset& data) : config_(std::move(config)) {
  config_.validate();
  data.validate();
  if (data.num_classes != config_.data.num_classes) {
    throw ConfigError("num_classes", "does not match the supplied dataset (" + std::to_string(data.num_classes) + ")");
  }
  config_.input_dim = data.dim();
  setup(data);
}

void Federation::setup(const LabeledDataset& data) {
  spec_ = config_.network();
  const auto plan = partition(data, config_.num_clients, config_.partition, config_.master_seed);
  auto split = split_train_test(plan, data, config_.train_fraction, config_.master_seed);
  warnings_ = std::move(split.warnings);

  clients_.resize(static_cast<std::size_t>(config_.num_clients));
  for (int c = 0; c < config_.num_clients; ++c) {
    auto& client = clients_[static_cast<std::size_t>(c)];
    client.id = c;
    client.train = subset(data, split.clients[static_cast<std::size_t>(c)].train);
    client.test = subset(data, split.clients[static_cast<std::size_t>(c)].test);
    client.params = init_parameters(spec_, derive_seed(config_.master_seed, StreamPurpose::init,
                                                       static_cast<std::uint64_t>(c)));
    client.local_protos = prototypes_of(client, spec_);
    if (client.test.size() == 0) warnings_.push_back("client " + std::to_string(c) + " has an empty test shard");
  }

  if (config_.mode == Mode::protonorm) {
    globals_ = random_unit_prototypes(config_.data.num_classes, config_.decision_dim,
                                      derive_seed(config_.master_seed, StreamPurpose::prototype_init));
  } else {
    globals_ = PrototypeSet(config_.data.num_classes, config_.decision_dim);
  }
}

std::vector<int> Federation::sample_clients(int round) const {
  const int m = config_.num_clients;
  const int take = std::clamp(static_cast<int>(std::ceil(config_.participation_fraction * m - 1e-9)), 1, m);
  std::vector<int> ids(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) ids[static_cast<std::size_t>(i)] = i;
  if (take < m) {
    Rng rng(config_.master_seed, StreamPurpose::sampling, static_cast<std::uint64_t>(round));
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(take));
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

RoundReport Federation::run_round(int round) {
  RoundReport report;
  report.round = round;
  const auto participants = sample_clients(round);

  std::optional<PrototypeSet> targets;
  if (config_.mode == Mode::protonorm) {
    targets = upscale(globals_, config_.gamma);
  } else if (!globals_.empty()) {
    targets = globals_;
  }
  const PrototypeSet* target_ptr = targets ? &*targets : nullptr;

  std::vector<LocalUpdateResult> updates(participants.size());
  parallel_for(participants.size(), config_.threads, [&](std::size_t i) {
    updates[i] = local_update(clients_[static_cast<std::size_t>(participants[i])], target_ptr, config_, round);
  });

  // Server phase, in ascending client-id order.
  std::vector<PrototypeSet> locals;
  locals.reserve(updates.size());
  for (auto& u : updates) locals.push_back(u.protos);
  PrototypeSet aggregated;
  if (config_.mode == Mode::protonorm) {
    aggregated = aggregate_simple(locals);
    ++counters_.simple_aggregations;
  } else {
    aggregated = aggregate_weighted(locals, config_.weighted_form);
    ++counters_.weighted_aggregations;
  }

  if (config_.mode == Mode::protonorm && aggregated.size() >= 1) {
    AlignerConfig ac = config_.aligner;
    ac.seed = derive_seed(config_.master_seed, StreamPurpose::aligner, static_cast<std::uint64_t>(round));
    auto aligned = align(aggregated, ac);
    ++counters_.align_calls;
    // A lone class skips the solver and still needs projecting onto the sphere.
    if (aligned.trace.terminated_by == Termination::skipped) aligned.protos = normalize_set(aligned.protos, ac.seed);
    report.pa_iters = aligned.trace.iterations_run;
    report.trace = std::move(aligned.trace);
    for (auto& w : aligned.warnings) warnings_.push_back("round " + std::to_string(round) + ": " + w);
    aggregated = std::move(aligned.protos);
  }

  // Classes nobody reported this round keep their previous global prototype.
  PrototypeSet next(globals_.num_classes(), globals_.dim());
  for (const auto& [id, p] : globals_) next.set(p);
  for (const auto& [id, p] : aggregated) next.set(id, p.vec);
  globals_ = std::move(next);

  std::vector<bool> took_part(clients_.size(), false);
  for (int id : participants) took_part[static_cast<std::size_t>(id)] = true;
  double acc_sum = 0.0, best_sum = 0.0;
  std::size_t counted = 0;
  for (auto& client : clients_) {
    ClientRoundMetrics m;
    m.client_id = client.id;
    m.participated = took_part[static_cast<std::size_t>(client.id)];
    m.train_loss = client.last_train_loss;
    m.test_acc = evaluate(client, spec_);
    if (m.test_acc) {
      client.best_acc = client.evaluated ? std::max(client.best_acc, *m.test_acc) : *m.test_acc;
      client.evaluated = true;
    }
    m.best_acc = client.best_acc;
    if (m.test_acc && (!config_.report_participants_only || m.participated)) {
      acc_sum += *m.test_acc;
      best_sum += m.best_acc;
      ++counted;
    }
    report.clients.push_back(m);
  }
  report.mean_acc = counted ? acc_sum / static_cast<double>(counted) : 0.0;
  report.mean_best_acc = counted ? best_sum / static_cast<double>(counted) : 0.0;

  if (globals_.size() >= 2) {
    const auto norm = margins(globals_);
    const auto ids = globals_.class_ids();
    double sum = 0.0;
    report.min_margin = norm.front();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      report.margins.emplace_back(ids[i], norm[i]);
      report.min_margin = std::min(report.min_margin, norm[i]);
      sum += norm[i];
    }
    report.mean_margin = sum / static_cast<double>(norm.size());
  }
  report.globals = globals_;
  return report;
}

ExperimentResult run_experiment(const FederationConfig& config, const RoundObserver& observer) {
  Federation fed(config);
  ExperimentResult result;
  result.reports.reserve(static_cast<std::size_t>(config.rounds));
  for (int r = 0; r < config.rounds; ++r) {
    result.reports.push_back(fed.run_round(r));
    if (observer) observer(result.reports.back());
  }
  result.final_mean_best_acc = result.reports.back().mean_best_acc;
  result.counters = fed.counters();
  result.warnings = fed.warnings();
  return result;
}

}  // namespace protonorm
