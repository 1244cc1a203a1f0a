#include "doctest.h"

#include <cmath>
#include <vector>

#include "protonorm/federation.hpp"
#include "protonorm/rng.hpp"

using namespace protonorm;

namespace {

FederationConfig small_config(Mode mode) {
  FederationConfig c;
  c.mode = mode;
  c.num_clients = 4;
  c.rounds = 4;
  c.data = {60, 3, 1.0};
  c.partition.alpha = 1.0;
  c.hidden_widths = {8, 8};
  c.threads = 1;
  c.dump_prototypes = false;
  return c;
}

double max_abs_diff(const Parameters& a, const Parameters& b) {
  double m = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    m = std::max(m, (a.layers[l].weight - b.layers[l].weight).cwiseAbs().maxCoeff());
    m = std::max(m, (a.layers[l].bias - b.layers[l].bias).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace

TEST_CASE("local update with no epochs and no regularizer changes nothing") {
  auto cfg = small_config(Mode::protonorm);
  cfg.local_epochs = 0;
  cfg.lambda = 0.0;
  Federation fed(cfg);
  ClientState client = fed.clients()[0];
  const Parameters before = client.params;
  const auto r = local_update(client, nullptr, fed.config(), 0);
  CHECK(client.params == before);
  const auto feats = forward(fed.config().network(), before, client.train.features).features;
  const auto expected = local_prototypes(feats, client.train.labels, cfg.data.num_classes);
  CHECK(r.protos == expected);
}

TEST_CASE("regularizer vanishes when targets sit on the features") {
  // One training sample per class, so each local prototype is that sample's feature.
  auto cfg = small_config(Mode::protonorm);
  LabeledDataset shard;
  shard.num_classes = 3;
  shard.features.resize(3, 2);
  shard.features << 1.0, 2.0, -3.0, 0.5, 0.2, -4.0;
  shard.labels = {0, 1, 2};
  const auto spec = cfg.network();
  const auto params = init_parameters(spec, 9);
  const auto feats = forward(spec, params, shard.features).features;
  const auto targets = local_prototypes(feats, shard.labels, 3);
  const auto r = loss_and_grads(spec, params, shard.features, shard.labels, &targets, 1e6);
  CHECK(r.regularizer == 0.0);
  const auto plain = loss_and_grads(spec, params, shard.features, shard.labels, nullptr, 0.0);
  CHECK(r.loss == plain.loss);
  CHECK(r.grads == plain.grads);
}

TEST_CASE("client sampling") {
  auto cfg = small_config(Mode::protonorm);
  cfg.num_clients = 20;
  Federation full(cfg);
  for (int r = 0; r < 5; ++r) CHECK(full.sample_clients(r).size() == 20);

  cfg.participation_fraction = 0.3;
  Federation part(cfg);
  bool varies = false;
  const auto first = part.sample_clients(0);
  for (int r = 0; r < 10; ++r) {
    const auto ids = part.sample_clients(r);
    CHECK(ids.size() == 6);
    CHECK(std::is_sorted(ids.begin(), ids.end()));
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
    CHECK(ids == part.sample_clients(r));
    varies = varies || ids != first;
  }
  CHECK(varies);
}

TEST_CASE("protonorm rounds keep unit-norm globals and count aligner calls") {
  auto cfg = small_config(Mode::protonorm);
  Federation fed(cfg);
  REQUIRE(fed.globals().size() == 3);
  for (const auto& [j, p] : fed.globals()) CHECK(std::abs(p.vec.norm() - 1.0) <= 1e-12);
  std::vector<double> best(4, -1.0);
  for (int r = 0; r < cfg.rounds; ++r) {
    const auto rep = fed.run_round(r);
    CHECK(rep.clients.size() == 4);
    CHECK(rep.pa_iters > 0);
    REQUIRE(rep.trace.has_value());
    CHECK(rep.trace->iterations_run == rep.pa_iters);
    for (const auto& [j, p] : rep.globals) CHECK(std::abs(p.vec.norm() - 1.0) <= 1e-12);
    for (const auto& m : rep.clients) {
      CHECK(m.best_acc >= best[static_cast<std::size_t>(m.client_id)]);
      best[static_cast<std::size_t>(m.client_id)] = m.best_acc;
      if (m.test_acc) CHECK(m.best_acc >= *m.test_acc);
    }
  }
  CHECK(fed.counters().align_calls == cfg.rounds);
  CHECK(fed.counters().simple_aggregations == cfg.rounds);
  CHECK(fed.counters().weighted_aggregations == 0);
}

TEST_CASE("fedproto never aligns and publishes the weighted aggregate") {
  auto cfg = small_config(Mode::fedproto);
  Federation fed(cfg);
  CHECK(fed.globals().empty());
  for (int r = 0; r < cfg.rounds; ++r) {
    const auto rep = fed.run_round(r);
    CHECK(rep.pa_iters == 0);
    CHECK_FALSE(rep.trace.has_value());
    std::vector<PrototypeSet> locals;
    for (const auto& c : fed.clients()) locals.push_back(c.local_protos);
    CHECK(fed.globals() == aggregate_weighted(locals, cfg.weighted_form));
  }
  CHECK(fed.counters().align_calls == 0);
  CHECK(fed.counters().weighted_aggregations == cfg.rounds);
}

TEST_CASE("classes absent from every client keep their previous global") {
  auto cfg = small_config(Mode::protonorm);
  const auto full = generate_spiral(60, 3, 5);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (full.labels[i] != 2) keep.push_back(i);
  }
  const auto data = subset(full, keep);
  REQUIRE(data.num_classes == 3);
  cfg.partition.mode = PartitionMode::iid;
  Federation fed(cfg, data);
  const Vector initial = fed.globals().at(2).vec;
  const Vector initial_present = fed.globals().at(0).vec;
  for (int r = 0; r < 3; ++r) {
    const auto rep = fed.run_round(r);
    CHECK(rep.globals.at(2).vec == initial);
    CHECK(rep.globals.at(0).vec != initial_present);
  }
}

TEST_CASE("runs are deterministic and independent of thread count") {
  auto cfg = small_config(Mode::protonorm);
  const auto a = run_experiment(cfg);
  cfg.threads = 3;
  const auto b = run_experiment(cfg);
  REQUIRE(a.reports.size() == static_cast<std::size_t>(cfg.rounds));
  REQUIRE(b.reports.size() == a.reports.size());
  for (std::size_t r = 0; r < a.reports.size(); ++r) {
    CHECK(a.reports[r].mean_acc == b.reports[r].mean_acc);
    CHECK(a.reports[r].globals == b.reports[r].globals);
    for (std::size_t c = 0; c < a.reports[r].clients.size(); ++c)
      CHECK(a.reports[r].clients[c].train_loss == b.reports[r].clients[c].train_loss);
  }
  CHECK(a.final_mean_best_acc == b.final_mean_best_acc);

  cfg.master_seed = 2;
  CHECK(run_experiment(cfg).reports.back().globals != a.reports.back().globals);
}

TEST_CASE("training moves the parameters") {
  auto cfg = small_config(Mode::fedproto);
  Federation fed(cfg);
  const Parameters before = fed.clients()[0].params;
  fed.run_round(0);
  CHECK(max_abs_diff(before, fed.clients()[0].params) > 0.0);
}

TEST_CASE("federation config validation") {
  auto bad = [](auto mutate, const std::string& key) {
    auto cfg = small_config(Mode::protonorm);
    mutate(cfg);
    try {
      cfg.validate();
      FAIL("accepted invalid " << key);
    } catch (const ConfigError& e) {
      CHECK(e.key() == key);
    }
  };
  bad([](FederationConfig& c) { c.gamma = 0.0; }, "gamma");
  bad([](FederationConfig& c) { c.participation_fraction = 0.0; }, "participation_fraction");
  bad([](FederationConfig& c) { c.participation_fraction = 1.5; }, "participation_fraction");
  bad([](FederationConfig& c) { c.client_lr = -1.0; }, "client_lr");
  bad([](FederationConfig& c) { c.batch_size = 0; }, "batch_size");
  bad([](FederationConfig& c) { c.num_clients = 0; }, "clients");
  bad([](FederationConfig& c) { c.rounds = 0; }, "rounds");
  bad([](FederationConfig& c) { c.aligner.mu = 1.0; }, "aligner.mu");
}
