#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "protonorm/reporting.hpp"
#include "protonorm/rng.hpp"
#include "protonorm/text_io.hpp"
#include "support/oracles.hpp"

using namespace protonorm;
namespace fs = std::filesystem;

namespace {

FederationConfig tiny(Mode mode) {
  FederationConfig c;
  c.mode = mode;
  c.num_clients = 3;
  c.rounds = 3;
  c.data = {40, 3, 1.0};
  c.partition.alpha = 1.0;
  c.hidden_widths = {6};
  c.threads = 1;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("protonorm_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("real formatting round-trips") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.below(200)) - 100);
    CHECK(parse_real(format_real(x)) == x);
  }
  CHECK(format_real(0.1) == "0.1");
  CHECK(format_real(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("protonorm run artifacts") {
  TempDir dir("pn");
  const auto cfg = tiny(Mode::protonorm);
  const auto result = run_experiment(cfg);
  emit_reports(result, cfg, dir.path);

  const auto metrics = lines(slurp(dir.path / "metrics.csv"));
  CHECK(metrics.front() == "round,client_id,train_loss,test_acc,best_acc");
  CHECK(metrics.size() == static_cast<std::size_t>(cfg.rounds * cfg.num_clients + 1));
  const auto summary = lines(slurp(dir.path / "summary.csv"));
  CHECK(summary.front() == "round,mean_acc,mean_best_acc,pa_iters,min_margin,mean_margin");
  CHECK(summary.size() == static_cast<std::size_t>(cfg.rounds + 1));

  const auto margins = lines(slurp(dir.path / "margins.csv"));
  CHECK(margins.front() == "round,class_id,normalized_margin");
  std::vector<bool> has_one(static_cast<std::size_t>(cfg.rounds), false);
  for (std::size_t i = 1; i < margins.size(); ++i) {
    const auto f = split_fields(margins[i], ',');
    const double m = parse_real(f[2]);
    CHECK((m > 0.0 && m <= 1.0));
    if (m == 1.0) has_one[static_cast<std::size_t>(parse_integer(f[0]))] = true;
  }
  for (bool b : has_one) CHECK(b);

  for (int r = 0; r < cfg.rounds; ++r) {
    const auto trace = lines(slurp(dir.path / ("pa_trace_round_" + std::to_string(r) + ".csv")));
    CHECK(trace.front() == "iter,energy,min_dist,mean_dist,max_dist,max_force_change");
    CHECK(trace.size() == static_cast<std::size_t>(result.reports[static_cast<std::size_t>(r)].pa_iters + 1));
  }

  std::ifstream dump(dir.path / "global_prototypes.csv");
  const auto rounds = read_prototype_dump(dump);
  REQUIRE(rounds.size() == static_cast<std::size_t>(cfg.rounds));
  CHECK(rounds.at(2) == result.reports[2].globals);
}

TEST_CASE("fedproto runs write no aligner traces") {
  TempDir dir("fp");
  auto cfg = tiny(Mode::fedproto);
  cfg.dump_prototypes = false;
  emit_reports(run_experiment(cfg), cfg, dir.path);
  CHECK(fs::exists(dir.path / "summary.csv"));
  CHECK_FALSE(fs::exists(dir.path / "global_prototypes.csv"));
  for (const auto& e : fs::directory_iterator(dir.path))
    CHECK(e.path().filename().string().rfind("pa_trace", 0) == std::string::npos);
}

TEST_CASE("reruns are byte identical") {
  TempDir a("a"), b("b");
  const auto cfg = tiny(Mode::protonorm);
  emit_reports(run_experiment(cfg), cfg, a.path);
  emit_reports(run_experiment(cfg), cfg, b.path);
  for (const char* f : {"metrics.csv", "summary.csv", "margins.csv", "global_prototypes.csv"})
    CHECK(slurp(a.path / f) == slurp(b.path / f));
}

TEST_CASE("prototype csv and dump round trips") {
  Rng rng(6);
  const auto set = oracle::set_from_rows(oracle::random_unit_rows(rng, 5, 4));
  std::stringstream csv;
  write_prototype_csv(csv, set);
  CHECK(read_prototype_csv(csv) == set);

  std::stringstream headerless("0,1,0\n2,0,1\n");
  const auto sparse = read_prototype_csv(headerless);
  CHECK(sparse.num_classes() == 3);
  CHECK(sparse.class_ids() == std::vector<int>{0, 2});

  std::stringstream bad("0,1,0\n1,2\n");
  CHECK_THROWS(read_prototype_csv(bad));

  std::stringstream dump;
  write_prototype_dump(dump, 0, set, true);
  write_prototype_dump(dump, 7, upscale(set, 2.0), false);
  const auto back = read_prototype_dump(dump);
  CHECK(back.at(0) == set);
  CHECK(back.at(7) == upscale(set, 2.0));

  const auto rows = summarize_dump(back);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].distances.mean == doctest::Approx(2.0 * rows[0].distances.mean).epsilon(1e-12));
  CHECK(rows[0].margin_cv == doctest::Approx(rows[1].margin_cv).epsilon(1e-12));
}
