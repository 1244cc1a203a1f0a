#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "protonorm/aligner.hpp"
#include "protonorm/error.hpp"
#include "protonorm/rng.hpp"
#include "support/oracles.hpp"

using namespace protonorm;

namespace {

Matrix rows2(std::initializer_list<std::pair<double, double>> pts) {
  Matrix m(static_cast<Eigen::Index>(pts.size()), 2);
  Eigen::Index r = 0;
  for (const auto& [a, b] : pts) {
    m(r, 0) = a;
    m(r, 1) = b;
    ++r;
  }
  return m;
}

std::vector<double> all_distances(const Matrix& m) {
  std::vector<double> out;
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    for (Eigen::Index k = j + 1; k < m.rows(); ++k) out.push_back((m.row(j) - m.row(k)).norm());
  }
  return out;
}

Matrix random_orthogonal(Rng& rng, int d) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

}  // namespace

TEST_CASE("normalize_set") {
  PrototypeSet s(3, 2);
  s.set(0, (Vector(2) << 3, 4).finished());
  s.set(1, (Vector(2) << 0.6, 0.8).finished());
  std::vector<std::string> warnings;
  const auto n = normalize_set(s, 1, &warnings);
  CHECK(n.at(0).vec(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.at(0).vec(1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(n.at(1).vec == s.at(1).vec);
  CHECK(warnings.empty());

  s.set(2, Vector::Zero(2));
  const auto z = normalize_set(s, 5, &warnings);
  CHECK(z.at(2).vec.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(warnings.size() == 1);
  CHECK(normalize_set(s, 5) == z);  // seeded
}

TEST_CASE("surrogate energy examples") {
  CHECK(surrogate_energy(rows2({{1, 0}, {-1, 0}})) == doctest::Approx(-0.693147180559945).epsilon(1e-12));
  CHECK(surrogate_energy(rows2({{1, 0}, {0, 1}})) == doctest::Approx(-0.346573590279973).epsilon(1e-12));
  CHECK(surrogate_energy(oracle::regular_simplex(3)) == doctest::Approx(-1.647918433002164).epsilon(1e-12));
  CHECK_THROWS_AS(surrogate_energy(rows2({{2, 0}, {0, 1}})), ContractViolation);
  CHECK(std::isfinite(surrogate_energy(rows2({{1, 0}, {1, 0}}))));  // clamped
}

TEST_CASE("force examples") {
  const Matrix f = forces(rows2({{1, 0}, {-1, 0}}));
  CHECK(f(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(f(0, 1) == 0.0);
  const Matrix g = forces(rows2({{1, 0}, {0, 1}}));
  CHECK(g(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g(0, 1) == doctest::Approx(-0.5).epsilon(1e-15));
  const Matrix tri = oracle::regular_simplex(3);
  CHECK((forces(tri) - tri).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(forces(rows2({{0.5, 0}, {0, 1}})), ContractViolation);
}

TEST_CASE("forces equal the negative finite-difference energy gradient") {
  Rng rng(41);
  for (int c = 0; c < 200; ++c) {
    const int k = 2 + static_cast<int>(rng.below(7));
    const int d = 2 + static_cast<int>(rng.below(7));
    const Matrix pts = oracle::random_unit_rows(rng, k, d);
    const Matrix f = forces(pts);
    auto rows = oracle::to_rows(pts);
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < d; ++i) {
        double& slot = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        const double saved = slot;
        const double grad = oracle::central_difference(
            [&](double v) {
              slot = v;
              return oracle::reference_energy(rows);
            },
            saved, 1e-6);
        slot = saved;
        CHECK_MESSAGE(oracle::close_rel(f(j, i), -grad, 1e-5, 1e-7), "F ", f(j, i), " fd ", -grad);
      }
    }
  }
}

TEST_CASE("align reaches the small Thomson optima") {
  AlignerConfig cfg;
  Rng rng(42);
  for (int s = 0; s < 5; ++s) {
    const Matrix two = align_points(oracle::random_unit_rows(rng, 2, 7), cfg);
    CHECK((two.row(0) - two.row(1)).norm() == doctest::Approx(2.0).epsilon(1e-3));
    for (double dist : all_distances(align_points(oracle::random_unit_rows(rng, 3, 2), cfg)))
      CHECK(std::abs(dist - std::sqrt(3.0)) < 1e-2);
    for (double dist : all_distances(align_points(oracle::random_unit_rows(rng, 4, 3), cfg)))
      CHECK(std::abs(dist - std::sqrt(8.0 / 3.0)) < 1e-2);
    const auto hex = all_distances(align_points(oracle::random_unit_rows(rng, 6, 2), cfg));
    CHECK(std::abs(*std::min_element(hex.begin(), hex.end()) - 1.0) < 1e-2);
  }
}

TEST_CASE("a regular simplex is a fixed point of one iteration") {
  AlignerConfig cfg;
  cfg.max_iters = 1;
  for (int k : {3, 4, 5}) {
    const Matrix s = oracle::regular_simplex(k);
    AlignerTrace trace;
    const Matrix out = align_points(s, cfg, &trace);
    CHECK(trace.iterations_run == 1);
    CHECK((out - s).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("trace bookkeeping and energy decrease") {
  AlignerConfig cfg;
  Rng rng(43);
  for (int c = 0; c < 20; ++c) {
    const int k = 2 + static_cast<int>(rng.below(10));
    const int d = 2 + static_cast<int>(rng.below(10));
    const Matrix in = oracle::random_unit_rows(rng, k, d);
    AlignerTrace trace;
    const Matrix out = align_points(in, cfg, &trace);
    CHECK(trace.steps.size() == static_cast<std::size_t>(trace.iterations_run));
    CHECK(trace.initial_energy == doctest::Approx(surrogate_energy(in)).epsilon(1e-12));
    CHECK(trace.steps.back().energy == doctest::Approx(surrogate_energy(out)).epsilon(1e-12));
    if (trace.terminated_by == Termination::converged) {
      CHECK(trace.steps.back().energy <= trace.initial_energy);
      CHECK(trace.iterations_run >= cfg.patience);
    }
    for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK(out.row(r).norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  cfg.max_iters = 7;
  cfg.epsilon = 1e-300;
  AlignerTrace capped;
  align_points(oracle::random_unit_rows(rng, 5, 3), cfg, &capped);
  CHECK(capped.iterations_run == 7);
  CHECK(capped.terminated_by == Termination::max_iters);
}

TEST_CASE("align is rotation equivariant") {
  AlignerConfig cfg;
  Rng rng(44);
  for (int c = 0; c < 10; ++c) {
    const int k = 3 + static_cast<int>(rng.below(6));
    const int d = 2 + static_cast<int>(rng.below(6));
    const Matrix in = oracle::random_unit_rows(rng, k, d);
    const Matrix q = random_orthogonal(rng, d);
    const Matrix a = align_points(in, cfg) * q;
    const Matrix b = align_points(in * q, cfg);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("degenerate inputs") {
  AlignerConfig cfg;
  PrototypeSet single(4, 3);
  single.set(2, (Vector(3) << 0, 0, 5).finished());
  const auto r = align(single, cfg);
  CHECK(r.protos == single);
  CHECK(r.trace.iterations_run == 0);
  CHECK(r.trace.terminated_by == Termination::skipped);

  // Coincident points are pulled apart by the jitter and end antipodal.
  const Matrix same = rows2({{1, 0}, {1, 0}});
  const Matrix out = align_points(same, cfg);
  CHECK((out.row(0) - out.row(1)).norm() == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(align_points(same, cfg) == out);

  PrototypeSet with_zero(3, 2);
  with_zero.set(0, Vector::Zero(2));
  with_zero.set(1, (Vector(2) << 1, 0).finished());
  with_zero.set(2, (Vector(2) << 0, 2).finished());
  const auto z = align(with_zero, cfg);
  CHECK(z.warnings.size() == 1);
  CHECK(z.protos.class_ids() == std::vector<int>{0, 1, 2});
  for (const auto& [j, p] : z.protos) CHECK(p.vec.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("aligner config validation names the key") {
  auto bad = [](auto mutate, const std::string& key) {
    AlignerConfig cfg;
    mutate(cfg);
    try {
      cfg.validate();
      FAIL("accepted invalid " << key);
    } catch (const ConfigError& e) {
      CHECK(e.key() == key);
    }
  };
  bad([](AlignerConfig& c) { c.mu = 1.0; }, "aligner.mu");
  bad([](AlignerConfig& c) { c.mu = -0.1; }, "aligner.mu");
  bad([](AlignerConfig& c) { c.eta0 = 0.0; }, "aligner.eta0");
  bad([](AlignerConfig& c) { c.decay_factor = 1.5; }, "aligner.decay_factor");
  bad([](AlignerConfig& c) { c.epsilon = 0.0; }, "aligner.epsilon");
  bad([](AlignerConfig& c) { c.patience = 0; }, "aligner.patience");
  bad([](AlignerConfig& c) { c.max_iters = 0; }, "aligner.max_iters");
  CHECK_NOTHROW(AlignerConfig{}.validate());
}
