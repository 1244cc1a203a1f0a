#include "protonorm/aligner.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "protonorm/error.hpp"
#include "protonorm/rng.hpp"
#include "protonorm/text_io.hpp"

namespace protonorm {

void AlignerConfig::validate() const {
  if (!(mu >= 0.0 && mu < 1.0)) throw ConfigError("aligner.mu", "must satisfy 0 <= mu < 1");
  if (!(eta0 > 0.0)) throw ConfigError("aligner.eta0", "must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("aligner.decay_factor", "must lie in (0, 1]");
  if (decay_every < 1) throw ConfigError("aligner.decay_every", "must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("aligner.epsilon", "must be > 0");
  if (patience < 1) throw ConfigError("aligner.patience", "must be >= 1");
  if (max_iters < 1) throw ConfigError("aligner.max_iters", "must be >= 1");
  if (!(min_pair_distance_floor > 0.0)) throw ConfigError("aligner.min_pair_distance_floor", "must be > 0");
  if (!(coincident_jitter >= 0.0)) throw ConfigError("aligner.coincident_jitter", "must be >= 0");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::max_iters: return "max_iters";
    case Termination::skipped: return "skipped";
  }
  return "?";
}

namespace {

constexpr double kUnitTolerance = 1e-6;

Vector random_unit(Rng& rng, Eigen::Index d) {
  Vector v(d);
  do {
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
  } while (v.norm() == 0.0);
  return v / v.norm();
}

Matrix rows_of(const PrototypeSet& protos) {
  Matrix m(static_cast<Eigen::Index>(protos.size()), protos.dim());
  Eigen::Index r = 0;
  for (const auto& [id, p] : protos) m.row(r++) = p.vec.transpose();
  return m;
}

void require_unit_rows(const Matrix& points) {
  if (points.rows() < 2) throw ContractViolation("need at least two prototypes");
  for (Eigen::Index j = 0; j < points.rows(); ++j) {
    const double n = points.row(j).norm();
    if (std::abs(n - 1.0) > kUnitTolerance) {
      throw ContractViolation("prototype " + std::to_string(j) + " has norm " + format_real(n) + ", expected 1");
    }
  }
}

// One sweep over all pairs: forces, energy and distance statistics at `points`.
struct PairSweep {
  Matrix force;
  double energy = 0.0;
  DistanceStats distances;
};

PairSweep sweep(const Matrix& points, double floor) {
  const Eigen::Index k = points.rows();
  PairSweep s;
  s.force = Matrix::Zero(k, points.cols());
  s.distances = {std::numeric_limits<double>::infinity(), 0.0, 0.0};
  const double floor_sq = floor * floor;
  Eigen::RowVectorXd diff(points.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = j + 1; i < k; ++i) {
      diff = points.row(j) - points.row(i);
      const double dist_sq = std::max(diff.squaredNorm(), floor_sq);
      const double dist = std::sqrt(dist_sq);
      s.energy -= std::log(dist);
      s.distances.min = std::min(s.distances.min, dist);
      s.distances.max = std::max(s.distances.max, dist);
      s.distances.mean += dist;
      diff /= dist_sq;
      s.force.row(j) += diff;
      s.force.row(i) -= diff;
    }
  }
  s.distances.mean /= static_cast<double>(k * (k - 1) / 2);
  return s;
}

}  // namespace

PrototypeSet normalize_set(const PrototypeSet& protos, std::uint64_t seed, std::vector<std::string>* warnings) {
  PrototypeSet out(protos.num_classes(), protos.dim());
  for (const auto& [id, p] : protos) {
    const double n = p.vec.norm();
    if (n > 0.0 && std::isfinite(n)) {
      out.set(id, p.vec / n, p.support);
      continue;
    }
    Rng rng(seed, StreamPurpose::aligner, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(id));
    out.set(id, random_unit(rng, protos.dim()), p.support);
    if (warnings) warnings->push_back("class " + std::to_string(id) + " prototype has zero norm; replaced by a random unit vector");
  }
  return out;
}

double surrogate_energy(const Matrix& points, double floor) {
  require_unit_rows(points);
  return sweep(points, floor).energy;
}

double surrogate_energy(const PrototypeSet& unit_protos, double floor) {
  return surrogate_energy(rows_of(unit_protos), floor);
}

Matrix forces(const Matrix& points, double floor) {
  require_unit_rows(points);
  return sweep(points, floor).force;
}

Matrix forces(const PrototypeSet& unit_protos, double floor) { return forces(rows_of(unit_protos), floor); }

Matrix align_points(const Matrix& points, const AlignerConfig& config, AlignerTrace* trace,
                    std::vector<std::string>* warnings) {
  config.validate();
  const Eigen::Index k = points.rows();
  const Eigen::Index d = points.cols();
  AlignerTrace local;
  AlignerTrace& tr = trace ? *trace : local;
  tr = AlignerTrace{};

  Matrix c(k, d);
  Rng rng(config.seed, StreamPurpose::aligner);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double n = points.row(j).norm();
    if (n > 0.0 && std::isfinite(n)) {
      c.row(j) = points.row(j) / n;
    } else {
      Rng zr(config.seed, StreamPurpose::aligner, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(j));
      c.row(j) = random_unit(zr, d).transpose();
      if (warnings) warnings->push_back("row " + std::to_string(j) + " has zero norm; replaced by a random unit vector");
    }
  }
  if (k < 2) return c;

  // Coincident pairs sit on the kernel singularity; nudge the later one.
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = j + 1; i < k; ++i) {
      if ((c.row(j) - c.row(i)).norm() <= config.min_pair_distance_floor) {
        Eigen::RowVectorXd moved = c.row(i) + config.coincident_jitter * random_unit(rng, d).transpose();
        c.row(i) = moved / moved.norm();
        if (warnings) {
          warnings->push_back("rows " + std::to_string(j) + " and " + std::to_string(i) + " coincide; jittered row " +
                              std::to_string(i));
        }
      }
    }
  }

  PairSweep current = sweep(c, config.min_pair_distance_floor);
  tr.initial_energy = current.energy;
  tr.initial_distances = current.distances;
  tr.terminated_by = Termination::max_iters;

  Matrix velocity = Matrix::Zero(k, d);
  int calm = 0;
  double eta = config.eta0;
  for (int t = 1; t <= config.max_iters; ++t) {
    if (t > 1 && (t - 1) % config.decay_every == 0) eta *= config.decay_factor;
    velocity = config.mu * velocity + eta * current.force;
    c += velocity;
    c.rowwise().normalize();

    PairSweep next = sweep(c, config.min_pair_distance_floor);
    const double change = (next.force - current.force).rowwise().norm().maxCoeff();
    tr.steps.push_back({next.energy, next.distances, change});
    tr.iterations_run = t;
    current = std::move(next);

    calm = change < config.epsilon ? calm + 1 : 0;
    if (calm >= config.patience) {
      tr.terminated_by = Termination::converged;
      break;
    }
  }
  return c;
}

AlignResult align(const PrototypeSet& protos, const AlignerConfig& config) {
  config.validate();
  AlignResult result;
  if (protos.size() < 2) {
    result.protos = protos;
    return result;
  }
  const Matrix aligned = align_points(rows_of(protos), config, &result.trace, &result.warnings);
  result.protos = PrototypeSet(protos.num_classes(), protos.dim());
  Eigen::Index r = 0;
  for (const auto& [id, p] : protos) result.protos.set(id, aligned.row(r++).transpose(), p.support);
  return result;
}

void write_trace(std::ostream& out, const AlignerTrace& trace) {
  out << "iter,energy,min_dist,mean_dist,max_dist,max_force_change\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    out << (i + 1) << ',' << format_real(s.energy) << ',' << format_real(s.distances.min) << ','
        << format_real(s.distances.mean) << ',' << format_real(s.distances.max) << ','
        << format_real(s.max_force_change) << '\n';
  }
  if (!out) throw IoError("failed writing aligner trace");
}

}  // namespace protonorm
