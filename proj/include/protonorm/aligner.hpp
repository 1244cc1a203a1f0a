#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "protonorm/prototypes.hpp"

namespace protonorm {

/// Momentum solver settings for spreading prototypes over the unit hypersphere.
struct AlignerConfig {
  double mu = 0.9;        // momentum coefficient
  double eta0 = 0.1;      // initial step size
  double decay_factor = 0.95;
  int decay_every = 10;   // iterations between step-size decays
  double epsilon = 1e-4;  // threshold on max_j ‖F_j(t) − F_j(t−1)‖
  int patience = 10;      // consecutive sub-threshold iterations before stopping
  int max_iters = 1000;
  double min_pair_distance_floor = 1e-8;
  double coincident_jitter = 1e-6;
  std::uint64_t seed = 0;  // zero-vector replacement and coincident-pair jitter

  /// Throws ConfigError naming the offending `aligner.*` key.
  void validate() const;
};

enum class Termination { converged, max_iters, skipped };

std::string to_string(Termination t);

struct AlignerStep {
  double energy = 0.0;
  DistanceStats distances;
  double max_force_change = 0.0;
};

struct AlignerTrace {
  std::vector<AlignerStep> steps;  // one entry per iteration, measured after the update
  int iterations_run = 0;
  Termination terminated_by = Termination::skipped;
  double initial_energy = 0.0;
  DistanceStats initial_distances;
};

struct AlignResult {
  PrototypeSet protos;
  AlignerTrace trace;
  std::vector<std::string> warnings;
};

/// Scales each vector to unit length. A zero vector is replaced by a random unit
/// vector drawn from `seed` and reported in `warnings` when given.
PrototypeSet normalize_set(const PrototypeSet& protos, std::uint64_t seed = 0,
                           std::vector<std::string>* warnings = nullptr);

/// Sum over pairs of log(1/‖c_j − c_k‖), each distance clamped below at `floor`.
/// Rows of `points` must have unit norm to within 1e-6.
double surrogate_energy(const Matrix& points, double floor = 1e-8);
double surrogate_energy(const PrototypeSet& unit_protos, double floor = 1e-8);

/// F_j = sum_{k≠j} (c_j − c_k)/‖c_j − c_k‖², the negative energy gradient. Row j of the
/// result belongs to row j (or the j-th class in ascending order) of the input.
Matrix forces(const Matrix& points, double floor = 1e-8);
Matrix forces(const PrototypeSet& unit_protos, double floor = 1e-8);

/// Normalizes, then iterates v ← μv + ηF, c ← (c + v)/‖c + v‖ with η decayed by
/// `decay_factor` every `decay_every` iterations, until the force change stays
/// below `epsilon` for `patience` iterations or `max_iters` is reached. Velocities
/// start at zero on every call. Fewer than two prototypes are returned unchanged.
AlignResult align(const PrototypeSet& protos, const AlignerConfig& config);

/// Same solver on raw row vectors.
Matrix align_points(const Matrix& points, const AlignerConfig& config, AlignerTrace* trace = nullptr,
                    std::vector<std::string>* warnings = nullptr);

/// `iter,energy,min_dist,mean_dist,max_dist,max_force_change`
void write_trace(std::ostream& out, const AlignerTrace& trace);

}  // namespace protonorm
