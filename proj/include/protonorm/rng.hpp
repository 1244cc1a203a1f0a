#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace protonorm {

/// Independent sub-streams derived from one master seed. Each purpose gets its
/// own stream so that, e.g., changing the batch order never shifts the data noise.
enum class StreamPurpose : std::uint64_t {
  noise = 1,
  partition = 2,
  split = 3,
  init = 4,
  sampling = 5,
  batching = 6,
  aligner = 7,
  prototype_init = 8,
};

/// splitmix64 finalizer; used for seed derivation.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed for sub-stream (purpose, index) of `master`. Stable across platforms.
std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose, std::uint64_t index = 0) noexcept;

/// Portable random source. The engine is std::mt19937_64, whose output sequence
/// is fixed by the standard; all distributions are implemented here because the
/// std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, StreamPurpose purpose, std::uint64_t index = 0)
      : engine_(derive_seed(master, purpose, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  double normal();
  double gamma(double shape);
  std::vector<double> dirichlet(double alpha, std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace protonorm
