#include "protonorm/rng.hpp"

#include <cmath>
#include <limits>

namespace protonorm {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose, std::uint64_t index) noexcept {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(purpose));
  return mix64(h ^ (index * 0xD1B54A32D192ED03ULL));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

// Marsaglia polar method.
double Rng::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  has_spare_normal_ = true;
  return u * f;
}

// Marsaglia-Tsang; shapes below one use the U^(1/shape) boost.
double Rng::gamma(double shape) {
  if (shape < 1.0) {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t n) {
  std::vector<double> out(n);
  double total = 0.0;
  for (auto& g : out) {
    g = gamma(alpha);
    total += g;
  }
  if (total <= 0.0) {
    // Every draw underflowed (tiny alpha): put all mass on one coordinate.
    std::fill(out.begin(), out.end(), 0.0);
    out[below(n)] = 1.0;
    return out;
  }
  for (auto& g : out) g /= total;
  return out;
}

}  // namespace protonorm
