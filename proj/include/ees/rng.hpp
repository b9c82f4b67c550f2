#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ees/types.hpp"

namespace ees {

/// splitmix64 finalizer; derives independent sub-seeds from (seed, salt).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seeded generator with platform-independent output. std::mt19937_64 is
/// fully specified by the standard; the <random> distributions are not, so
/// the uniform and normal transforms are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  // Box-Muller, one variate per call pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  Vector normal_vector(Eigen::Index dim, double sigma = 1.0) {
    Vector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = sigma * normal();
    return v;
  }

  /// Uniform direction on the unit sphere.
  Vector unit_vector(Eigen::Index dim) {
    for (;;) {
      Vector v = normal_vector(dim);
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = uniform(-bound, bound);
    return m;
  }

  Vector uniform_vector(Eigen::Index n, double bound) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(-bound, bound);
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ees
