#pragma once

// Shared vocabulary for the beamprobe library: complex vector types, error
// classes, argmax helpers and the counter-based random stream derivation
// used by every stochastic component.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace beamprobe {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

/// Precondition or argument violation in a numerical operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed, truncated or otherwise unreadable file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw DomainError(message);
}

/// Values within this relative distance compare as equal (rounding-level ties).
inline constexpr double kTieTolerance = 1e-12;

inline bool strictly_greater(double a, double b) {
  return a > b + kTieTolerance * std::max(std::abs(a), std::abs(b));
}

/// Index of the largest element; ties resolve to the lowest index.
template <typename Vec>
std::size_t argmax(const Vec& values) {
  require(values.size() > 0, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < static_cast<std::size_t>(values.size()); ++i) {
    if (strictly_greater(values[i], values[best])) best = i;
  }
  return best;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double linear) { return 10.0 * std::log10(linear); }

// ---------------------------------------------------------------------------
// Random streams
//
// Every stochastic draw in the library comes from a stream keyed by
// (master seed, stream id[, stage]). Keys are mixed with the SplitMix64
// finalizer and seed a std::mt19937_64, whose output sequence is fixed by the
// standard. Normal deviates use Box-Muller on top of the raw 64-bit output
// so that values do not depend on the standard library's distribution code.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent 64-bit key from a parent key and a counter.
inline constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t counter) {
  return splitmix64(splitmix64(parent) ^ splitmix64(counter + 0x632BE59BD9B4E019ULL));
}

inline constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t a,
                                          std::uint64_t b) {
  return derive_key(derive_key(parent, a), b);
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : engine_(splitmix64(key)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal deviate (Box-Muller, one value per call).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * kPi * u2);
  }

  /// Circularly-symmetric complex Gaussian with E|n|^2 = variance.
  Complex complex_normal(double variance) {
    const double scale = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {scale * re, scale * im};
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    require(bound > 0, "RandomStream::below with zero bound");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return draw % bound;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by a RandomStream (std::shuffle's algorithm
/// is implementation defined).
template <typename Container>
void shuffle(Container& items, RandomStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace beamprobe
