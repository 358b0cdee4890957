#pragma once

#include <cmath>
#include <cstdint>
#include <locale>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mgpll/errors.hpp"

namespace mgpll {

// Deterministic RNG. The engine is mt19937_64 (exactly specified by the
// standard); all draw primitives are implemented here instead of relying on
// std distributions, whose output is implementation-defined. Identical seeds
// therefore reproduce identical streams across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) via rejection sampling (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::below: n == 0");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  // Index drawn with probability weights[i] / sum(weights).
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw InvalidArgument("Rng::categorical: negative weight");
      total += w;
    }
    if (total <= 0.0) throw InvalidArgument("Rng::categorical: weights sum to zero");
    double u = uniform() * total;
    for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return static_cast<int>(weights.size()) - 1;
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    // Box-Muller; one draw consumed per call (the pair's second half is dropped
    // so the stream position stays a simple function of the call count).
    double u1 = uniform();
    double u2 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Fisher-Yates with our own bounded draw.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

  std::string state_string() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is.imbue(std::locale::classic());
    is >> engine_;
    if (is.fail()) throw FormatError("Rng::set_state: malformed engine state");
  }

 private:
  std::mt19937_64 engine_;
};

// Stateless seed mixer for deriving independent sub-seeds (folds, sweeps).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace mgpll
