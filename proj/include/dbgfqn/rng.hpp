#pragma once

// mt19937 plus hand-rolled sampling helpers. std::*_distribution is
// implementation-defined; these keep trajectories reproducible across
// toolchains and serializable as plain text.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace dbgfqn {

class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(uint64_t seed) : engine_(static_cast<uint_fast32_t>(seed)) {}

  void seed(uint64_t s) { engine_.seed(static_cast<uint_fast32_t>(s)); }

  uint32_t next_u32() { return static_cast<uint32_t>(engine_()); }

  // Uniform in [0, n) without modulo bias.
  int uniform_int(int n) {
    const uint32_t bound = static_cast<uint32_t>(n);
    const uint32_t limit = UINT32_MAX - UINT32_MAX % bound;
    uint32_t x;
    do {
      x = next_u32();
    } while (x >= limit);
    return static_cast<int>(x % bound);
  }

  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; one value per call, no cached state to serialize.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 1e-12);
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
  }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

 private:
  std::mt19937 engine_;
};

}  // namespace dbgfqn
