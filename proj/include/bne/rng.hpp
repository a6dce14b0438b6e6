#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bne {

// Deterministic RNG wrapper. Draw sequences depend only on the seed and the
// call order, so results reproduce bit-for-bit across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    // 53-bit mantissa uniform in (0, 1).
    const std::uint64_t r = engine_() >> 11;
    return (static_cast<double>(r) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    return engine_() % n;
  }

  double weibull(double shape, double scale = 1.0) {
    return scale * std::pow(-std::log(uniform()), 1.0 / shape);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bne
