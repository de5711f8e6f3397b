#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>

namespace mondrian {

// splitmix64 step; used to derive independent stream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable per-stream seed derivation, e.g. one stream per tree of a forest.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= 0xd1342543de82ef95ULL * (stream + 1);
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
}

// mt19937_64 with hand-rolled variate transforms. The standard pins the
// engine's output exactly but not the library distributions, so rolling the
// transforms ourselves keeps streams identical across platforms and compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // uniform on [0, 1)
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // uniform on the open interval (a, b); boundary hits are resampled
  double uniform_open(double a, double b) {
    for (int i = 0; i < 128; ++i) {
      double v = uniform(a, b);
      if (v > a && v < b) return v;
    }
    return std::midpoint(a, b);
  }

  double exponential(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
    return -std::log1p(-uniform01()) / rate;
  }

  // standard normal via Box-Muller
  double normal() {
    double u1 = uniform01();
    while (u1 == 0.0) u1 = uniform01();
    double u2 = uniform01();
    constexpr double two_pi = 6.283185307179586476925287;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // index i with probability weights[i] / total; total must equal the sum
  int categorical(std::span<const double> weights, double total) {
    double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return static_cast<int>(i);
    }
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return static_cast<int>(i);
    throw std::invalid_argument("categorical: no positive weight");
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mondrian
