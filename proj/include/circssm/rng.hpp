// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdint>
#include <random>

namespace circssm {

/// Deterministic random source. All samplers in this library draw through an
/// explicitly passed Rng, so runs are reproducible bit-for-bit under a fixed
/// seed and independent streams can be derived for chains, replicates and
/// annealing evaluations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Independent stream derived from (seed, stream) by splitmix64 mixing.
  static Rng substream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller (single value, no cached partner).
  double normal();

  double normal(double mu, double sd) { return mu + sd * normal(); }

  /// Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);

 private:
  std::mt19937_64 gen_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace circssm
