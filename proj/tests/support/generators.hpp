#pragma once

// Seeded generators of random, valid inputs for property tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "have/snapshot.hpp"

namespace have::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive range.
  std::uint32_t between(std::uint32_t lo, std::uint32_t hi) {
    return lo + static_cast<std::uint32_t>(uniform() * (static_cast<double>(hi - lo) + 1.0));
  }
  bool chance(double p) { return uniform() < p; }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 gen_;
};

struct SnapshotLimits {
  std::uint32_t max_layers = 4;
  std::uint32_t max_heads = 4;
  std::uint32_t max_context = 32;
  std::uint32_t min_vocab = 2;
  std::uint32_t max_vocab = 64;
};

// A snapshot that passes validate_snapshot. The mix includes duplicated
// tokens, sink-only contexts, zero value norms, zero attention rows inside
// a row sum of one, flat and peaked logits.
StepSnapshot random_snapshot(Rng& rng, const SnapshotLimits& limits = {});

// A trace whose float payloads are arbitrary bit patterns (NaN payloads,
// infinities, signed zeros, subnormals included) and whose surfaces are
// arbitrary UTF-8. Suited to round-trip tests, not to decoding.
TraceFile random_trace(Rng& rng, std::uint32_t max_steps = 6);

}  // namespace have::testing
