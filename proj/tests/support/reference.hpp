#pragma once

// Naive reference decoder. Written from the formulas with plain loops and
// long double accumulation; it calls nothing from the library, only reads
// the snapshot fields.

#include <cstdint>
#include <map>
#include <vector>

#include "have/snapshot.hpp"

namespace have::testing {

struct ReferenceConfig {
  double alpha = 1.0;
  std::uint32_t top_rank = 10;
  double eta = 1e-4;
  double gate_eps = 1e-8;
  double calib_eps = 1e-12;
  double threshold = 1e-6;
  bool no_hag = false;
  bool no_vc = false;
};

struct ReferenceResult {
  std::vector<double> p;
  std::vector<std::uint32_t> support;
  std::map<std::uint32_t, double> u;  // restricted evidence
  bool fallback = false;
  double h_norm = 0.0;
  std::vector<double> s;
  std::uint32_t chosen = 0;
  std::vector<double> head_weights;  // flat (layer, head)
};

ReferenceResult reference_decode(const StepSnapshot& snap, const ReferenceConfig& cfg);

}  // namespace have::testing
