// Finite-difference verification of every backward pass: 64-bit central
// differences with h = 1e-4, inputs sampled away from ReLU/max-pool/L1
// non-differentiability. Used by the gradcheck CLI command and the tests.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace blindpaint::gradcheck {

inline constexpr double kTolerance = 1e-4;
inline constexpr double kStep = 1e-4;

struct CheckRow {
  std::string unit;
  double max_rel_err = 0.0;
  std::int64_t checks = 0;
  bool pass = false;
};

// One row per layer type: conv2d, deconv2d, maxpool, relu, loss_l1, loss_l2.
// Each runs >= 5 random instances.
std::vector<CheckRow> check_layers(std::uint64_t seed);

// Whole-network spot check: full variant, base_width 8, 16x16 input, >= 20
// randomly chosen parameters.
CheckRow check_full_network(std::uint64_t seed);

}  // namespace blindpaint::gradcheck
