#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddppo/nn/network.hpp"

namespace ddppo::nn {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One flag per parameter; frozen entries never move.
struct FreezeMask {
  std::vector<std::uint8_t> frozen;

  static FreezeMask none(std::size_t n) { return FreezeMask{std::vector<std::uint8_t>(n, 0)}; }
  static FreezeMask all(std::size_t n) { return FreezeMask{std::vector<std::uint8_t>(n, 1)}; }

  void freeze(const LayerRecord& layer);
  std::size_t count_frozen() const;
  bool is_frozen(std::size_t i) const { return frozen[i] != 0; }
};

struct AdamStepInfo {
  double grad_norm = 0.0;  // pre-clip L2 norm over trainable entries
  double clip_scale = 1.0;
};

// Clips the trainable part of `grad` to global L2 norm `max_grad_norm`
// (disabled when <= 0 or infinite), then applies a bias-corrected Adam update
// in place. Frozen entries of params, m and v are left untouched.
AdamStepInfo adam_step(ParamVector& params, std::span<const double> grad, AdamState& state,
                       double lr, const FreezeMask& mask, double max_grad_norm);

}  // namespace ddppo::nn
