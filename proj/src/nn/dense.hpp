#pragma once

#include <span>

#include "ddppo/nn/network.hpp"

namespace ddppo::nn::detail {

// out = W in + b for one layer of the flat parameter vector.
inline void dense_forward(const LayerRecord& layer, std::span<const double> params,
                          std::span<const double> in, std::span<double> out) {
  const double* w = params.data() + layer.weight_offset();
  const double* b = params.data() + layer.bias_offset();
  for (std::size_t r = 0; r < layer.rows; ++r) {
    const double* row = w + r * layer.cols;
    double acc = b[r];
    for (std::size_t c = 0; c < layer.cols; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

}  // namespace ddppo::nn::detail
