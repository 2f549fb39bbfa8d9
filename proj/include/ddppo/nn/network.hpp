#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddppo/common/random.hpp"

namespace ddppo::nn {

// Feed-forward actor-critic: tanh trunk, linear categorical action head and
// linear scalar value head sharing the trunk output.
struct NetSpec {
  std::size_t obs_dim = 0;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t num_actions = 4;

  // Throws ConfigError when num_actions < 2 or any dim is zero.
  void validate() const;

  bool operator==(const NetSpec&) const = default;
};

enum class LayerRole { kTrunk, kActionHead, kValueHead };

// One dense layer inside the flat parameter vector. Weights are row-major
// (rows = fan-out, cols = fan-in) and immediately followed by the bias.
struct LayerRecord {
  std::string name;
  LayerRole role;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;

  std::size_t weight_offset() const { return offset; }
  std::size_t bias_offset() const { return offset + rows * cols; }
  std::size_t param_count() const { return rows * cols + rows; }
};

class Layout {
 public:
  Layout() = default;
  explicit Layout(const NetSpec& spec);

  std::span<const LayerRecord> layers() const { return layers_; }
  std::size_t num_params() const { return num_params_; }
  std::size_t num_trunk_layers() const { return layers_.size() - 2; }
  const LayerRecord& trunk(std::size_t i) const { return layers_.at(i); }
  const LayerRecord& action_head() const { return layers_[layers_.size() - 2]; }
  const LayerRecord& value_head() const { return layers_.back(); }

  // Identical on every worker that built the same NetSpec; exchanged at
  // rendezvous and stored in checkpoints.
  std::uint64_t hash() const { return hash_; }

  bool operator==(const Layout& other) const { return hash_ == other.hash_; }

 private:
  std::vector<LayerRecord> layers_;
  std::size_t num_params_ = 0;
  std::uint64_t hash_ = 0;
};

// Flat vector of every network parameter plus the layout that maps offsets to
// layers. Gradients share this type.
struct ParamVector {
  std::vector<double> values;
  Layout layout;

  ParamVector() = default;
  explicit ParamVector(Layout l) : values(l.num_params(), 0.0), layout(std::move(l)) {}

  std::size_t size() const { return values.size(); }
  std::span<double> slice(const LayerRecord& layer) {
    return std::span<double>(values).subspan(layer.offset, layer.param_count());
  }
  std::span<const double> slice(const LayerRecord& layer) const {
    return std::span<const double>(values).subspan(layer.offset, layer.param_count());
  }
  std::uint64_t content_hash() const;
};

struct PolicyOutput {
  std::vector<double> action_logits;
  double value = 0.0;
};

// Verifies that params were built for `spec`; throws ConfigError otherwise.
void check_params(const NetSpec& spec, const ParamVector& params);

PolicyOutput forward(const NetSpec& spec, const ParamVector& params,
                     std::span<const double> obs);

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
  double entropy = 0.0;
};

// Numerically stable log-softmax.
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

ActionSample sample_action(std::span<const double> logits, Rng& rng);

// Highest-probability action (lowest index on ties).
int greedy_action(std::span<const double> logits);

// Orthogonal init: gain sqrt(2) for trunk, 0.01 for the action head, 1.0 for
// the value head; zero biases.
ParamVector init_params(const NetSpec& spec, Rng& rng);

// Resamples only the value head; every other entry is copied bit-for-bit.
ParamVector reinit_critic(const NetSpec& spec, const ParamVector& params, Rng& rng);

// Fills `weights` (rows x cols, row-major) with a scaled orthogonal matrix:
// orthonormal rows when rows <= cols, orthonormal columns otherwise.
void orthogonal_init(std::span<double> weights, std::size_t rows, std::size_t cols,
                     double gain, Rng& rng);

}  // namespace ddppo::nn
