#include "ddppo/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddppo/common/error.hpp"
#include "ddppo/common/hash.hpp"
#include "dense.hpp"

namespace ddppo::nn {

void NetSpec::validate() const {
  if (obs_dim == 0) throw ConfigError("NetSpec: obs_dim must be >= 1");
  if (num_actions < 2) throw ConfigError("NetSpec: num_actions must be >= 2");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("NetSpec: hidden dims must be >= 1");
  }
}

Layout::Layout(const NetSpec& spec) {
  spec.validate();
  std::size_t offset = 0;
  std::size_t fan_in = spec.obs_dim;
  auto add = [&](std::string name, LayerRole role, std::size_t rows) {
    layers_.push_back(LayerRecord{std::move(name), role, rows, fan_in, offset});
    offset += layers_.back().param_count();
  };
  for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
    add("trunk." + std::to_string(i), LayerRole::kTrunk, spec.hidden_dims[i]);
    fan_in = spec.hidden_dims[i];
  }
  add("action_head", LayerRole::kActionHead, spec.num_actions);
  add("value_head", LayerRole::kValueHead, 1);
  num_params_ = offset;

  Fnv1a h;
  h.update("ddppo.mlp.tanh");
  for (const auto& l : layers_) {
    h.update(l.name);
    h.update_u64(static_cast<std::uint64_t>(l.role));
    h.update_u64(l.rows);
    h.update_u64(l.cols);
    h.update_u64(l.offset);
  }
  hash_ = h.digest();
}

std::uint64_t ParamVector::content_hash() const {
  Fnv1a h;
  h.update_u64(layout.hash());
  h.update_u64(hash_doubles(values));
  return h.digest();
}

void check_params(const NetSpec& spec, const ParamVector& params) {
  const Layout expected(spec);
  if (params.layout.hash() != expected.hash() || params.size() != expected.num_params()) {
    throw ConfigError("parameter layout does not match NetSpec (expected " +
                      std::to_string(expected.num_params()) + " params, got " +
                      std::to_string(params.size()) + ")");
  }
}

PolicyOutput forward(const NetSpec& spec, const ParamVector& params,
                     std::span<const double> obs) {
  if (obs.size() != spec.obs_dim) {
    throw ConfigError("forward: observation has " + std::to_string(obs.size()) +
                      " entries, expected " + std::to_string(spec.obs_dim));
  }
  const Layout& layout = params.layout;
  bool shape_ok = params.size() == layout.num_params() && !layout.layers().empty() &&
                  layout.num_trunk_layers() == spec.hidden_dims.size() &&
                  layout.action_head().rows == spec.num_actions &&
                  layout.layers().front().cols == spec.obs_dim;
  for (std::size_t i = 0; shape_ok && i < spec.hidden_dims.size(); ++i) {
    shape_ok = layout.trunk(i).rows == spec.hidden_dims[i];
  }
  if (!shape_ok) check_params(spec, params);

  std::vector<double> cur(obs.begin(), obs.end());
  std::vector<double> next;
  for (std::size_t i = 0; i < layout.num_trunk_layers(); ++i) {
    const auto& layer = layout.trunk(i);
    next.resize(layer.rows);
    detail::dense_forward(layer, params.values, cur, next);
    for (double& x : next) x = std::tanh(x);
    cur.swap(next);
  }

  PolicyOutput out;
  out.action_logits.resize(spec.num_actions);
  detail::dense_forward(layout.action_head(), params.values, cur, out.action_logits);
  double value = 0.0;
  detail::dense_forward(layout.value_head(), params.values, cur, std::span<double>(&value, 1));
  out.value = value;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

ActionSample sample_action(std::span<const double> logits, Rng& rng) {
  const auto logp = log_softmax(logits);
  ActionSample s;
  const double u = rng.uniform();
  double cdf = 0.0;
  s.action = static_cast<int>(logits.size()) - 1;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    cdf += std::exp(logp[i]);
    if (u < cdf) {
      s.action = static_cast<int>(i);
      break;
    }
  }
  s.log_prob = logp[static_cast<std::size_t>(s.action)];
  for (double lp : logp) {
    const double p = std::exp(lp);
    if (p > 0.0) s.entropy -= p * lp;
  }
  return s;
}

int greedy_action(std::span<const double> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

void orthogonal_init(std::span<double> weights, std::size_t rows, std::size_t cols,
                     double gain, Rng& rng) {
  // Orthonormalize the columns of a tall Gaussian matrix q (n x k).
  const std::size_t n = std::max(rows, cols);
  const std::size_t k = std::min(rows, cols);
  std::vector<double> q(n * k);
  for (double& x : q) x = rng.normal();
  auto col = [&](std::size_t j, std::size_t i) -> double& { return q[i * k + j]; };
  for (std::size_t j = 0; j < k; ++j) {
    // Two passes of modified Gram-Schmidt.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += col(p, i) * col(j, i);
        for (std::size_t i = 0; i < n; ++i) col(j, i) -= dot * col(p, i);
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += col(j, i) * col(j, i);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) col(j, i) /= norm;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      // rows >= cols: W = q. rows < cols: W = q^T.
      const double x = rows >= cols ? q[r * k + c] : q[c * k + r];
      weights[r * cols + c] = gain * x;
    }
  }
}

namespace {

double init_gain(LayerRole role) {
  switch (role) {
    case LayerRole::kTrunk:
      return std::sqrt(2.0);
    case LayerRole::kActionHead:
      return 0.01;
    case LayerRole::kValueHead:
      return 1.0;
  }
  return 1.0;
}

void init_layer(ParamVector& params, const LayerRecord& layer, Rng& rng) {
  auto w = std::span<double>(params.values).subspan(layer.weight_offset(), layer.rows * layer.cols);
  orthogonal_init(w, layer.rows, layer.cols, init_gain(layer.role), rng);
  auto b = std::span<double>(params.values).subspan(layer.bias_offset(), layer.rows);
  std::fill(b.begin(), b.end(), 0.0);
}

}  // namespace

ParamVector init_params(const NetSpec& spec, Rng& rng) {
  ParamVector params{Layout(spec)};
  for (const auto& layer : params.layout.layers()) init_layer(params, layer, rng);
  return params;
}

ParamVector reinit_critic(const NetSpec& spec, const ParamVector& params, Rng& rng) {
  check_params(spec, params);
  ParamVector out = params;
  init_layer(out, out.layout.value_head(), rng);
  return out;
}

}  // namespace ddppo::nn
