#pragma once

// Independent reference implementations used only by tests. They recompute
// layer offsets from the NetSpec and evaluate everything with plain loops so
// they share no code with the library's forward/backward path.

#include <algorithm>
#include <cmath>
#include <vector>

#include "ddppo/nn/network.hpp"
#include "ddppo/nn/ppo_loss.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

struct DenseLayer {
  Matrix w;
  std::vector<double> b;
};

// Unpacks the flat vector: per layer, row-major weights then bias. Layers in
// order trunk..., action head, value head.
inline std::vector<DenseLayer> unpack(const ddppo::nn::NetSpec& spec,
                                      const std::vector<double>& flat) {
  std::vector<std::size_t> outs(spec.hidden_dims.begin(), spec.hidden_dims.end());
  outs.push_back(spec.num_actions);
  outs.push_back(1);
  std::vector<DenseLayer> layers;
  std::size_t pos = 0;
  std::size_t in = spec.obs_dim;
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const std::size_t out = outs[k];
    DenseLayer l;
    l.w.assign(out, std::vector<double>(in));
    for (std::size_t i = 0; i < out; ++i)
      for (std::size_t j = 0; j < in; ++j) l.w[i][j] = flat[pos++];
    l.b.assign(flat.begin() + static_cast<long>(pos), flat.begin() + static_cast<long>(pos + out));
    pos += out;
    layers.push_back(std::move(l));
    // Both heads read the trunk output.
    if (k + 1 < spec.hidden_dims.size() + 1) in = out;
  }
  return layers;
}

inline std::vector<double> matvec(const DenseLayer& l, const std::vector<double>& x) {
  std::vector<double> y(l.w.size());
  for (std::size_t i = 0; i < l.w.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += l.w[i][j] * x[j];
    y[i] = acc + l.b[i];
  }
  return y;
}

struct Output {
  std::vector<double> logits;
  double value;
};

inline Output forward_layers(const ddppo::nn::NetSpec& spec,
                             const std::vector<DenseLayer>& layers,
                             const std::vector<double>& obs) {
  std::vector<double> h = obs;
  const std::size_t depth = spec.hidden_dims.size();
  for (std::size_t k = 0; k < depth; ++k) {
    h = matvec(layers[k], h);
    for (double& x : h) x = std::tanh(x);
  }
  Output o;
  o.logits = matvec(layers[depth], h);
  o.value = matvec(layers[depth + 1], h)[0];
  return o;
}

inline Output forward(const ddppo::nn::NetSpec& spec, const std::vector<double>& flat,
                      const std::vector<double>& obs) {
  return forward_layers(spec, unpack(spec, flat), obs);
}

// Total PPO loss evaluated directly from its definition.
inline double ppo_loss(const ddppo::nn::NetSpec& spec, const std::vector<double>& flat,
                       const ddppo::nn::PpoBatch& batch, const ddppo::nn::LossConfig& cfg) {
  double obj = 0.0, vloss = 0.0, ent = 0.0;
  const std::size_t n = batch.size();
  const auto layers = unpack(spec, flat);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> obs(batch.obs.begin() + static_cast<long>(s * batch.obs_dim),
                            batch.obs.begin() + static_cast<long>((s + 1) * batch.obs_dim));
    const auto o = forward_layers(spec, layers, obs);
    double mx = o.logits[0];
    for (double z : o.logits) mx = std::max(mx, z);
    double z_sum = 0.0;
    for (double z : o.logits) z_sum += std::exp(z - mx);
    std::vector<double> p(o.logits.size());
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(o.logits[j] - mx) / z_sum;
    const double logp_a = std::log(p[static_cast<std::size_t>(batch.actions[s])]);
    const double r = std::exp(logp_a - batch.old_log_probs[s]);
    const double a = batch.advantages[s];
    const double clipped = std::min(std::max(r, 1.0 - cfg.clip_eps), 1.0 + cfg.clip_eps);
    obj += std::min(r * a, clipped * a);
    for (double pj : p) ent -= pj * std::log(pj);
    vloss += 0.5 * (o.value - batch.returns[s]) * (o.value - batch.returns[s]);
  }
  const double inv = 1.0 / static_cast<double>(n);
  return -obj * inv + cfg.value_coef * vloss * inv - cfg.entropy_coef * ent * inv;
}

inline std::vector<double> finite_difference_grad(const ddppo::nn::NetSpec& spec,
                                                  const std::vector<double>& flat,
                                                  const ddppo::nn::PpoBatch& batch,
                                                  const ddppo::nn::LossConfig& cfg,
                                                  double h = 1e-5) {
  std::vector<double> g(flat.size());
  std::vector<double> x = flat;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    x[i] = flat[i] + h;
    const double up = ppo_loss(spec, x, batch, cfg);
    x[i] = flat[i] - h;
    const double down = ppo_loss(spec, x, batch, cfg);
    x[i] = flat[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
