#include "ddppo/nn/ppo_loss.hpp"

#include <algorithm>
#include <cmath>

#include "ddppo/common/error.hpp"
#include "dense.hpp"

namespace ddppo::nn {

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

void require_finite(std::span<const double> xs, const char* tensor, std::size_t sample) {
  for (double x : xs) {
    if (!std::isfinite(x)) {
      throw NumericalError(tensor, "non-finite value at sample " + std::to_string(sample));
    }
  }
}

// d/d(log pi(a)) of the clipped surrogate for one sample.
double surrogate_slope(double ratio, double advantage, double clip_eps) {
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
  if (unclipped <= clipped) return unclipped;
  // The clipped branch is active; it only depends on theta inside the band.
  const bool inside = ratio > 1.0 - clip_eps && ratio < 1.0 + clip_eps;
  return inside ? unclipped : 0.0;
}

}  // namespace

LossAndGrad loss_and_grad(const NetSpec& spec, const ParamVector& params,
                          const PpoBatch& batch, const LossConfig& cfg) {
  check_params(spec, params);
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("loss_and_grad: empty batch");
  if (batch.obs_dim != spec.obs_dim || batch.obs.size() != n * spec.obs_dim ||
      batch.old_log_probs.size() != n || batch.advantages.size() != n ||
      batch.returns.size() != n) {
    throw ConfigError("loss_and_grad: batch arrays have inconsistent sizes");
  }

  const Layout& layout = params.layout;
  const std::size_t depth = layout.num_trunk_layers();
  const std::span<const double> theta = params.values;

  LossAndGrad out{LossStats{}, ParamVector(layout)};
  std::span<double> grad = out.grad.values;
  const double inv_n = 1.0 / static_cast<double>(n);

  // acts[0] is the input; acts[i + 1] the tanh output of trunk layer i.
  std::vector<std::vector<double>> acts(depth + 1);
  std::vector<double> logits(spec.num_actions);
  std::vector<double> dlogits(spec.num_actions);
  std::vector<double> dh;
  std::vector<double> dprev;

  double obj_sum = 0.0;
  double vloss_sum = 0.0;
  double ent_sum = 0.0;
  std::size_t clipped_count = 0;

  for (std::size_t s = 0; s < n; ++s) {
    const auto obs = batch.observation(s);
    acts[0].assign(obs.begin(), obs.end());
    for (std::size_t i = 0; i < depth; ++i) {
      const auto& layer = layout.trunk(i);
      acts[i + 1].resize(layer.rows);
      detail::dense_forward(layer, theta, acts[i], acts[i + 1]);
      for (double& x : acts[i + 1]) x = std::tanh(x);
    }
    const auto& top = acts[depth];
    detail::dense_forward(layout.action_head(), theta, top, logits);
    double value = 0.0;
    detail::dense_forward(layout.value_head(), theta, top, std::span<double>(&value, 1));
    require_finite(logits, "logits", s);
    require_finite(std::span<const double>(&value, 1), "value", s);

    const int action = batch.actions[s];
    if (action < 0 || static_cast<std::size_t>(action) >= spec.num_actions) {
      throw ConfigError("loss_and_grad: action index out of range");
    }
    const auto logp = log_softmax(logits);
    const double ratio = std::exp(logp[static_cast<std::size_t>(action)] - batch.old_log_probs[s]);
    require_finite(std::span<const double>(&ratio, 1), "ratio", s);
    const double adv = batch.advantages[s];

    obj_sum += clipped_surrogate(ratio, adv, cfg.clip_eps);
    if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped_count;

    double entropy = 0.0;
    for (double lp : logp) entropy -= std::exp(lp) * lp;
    ent_sum += entropy;

    const double verr = value - batch.returns[s];
    vloss_sum += 0.5 * verr * verr;

    // Gradients of the per-sample total loss w.r.t. logits and value.
    const double slope = surrogate_slope(ratio, adv, cfg.clip_eps);
    for (std::size_t j = 0; j < spec.num_actions; ++j) {
      const double p = std::exp(logp[j]);
      const double onehot = static_cast<int>(j) == action ? 1.0 : 0.0;
      const double d_policy = -slope * (onehot - p);
      const double d_entropy = -p * (logp[j] + entropy);
      dlogits[j] = inv_n * (d_policy - cfg.entropy_coef * d_entropy);
    }
    const double dvalue = inv_n * cfg.value_coef * verr;

    // Heads.
    dh.assign(top.size(), 0.0);
    {
      const auto& head = layout.action_head();
      double* gw = grad.data() + head.weight_offset();
      double* gb = grad.data() + head.bias_offset();
      const double* w = theta.data() + head.weight_offset();
      for (std::size_t r = 0; r < head.rows; ++r) {
        const double d = dlogits[r];
        gb[r] += d;
        for (std::size_t c = 0; c < head.cols; ++c) {
          gw[r * head.cols + c] += d * top[c];
          dh[c] += w[r * head.cols + c] * d;
        }
      }
    }
    {
      const auto& head = layout.value_head();
      double* gw = grad.data() + head.weight_offset();
      const double* w = theta.data() + head.weight_offset();
      grad[head.bias_offset()] += dvalue;
      for (std::size_t c = 0; c < head.cols; ++c) {
        gw[c] += dvalue * top[c];
        dh[c] += w[c] * dvalue;
      }
    }

    // Trunk, top to bottom.
    for (std::size_t i = depth; i-- > 0;) {
      const auto& layer = layout.trunk(i);
      const auto& out_act = acts[i + 1];
      const auto& in_act = acts[i];
      double* gw = grad.data() + layer.weight_offset();
      double* gb = grad.data() + layer.bias_offset();
      const double* w = theta.data() + layer.weight_offset();
      dprev.assign(layer.cols, 0.0);
      for (std::size_t r = 0; r < layer.rows; ++r) {
        const double d = dh[r] * (1.0 - out_act[r] * out_act[r]);
        gb[r] += d;
        for (std::size_t c = 0; c < layer.cols; ++c) {
          gw[r * layer.cols + c] += d * in_act[c];
          dprev[c] += w[r * layer.cols + c] * d;
        }
      }
      dh.swap(dprev);
    }
  }

  LossStats& st = out.stats;
  st.policy_loss = -obj_sum * inv_n;
  st.value_loss = vloss_sum * inv_n;
  st.entropy = ent_sum * inv_n;
  st.clip_fraction = static_cast<double>(clipped_count) * inv_n;
  st.total_loss = st.policy_loss + cfg.value_coef * st.value_loss - cfg.entropy_coef * st.entropy;
  require_finite(std::span<const double>(&st.total_loss, 1), "loss", n);
  require_finite(grad, "grad", n);
  return out;
}

}  // namespace ddppo::nn
