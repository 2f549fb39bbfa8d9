#include <cmath>
#include <filesystem>
#include <numbers>

#include "ddppo/common/error.hpp"
#include "ddppo/nn/adam.hpp"
#include "ddppo/nn/checkpoint.hpp"
#include "ddppo/nn/network.hpp"
#include "ddppo/nn/ppo_loss.hpp"
#include "doctest.h"
#include "helpers/instances.hpp"
#include "helpers/nn_oracle.hpp"

using namespace ddppo;
using namespace ddppo::nn;

namespace {

NetSpec small_spec() {
  NetSpec s;
  s.obs_dim = 5;
  s.hidden_dims = {7, 6};
  s.num_actions = 4;
  return s;
}

}  // namespace

TEST_CASE("NetSpec validation") {
  NetSpec s = small_spec();
  CHECK_NOTHROW(s.validate());
  s.num_actions = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.hidden_dims = {4, 0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = small_spec();
  s.obs_dim = 0;
  CHECK_THROWS_AS(Layout{s}, ConfigError);
}

TEST_CASE("layout size equals the sum of layer parameter counts") {
  const NetSpec s = small_spec();
  const Layout layout(s);
  std::size_t total = 0;
  for (const auto& l : layout.layers()) total += l.param_count();
  CHECK(layout.num_params() == total);
  CHECK(layout.num_params() == (5 * 7 + 7) + (7 * 6 + 6) + (6 * 4 + 4) + (6 + 1));
  CHECK(layout.value_head().cols == 6);

  NetSpec other = s;
  other.hidden_dims = {6, 7};
  CHECK(Layout(other).num_params() != 0);
  CHECK(Layout(other).hash() != layout.hash());
  CHECK(Layout(s).hash() == layout.hash());
}

TEST_CASE("forward with zero parameters gives uniform logits and zero value") {
  const NetSpec s = small_spec();
  const ParamVector p{Layout(s)};
  const std::vector<double> obs{0.3, -1.0, 2.0, 0.0, 5.0};
  const auto out = forward(s, p, obs);
  for (double z : out.action_logits) CHECK(z == 0.0);
  CHECK(out.value == 0.0);
}

TEST_CASE("single linear layer returns the first weight column for obs [1, 0]") {
  NetSpec s;
  s.obs_dim = 2;
  s.hidden_dims = {};
  s.num_actions = 3;
  ParamVector p{Layout(s)};
  const auto& head = p.layout.action_head();
  for (std::size_t r = 0; r < head.rows; ++r) {
    p.values[head.weight_offset() + r * 2 + 0] = 1.5 + static_cast<double>(r);
    p.values[head.weight_offset() + r * 2 + 1] = -7.0;
  }
  const auto out = forward(s, p, std::vector<double>{1.0, 0.0});
  CHECK(out.action_logits == std::vector<double>{1.5, 2.5, 3.5});
}

TEST_CASE("forward matches a naive matrix-multiply oracle") {
  Rng rng(1337);
  NetSpec s;
  s.obs_dim = 28;
  const ParamVector p = init_params(s, rng);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> obs(s.obs_dim);
    for (double& x : obs) x = rng.normal();
    const auto got = forward(s, p, obs);
    const auto want = oracle::forward(s, p.values, obs);
    CHECK(std::abs(got.value - want.value) <= 1e-12);
    for (std::size_t j = 0; j < s.num_actions; ++j) {
      CHECK(std::abs(got.action_logits[j] - want.logits[j]) <= 1e-12);
    }
  }
}

TEST_CASE("forward rejects mismatched dimensions") {
  const NetSpec s = small_spec();
  const ParamVector p{Layout(s)};
  CHECK_THROWS_AS(forward(s, p, std::vector<double>(4)), ConfigError);
  NetSpec wider = s;
  wider.hidden_dims = {8, 6};
  CHECK_THROWS_AS(forward(wider, p, std::vector<double>(5)), ConfigError);
}

TEST_CASE("softmax sums to one and is stable for large logits") {
  const std::vector<double> logits{1000.0, -1000.0, 3.0, 999.0};
  const auto p = softmax(logits);
  double sum = 0.0;
  for (double x : p) {
    CHECK(std::isfinite(x));
    sum += x;
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("sample_action on uniform logits has entropy ln 4") {
  Rng rng(3);
  const auto s = sample_action(std::vector<double>{0, 0, 0, 0}, rng);
  CHECK(s.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(s.log_prob == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
  CHECK(std::abs(s.entropy - 1.386294) < 1e-6);
}

TEST_CASE("sample_action on a degenerate softmax") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto s = sample_action(std::vector<double>{1000, 0, 0, 0}, rng);
    CHECK(s.action == 0);
    CHECK(std::abs(s.log_prob) < 1e-12);
    CHECK(std::abs(s.entropy) < 1e-12);
  }
}

TEST_CASE("sample_action frequencies follow the softmax (Monte Carlo)") {
  Rng rng(7);
  const std::vector<double> logits{1, 2, 3, 4};
  const auto p = softmax(logits);
  std::vector<double> counts(4, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_action(logits, rng);
    counts[static_cast<std::size_t>(s.action)] += 1.0;
    CHECK(s.log_prob == doctest::Approx(std::log(p[static_cast<std::size_t>(s.action)])));
  }
  for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(counts[j] / n - p[j]) < 0.01);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  Rng a(11), b(11);
  const std::vector<double> logits{0.1, -0.4, 0.7};
  for (int i = 0; i < 1000; ++i) {
    const auto x = sample_action(logits, a);
    const auto y = sample_action(logits, b);
    REQUIRE(x.action == y.action);
    REQUIRE(x.log_prob == y.log_prob);
  }
}

TEST_CASE("clipped surrogate direct evaluation") {
  CHECK(clipped_surrogate(2.0, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  CHECK(clipped_surrogate(2.0, -1.0, 0.2) == doctest::Approx(-2.0));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
}

TEST_CASE("clip structure: the surrogate is a pessimistic bound on r*A") {
  Rng rng(21);
  const double eps = 0.2;
  for (int i = 0; i < 10000; ++i) {
    const double r = std::exp(rng.normal());
    const double a = rng.normal() * 3.0;
    const double s = clipped_surrogate(r, a, eps);
    CHECK(s <= r * a);
    if (r >= 1.0 - eps && r <= 1.0 + eps) CHECK(s == r * a);
    if (a > 0 && r > 1.0 + eps) CHECK(s == doctest::Approx((1.0 + eps) * a));
    if (a < 0 && r < 1.0 - eps) CHECK(s == doctest::Approx((1.0 - eps) * a));
  }
}

TEST_CASE("loss on a single sample with ratio 2 uses the clipped value") {
  NetSpec s;
  s.obs_dim = 1;
  s.hidden_dims = {};
  s.num_actions = 2;
  const ParamVector p{Layout(s)};  // uniform policy: log pi = ln 0.5
  PpoBatch b;
  b.obs_dim = 1;
  b.obs = {1.0};
  b.actions = {0};
  b.old_log_probs = {std::log(0.5) - std::log(2.0)};  // ratio 2
  b.advantages = {1.0};
  b.returns = {0.0};
  LossConfig cfg;
  cfg.entropy_coef = 0.0;
  cfg.value_coef = 0.0;
  const auto res = loss_and_grad(s, p, b, cfg);
  CHECK(res.stats.policy_loss == doctest::Approx(-1.2).epsilon(1e-12));
  CHECK(res.stats.clip_fraction == 1.0);
  // Clipped at the top with positive advantage: no policy gradient.
  for (double g : res.grad.values) CHECK(g == 0.0);
}

TEST_CASE("at theta == theta_old the policy gradient is the unclipped policy gradient") {
  Rng rng(5);
  const NetSpec s = small_spec();
  const auto p = instances::random_params(s, rng);
  auto b = instances::random_batch(s, p, 16, rng, 0.0);
  LossConfig cfg;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  const auto res = loss_and_grad(s, p, b, cfg);
  CHECK(res.stats.clip_fraction == 0.0);
  // Unclipped surrogate -mean(r A) has the same gradient as -mean(A log pi) at r = 1.
  LossConfig wide = cfg;
  wide.clip_eps = 1e9;
  const auto unclipped = loss_and_grad(s, p, b, wide);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(res.grad.values[i] == doctest::Approx(unclipped.grad.values[i]).epsilon(1e-12));
  }
  CHECK(res.stats.policy_loss == doctest::Approx(unclipped.stats.policy_loss));
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(99);
  const LossConfig cfg;
  for (int inst = 0; inst < 8; ++inst) {
    const NetSpec s = instances::random_spec(rng);
    const auto p = instances::random_params(s, rng);
    const auto b = instances::random_batch(s, p, 1 + rng.uniform_index(32), rng);
    const auto analytic = loss_and_grad(s, p, b, cfg);
    const auto fd = oracle::finite_difference_grad(s, p.values, b, cfg);
    CHECK(instances::max_relative_error(analytic.grad.values, fd, 1e-6) < 1e-5);
    CHECK(analytic.stats.total_loss == doctest::Approx(oracle::ppo_loss(s, p.values, b, cfg)).epsilon(1e-12));
  }
}

TEST_CASE("loss_and_grad reports non-finite tensors") {
  const NetSpec s = small_spec();
  ParamVector p{Layout(s)};
  p.values[p.layout.value_head().bias_offset()] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  auto b = instances::random_batch(s, ParamVector{Layout(s)}, 4, rng);
  try {
    (void)loss_and_grad(s, p, b, LossConfig{});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.tensor() == "value");
  }
  b.advantages[0] = std::numeric_limits<double>::infinity();
  b.old_log_probs[0] = -1000;  // ratio overflows
  try {
    (void)loss_and_grad(s, ParamVector{Layout(s)}, b, LossConfig{});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.tensor() == "ratio");
  }
}

TEST_CASE("loss_and_grad rejects empty batches") {
  const NetSpec s = small_spec();
  PpoBatch b;
  b.obs_dim = s.obs_dim;
  CHECK_THROWS_AS(loss_and_grad(s, ParamVector{Layout(s)}, b, LossConfig{}), ConfigError);
}

TEST_CASE("adam: zero gradient leaves params and moments unchanged") {
  const NetSpec s = small_spec();
  Rng rng(2);
  ParamVector p = init_params(s, rng);
  const auto before = p.values;
  AdamState st(p.size());
  const std::vector<double> g(p.size(), 0.0);
  adam_step(p, g, st, 2.5e-4, FreezeMask::none(p.size()), 0.5);
  CHECK(p.values == before);
  CHECK(st.step_count == 1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(st.m[i] == 0.0);
    CHECK(st.v[i] == 0.0);
  }
}

TEST_CASE("adam: first bias-corrected step is -lr * sign(g) up to eps") {
  NetSpec s;
  s.obs_dim = 1;
  s.hidden_dims = {};
  s.num_actions = 2;
  ParamVector p{Layout(s)};
  AdamState st(p.size());
  std::vector<double> g(p.size(), 0.0);
  g[0] = 1.0;
  adam_step(p, g, st, 2.5e-4, FreezeMask::none(p.size()), 0.0);
  CHECK(p.values[0] == doctest::Approx(-2.5e-4 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(std::abs(p.values[0] - (-2.49999e-4)) < 1e-9);
  CHECK(p.values[1] == 0.0);
}

TEST_CASE("adam: global norm clipping scales the gradient") {
  NetSpec s;
  s.obs_dim = 1;
  s.hidden_dims = {};
  s.num_actions = 2;
  ParamVector p{Layout(s)};
  AdamState st(p.size());
  std::vector<double> g(p.size(), 0.0);
  g[0] = 3.0;
  g[1] = 4.0;
  const auto info = adam_step(p, g, st, 1e-3, FreezeMask::none(p.size()), 0.5);
  CHECK(info.grad_norm == doctest::Approx(5.0));
  CHECK(info.clip_scale == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(st.m[0] == doctest::Approx(0.1 * 0.3).epsilon(1e-6));
}

TEST_CASE("adam: a fully frozen mask keeps params bit-identical") {
  const NetSpec s = small_spec();
  Rng rng(4);
  ParamVector p = init_params(s, rng);
  const auto before = p.values;
  AdamState st(p.size());
  for (int k = 0; k < 50; ++k) {
    std::vector<double> g(p.size());
    for (double& x : g) x = rng.normal();
    adam_step(p, g, st, 1e-2, FreezeMask::all(p.size()), 0.5);
  }
  CHECK(p.values == before);
}

TEST_CASE("adam: partially frozen mask freezes exactly those entries") {
  const NetSpec s = small_spec();
  Rng rng(8);
  ParamVector p = init_params(s, rng);
  const auto before = p.values;
  FreezeMask mask = FreezeMask::none(p.size());
  mask.freeze(p.layout.trunk(0));
  mask.freeze(p.layout.trunk(1));
  AdamState st(p.size());
  for (int k = 0; k < 20; ++k) {
    std::vector<double> g(p.size());
    for (double& x : g) x = rng.normal();
    adam_step(p, g, st, 1e-2, mask, 0.5);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask.is_frozen(i)) {
      REQUIRE(p.values[i] == before[i]);
    }
  }
  const auto head = p.layout.action_head();
  CHECK(p.values[head.weight_offset()] != before[head.weight_offset()]);
}

TEST_CASE("adam: non-finite gradient and bad lr are rejected") {
  const NetSpec s = small_spec();
  ParamVector p{Layout(s)};
  AdamState st(p.size());
  std::vector<double> g(p.size(), 0.0);
  CHECK_THROWS_AS(adam_step(p, g, st, 0.0, FreezeMask::none(p.size()), 0.5), ConfigError);
  g[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(p, g, st, 1e-3, FreezeMask::none(p.size()), 0.5), NumericalError);
}

TEST_CASE("orthogonal init has unit-norm orthogonal vectors scaled by gain") {
  Rng rng(17);
  NetSpec s;
  s.obs_dim = 28;
  const ParamVector p = init_params(s, rng);
  auto row_norm = [&](const LayerRecord& l, std::size_t r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < l.cols; ++c) {
      const double w = p.values[l.weight_offset() + r * l.cols + c];
      acc += w * w;
    }
    return std::sqrt(acc);
  };
  // Wide matrices (rows <= cols) get orthonormal rows.
  const auto& v = p.layout.value_head();
  CHECK(row_norm(v, 0) == doctest::Approx(1.0).epsilon(1e-12));
  const auto& a = p.layout.action_head();
  for (std::size_t r = 0; r < a.rows; ++r) CHECK(row_norm(a, r) == doctest::Approx(0.01).epsilon(1e-12));
  const auto& t1 = p.layout.trunk(1);  // 64 x 64, orthogonal
  for (std::size_t r = 0; r < t1.rows; ++r) {
    CHECK(row_norm(t1, r) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
  // Tall trunk.0 (64 x 28): columns orthonormal.
  const auto& t0 = p.layout.trunk(0);
  for (std::size_t c1 = 0; c1 < t0.cols; ++c1) {
    for (std::size_t c2 = c1; c2 < t0.cols; ++c2) {
      double dot = 0.0;
      for (std::size_t r = 0; r < t0.rows; ++r) {
        dot += p.values[t0.weight_offset() + r * t0.cols + c1] *
               p.values[t0.weight_offset() + r * t0.cols + c2];
      }
      CHECK(dot == doctest::Approx(c1 == c2 ? 2.0 : 0.0).epsilon(1e-12).scale(1.0));
    }
  }
  for (std::size_t i = 0; i < t0.rows; ++i) CHECK(p.values[t0.bias_offset() + i] == 0.0);
}

TEST_CASE("reinit_critic touches only the value head and is deterministic") {
  Rng rng(1);
  NetSpec s;
  s.obs_dim = 10;
  const ParamVector p = init_params(s, rng);
  Rng r1(42), r2(42);
  const auto a = reinit_critic(s, p, r1);
  const auto b = reinit_critic(s, p, r2);
  CHECK(a.values == b.values);
  const auto& v = p.layout.value_head();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i >= v.offset && i < v.offset + v.param_count()) continue;
    REQUIRE(a.values[i] == p.values[i]);
  }
  bool changed = false;
  double norm = 0.0;
  for (std::size_t c = 0; c < v.cols; ++c) {
    const double w = a.values[v.weight_offset() + c];
    changed |= w != p.values[v.weight_offset() + c];
    norm += w * w;
  }
  CHECK(changed);
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.values[v.bias_offset()] == 0.0);
}

TEST_CASE("init is deterministic per seed") {
  NetSpec s;
  s.obs_dim = 28;
  Rng a(5), b(5), c(6);
  CHECK(init_params(s, a).values == init_params(s, b).values);
  CHECK(init_params(s, a).values != init_params(s, c).values);
}

TEST_CASE("checkpoint round-trips and rejects mismatched layouts") {
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    Checkpoint ck;
    ck.spec = instances::random_spec(rng);
    ck.params = instances::random_params(ck.spec, rng);
    ck.train_step = static_cast<std::int64_t>(rng.uniform_index(1000000));
    ck.rng_state = rng.serialize();
    const auto bytes = encode_checkpoint(ck);
    const auto back = decode_checkpoint(bytes, ck.spec);
    CHECK(back.spec == ck.spec);
    CHECK(back.params.values == ck.params.values);
    CHECK(back.params.layout.hash() == ck.params.layout.hash());
    CHECK(back.train_step == ck.train_step);
    CHECK(back.rng_state == ck.rng_state);

    NetSpec other = ck.spec;
    other.num_actions += 1;
    CHECK_THROWS_AS(decode_checkpoint(bytes, other), ConfigError);
  }
}

TEST_CASE("checkpoint header bytes") {
  NetSpec s;
  s.obs_dim = 2;
  s.hidden_dims = {};
  s.num_actions = 2;
  Checkpoint ck{s, ParamVector{Layout(s)}, 7, ""};
  ck.params.values[0] = 1.0;
  const auto bytes = encode_checkpoint(ck);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DDPP");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  std::uint64_t count = 0;
  for (int i = 0; i < 8; ++i) count |= std::uint64_t{bytes[14 + i]} << (8 * i);
  CHECK(count == ck.params.size());
  // 1.0 little-endian: 00 .. 00 f0 3f
  CHECK(bytes[22 + 6] == 0xf0);
  CHECK(bytes[22 + 7] == 0x3f);
  const std::size_t trailer = 22 + 8 * count;
  CHECK(bytes[trailer] == '{');

  auto truncated = bytes;
  truncated.resize(30);
  CHECK_THROWS_AS(decode_checkpoint(truncated), ConfigError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), ConfigError);
}

TEST_CASE("checkpoint file save/load") {
  const auto dir = std::filesystem::temp_directory_path() / "ddppo_test_nn";
  std::filesystem::create_directories(dir);
  NetSpec s;
  s.obs_dim = 4;
  Rng rng(9);
  const Checkpoint ck{s, init_params(s, rng), 12, rng.serialize()};
  save_checkpoint(dir / "a.ckpt", ck);
  const auto back = load_checkpoint(dir / "a.ckpt", s);
  CHECK(back.params.values == ck.params.values);
  Rng restored;
  restored.deserialize(back.rng_state);
  CHECK(restored.next_u64() == rng.next_u64());
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), ConfigError);
  std::filesystem::remove_all(dir);
}
