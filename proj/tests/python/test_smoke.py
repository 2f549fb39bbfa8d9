import os

import pytest

import ddppo


def test_spl_examples():
    assert ddppo.compute_spl(True, 3.0, 3.0) == 1.0
    assert ddppo.compute_spl(False, 3.0, 7.0) == 0.0
    assert ddppo.compute_spl(True, 10.0, 20.0) == 0.5
    with pytest.raises(ValueError):
        ddppo.compute_spl(True, 0.0, 1.0)


def test_gae_tau_one_is_discounted_return():
    adv, ret = ddppo.compute_gae([1.0, -0.5, 0.25], [0.0, 0.0, 0.0], [False, False, True], 9.0, 0.5, 1.0)
    assert adv == [1.0 - 0.25 + 0.0625, -0.5 + 0.125, 0.25]
    assert ret == adv


def test_pointnav_rewards():
    env = ddppo.NavEnv(ddppo.GridWorld(6, 6), "pointnav")
    obs = env.reset_to(0, 5, 0, 0, 0)
    assert len(obs) == 28
    _, r, done, _ = env.step(ddppo.ACTIONS["move_forward"])
    assert r == pytest.approx(0.24, abs=1e-12)
    assert not done
    _, r, _, _ = env.step(ddppo.ACTIONS["turn_left"])
    assert r == pytest.approx(-0.01, abs=1e-12)


def test_shortest_path_agent_reaches_goal_with_spl_one():
    grid = ddppo.GridWorld.random(16, 16, 0.2, seed=3)
    env = ddppo.NavEnv(grid)
    env.reset(seed=5)
    done = False
    while not done:
        _, _, done, info = env.step(env.shortest_path_action())
    assert info["success"]
    assert info["spl"] == 1.0


def test_geodesic_matches_grid_text():
    grid = ddppo.GridWorld.from_text("3 3\n...\n.#.\n...\n")
    dist = grid.geodesic(0, 0)
    assert dist[2][2] == 4
    assert dist[1][1] == -1


def test_config_defaults_and_validation():
    cfg = ddppo.default_config()
    assert cfg["gamma"] == 0.99
    assert cfg["rollout_len"] == 128
    assert cfg["preempt_p"] == 0.6
    with pytest.raises(ValueError):
        ddppo.make_config(preempt_p=1.5)
    with pytest.raises(ValueError):
        ddppo.make_config(not_a_field=1)


def test_train_then_evaluate(tmp_path):
    cfg = ddppo.make_config(total_steps=1024, num_train_maps=4, out_dir=str(tmp_path))
    stats = ddppo.train(cfg)
    assert len(stats) == 2
    assert stats[-1]["cumulative_steps"] == 1024
    ck = tmp_path / "checkpoints" / "final.ddpp"
    assert ck.exists()
    rep = ddppo.evaluate(cfg, checkpoint=str(ck), episodes=10, maps=5)
    assert len(rep["rows"]) == 10
    assert 0.0 <= rep["spl"] <= 1.0


def test_scripted_policies_and_bins():
    cfg = ddppo.default_config()
    oracle = ddppo.evaluate(cfg, policy="oracle", episodes=20, maps=5)
    assert oracle["success"] == 1.0 and oracle["spl"] == 1.0
    stop = ddppo.evaluate(cfg, policy="stop", episodes=20, maps=5)
    assert stop["success"] == 0.0
    bins = ddppo.aggregate_bins(oracle["rows"], [0, 100])
    assert bins[0]["count"] == 20
    assert bins[0]["mean_spl"] == 1.0


def test_bootstrap_ci():
    mean, lo, hi = ddppo.bootstrap_mean_ci([1.0, 2.0, 3.0, 4.0])
    assert lo <= mean <= hi
    assert mean == 2.5


@pytest.mark.skipif(not os.path.exists(ddppo.tool_path()), reason="launcher not bundled")
def test_launch_two_workers(tmp_path):
    cfg = ddppo.make_config(total_steps=2048, num_train_maps=4, out_dir=str(tmp_path))
    assert ddppo.launch(cfg, 2, timeout=120) == 0
    assert (tmp_path / "metrics.jsonl").exists()
