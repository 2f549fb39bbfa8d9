"""DD-PPO: decentralized distributed PPO on grid navigation tasks."""

import json
import os
import subprocess

from . import _ddppo
from ._ddppo import (
    ConfigError,
    GridWorld,
    InvalidEpisodeError,
    NavEnv,
    ProtocolError,
    bootstrap_mean_ci,
    compute_gae,
    compute_spl,
)

__all__ = [
    "ConfigError",
    "GridWorld",
    "InvalidEpisodeError",
    "NavEnv",
    "ProtocolError",
    "aggregate_bins",
    "bootstrap_mean_ci",
    "compute_gae",
    "compute_spl",
    "default_config",
    "evaluate",
    "launch",
    "make_config",
    "tool_path",
    "train",
]

ACTIONS = {"stop": 0, "move_forward": 1, "turn_left": 2, "turn_right": 3}


def default_config():
    """Default training configuration as a dict."""
    return json.loads(_ddppo.default_config_json())


def make_config(**overrides):
    """Defaults merged with overrides; nested dicts merge key by key. Validated."""
    cfg = default_config()
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return json.loads(_ddppo.normalize_config_json(json.dumps(cfg)))


def train(config):
    """Single-process training; returns per-iteration statistics."""
    return json.loads(_ddppo.train_json(json.dumps(config)))


def evaluate(config, policy="network", checkpoint="", split="heldout", episodes=200, maps=50,
             samples=1, greedy=True, seed=7):
    """Evaluates a checkpoint or a scripted policy ("oracle", "stop")."""
    return json.loads(_ddppo.evaluate_json(json.dumps(config), policy, checkpoint, split, episodes,
                                           maps, samples, greedy, seed))


def aggregate_bins(rows, edges):
    """Bins evaluation rows by shortest-path length in meters."""
    return json.loads(_ddppo.aggregate_bins_json(json.dumps(rows), list(edges)))


def tool_path():
    """Path of the bundled ddppo executable."""
    return os.environ.get("DDPPO_TOOL") or os.path.join(os.path.dirname(_ddppo.__file__), "ddppo")


def launch(config, num_workers, timeout=None):
    """Multi-process training through the bundled launcher."""
    out_dir = config.get("out_dir") or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "launch_config.json")
    with open(path, "w") as f:
        json.dump(config, f)
    cmd = [tool_path(), "launch", "-c", path, "-n", str(num_workers)]
    return subprocess.run(cmd, timeout=timeout, check=False).returncode
