"""Multi-agent cooperative driving: simulator, expert data, reward learning and training."""

import json as _json

from . import _lepus
from ._lepus import (
    LepusError,
    Simulator,
    angle_error,
    combined_reward,
    g_reward,
    preset_names,
    reward_from_disagreement,
    soft_update_scalar,
    speed_error,
    stability,
)

__all__ = [
    "LepusError",
    "Simulator",
    "ablate",
    "angle_error",
    "combined_reward",
    "evaluate",
    "g_reward",
    "gen_experts",
    "make_simulator",
    "preset_names",
    "pretrain",
    "report_from_totals",
    "resolve_config",
    "reward_from_disagreement",
    "soft_update_scalar",
    "speed_error",
    "stability",
    "train",
    "train_rnd",
]


def _dump(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def resolve_config(config=None, preset="", overrides=()):
    return _json.loads(_lepus.resolve_config(_dump(config), preset, list(overrides)))


def report_from_totals(agent_distance, agent_collisions, rounds):
    return _json.loads(_lepus.report_from_totals(list(agent_distance), list(agent_collisions), rounds))


def make_simulator(config=None, preset=""):
    return Simulator(_dump(config), preset)


def gen_experts(config=None, out=""):
    return _json.loads(_lepus.gen_experts(_dump(config), str(out)))


def train_rnd(config=None, out=""):
    return _json.loads(_lepus.train_rnd(_dump(config), str(out)))


def pretrain(config=None, out=""):
    return _json.loads(_lepus.pretrain(_dump(config), str(out)))


def train(config=None, out="", no_pretrain=False):
    return _json.loads(_lepus.train(_dump(config), str(out), no_pretrain))


def evaluate(config=None, out="", no_pretrain=False):
    return _json.loads(_lepus.evaluate(_dump(config), str(out), no_pretrain))


def ablate(config=None, out=""):
    return _json.loads(_lepus.ablate(_dump(config), str(out)))
