"""Joint text and image ranking attacks on a toy multimodal ranker."""

import json

from ._mgeo import (
    AbortError,
    BridgeError,
    DomainError,
    Error,
    ParseError,
    RankerConfig,
    ToyRanker,
    ValidationError,
    default_joint_config,
    derive_seed,
    magnitude_loss,
    parse_ranking,
    plackett_luce_nll,
    rank_change,
    render_prompt,
    run_cli,
    smoothness_loss,
)

__all__ = [
    "AbortError",
    "BridgeError",
    "DomainError",
    "Error",
    "ParseError",
    "RankerConfig",
    "ToyRanker",
    "ValidationError",
    "attack",
    "default_joint_config",
    "derive_seed",
    "joint_config",
    "magnitude_loss",
    "parse_ranking",
    "plackett_luce_nll",
    "rank_change",
    "render_prompt",
    "run_cli",
    "smoothness_loss",
    "sweep",
]


def joint_config(**overrides):
    """Default joint config as a dict. Nested keys use "text.steps" style names."""
    config = json.loads(default_joint_config())
    for key, value in overrides.items():
        node = config
        *path, leaf = key.split(".")
        for part in path:
            node = node[part]
        if leaf not in node:
            raise KeyError(key)
        node[leaf] = value
    return config


def attack(ranker, target, kind="joint", config=None):
    """Attack one listing. Returns (report dict, adversarial image array)."""
    report, image = ranker._attack(target, kind, json.dumps(config or joint_config()))
    return json.loads(report), image


def sweep(ranker, kind="joint", config=None, base_seed=17, workers=1):
    """Leave-one-out sweep over every listing; returns the sweep dict."""
    return json.loads(ranker._sweep(kind, json.dumps(config or joint_config()), base_seed, workers))
