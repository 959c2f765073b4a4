"""Desk-scale environments and a factory building them from run settings."""
from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from ..core import EvaluatedPolicy, Genome
from .arm import RedundantArm
from .base import Environment, RewardArea, Rollout, area_rewards, read_pgm, sample_steps, write_pgm
from .curling import CurlingLite
from .pointmaze import PointMaze

ENVIRONMENTS = {"pointmaze": PointMaze, "curling": CurlingLite, "arm": RedundantArm}


def make_env(name: str, options: Mapping[str, Any] | None = None) -> Environment:
    """Build an environment by id. ``reward_areas`` may be given as (x, y, radius, max_reward) tuples."""
    if name not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    opts = dict(options or {})
    if opts.get("reward_areas") is not None:
        opts["reward_areas"] = [a if isinstance(a, RewardArea) else RewardArea((a[0], a[1]), a[2], a[3] if len(a) > 3 else 1.0)
                                for a in opts["reward_areas"]]
    return ENVIRONMENTS[name](**{k: v for k, v in opts.items() if v is not None})


def evaluate(env: Environment, genome: Genome, k_samples: int, render: bool = True) -> EvaluatedPolicy:
    """Roll out a single genome; descriptors other than the ground truth are left empty."""
    params = np.asarray(genome.params, dtype=np.float64)
    if params.ndim != 1 or params.size != env.n_params:
        raise ValueError(f"genome has {params.size} parameters, {env.name} policy needs {env.n_params}")
    out = env.rollout(params[None], k_samples, render)
    return EvaluatedPolicy(
        genome=genome,
        observations=None if out.observations is None else out.observations[0],
        ground_truth_bd=out.ground_truth_bd[0].copy(),
        reward=float(out.reward[0]),
        reward_area=int(out.reward_area[0]),
    )


__all__ = ["Environment", "RewardArea", "Rollout", "area_rewards", "sample_steps", "write_pgm", "read_pgm",
           "PointMaze", "CurlingLite", "RedundantArm", "ENVIRONMENTS", "make_env", "evaluate"]
