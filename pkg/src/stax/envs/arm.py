"""Planar redundant arm rooted at the origin, stopped by self- or wall-collision."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ._kernels import arm_rollout
from .base import AGENT, ARM, WALL, Environment, RewardArea

# Invented fixture: a wall segment in the upper right half-plane; three areas
# of increasing difficulty (the last one tucked behind the wall).
DEFAULT_WALLS = [(0.45, 0.2, 0.45, 0.95)]
DEFAULT_AREAS = [
    RewardArea((-0.55, 0.45), 0.2, 1.0, "easy"),
    RewardArea((0.0, -0.8), 0.15, 1.0, "medium"),
    RewardArea((0.7, 0.55), 0.15, 1.0, "hard"),
]


class RedundantArm(Environment):
    name = "arm"

    def __init__(self, episode_len: int = 100, raster_size: int = 32, dof: int = 10,
                 walls: Optional[Sequence[Sequence[float]]] = None,
                 reward_areas: Optional[Sequence[RewardArea]] = None,
                 joint_speed: float = 0.05, end_effector_only: bool = False):
        super().__init__(episode_len, raster_size,
                         DEFAULT_AREAS if reward_areas is None else reward_areas,
                         (-1.0, -1.0, 1.0, 1.0), [dof, 5, 5, dof])
        self.dof = int(dof)
        self.lengths = np.full(self.dof, 1.0 / self.dof)
        self.walls = np.array(DEFAULT_WALLS if walls is None else walls, dtype=np.float64).reshape(-1, 4)
        self.joint_speed = joint_speed
        self.end_effector_only = end_effector_only
        if len(self.walls):
            m = self.canvas.segment_mask(self.walls[None, :, :2], self.walls[None, :, 2:], 0.5)[0]
        else:
            m = np.zeros((raster_size, raster_size), dtype=bool)
        self._background = np.where(m, WALL, 0).astype(np.uint8)
        self.last_steps_run: Optional[np.ndarray] = None

    def joints(self, q: np.ndarray) -> np.ndarray:
        """Joint positions (B, D+1, 2) for angles (B, D); the last one is the end effector."""
        q = np.atleast_2d(q)
        a = np.cumsum(q, axis=1)
        steps = self.lengths * np.stack([np.cos(a), np.sin(a)], axis=2).transpose(2, 0, 1)
        pts = np.cumsum(steps, axis=2).transpose(1, 2, 0)
        return np.concatenate([np.zeros((len(q), 1, 2)), pts], axis=1)

    def step(self, q: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, bool]:
        """One control step for a single arm; returns (angles, collided). A colliding move is not applied."""
        trial = np.clip(q + self.joint_speed * np.asarray(action), -np.pi, np.pi)
        pts = self.joints(trial)[0]
        links = list(zip(pts[:-1], pts[1:]))
        for i, (a, b) in enumerate(links):
            others = [links[j] for j in range(i + 2, len(links))]
            others += [(w[:2], w[2:]) for w in self.walls]
            for c, d in others:
                if _segments_cross(a, b, c, d):
                    return q.copy(), True
        return trial, False

    def rasterize(self, q: np.ndarray) -> np.ndarray:
        return self.render_state(np.asarray(q)[None])[0] / 255.0

    def _simulate(self, params, steps):
        self.policy.unpack(params[:1])
        final, snaps, run = arm_rollout(
            params, np.array(self.policy.sizes, dtype=np.int64), self.episode_len,
            np.array(steps, dtype=np.int64), self.lengths, self.walls, self.joint_speed)
        self.last_steps_run = run
        return final, [snaps[:, j] for j in range(len(steps))]

    def render_state(self, q: np.ndarray) -> np.ndarray:
        j = self.joints(q)
        out = np.broadcast_to(self._background, (len(j), self.raster_size, self.raster_size)).copy()
        if not self.end_effector_only:
            self.canvas.paint_segments(out, j[:, :-1], j[:, 1:], 0.7, ARM)
        self.canvas.paint_disks(out, j[:, -1], 1.5, AGENT)
        return out

    def _render(self, q):
        return self.render_state(q)


def _segments_cross(p1, p2, q1, q2) -> bool:
    """Proper or touching intersection; fully collinear pairs are ignored."""
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
    d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
    if d1 == 0 and d2 == 0 and d3 == 0 and d4 == 0:
        return False
    return d1 * d2 <= 0 and d3 * d4 <= 0
