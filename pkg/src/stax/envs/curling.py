"""Two-link arm at the edge of a table, pushing a ball that slides with friction."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ._kernels import curling_rollout
from .base import ARM, BALL, WALL, Environment, RewardArea

# Invented fixture: one area in front of the arm, one in a far corner.
DEFAULT_AREAS = [
    RewardArea((1.5, 2.3), 0.35, 1.0, "easy"),
    RewardArea((0.4, 2.6), 0.3, 1.0, "hard"),
]


class CurlingLite(Environment):
    name = "curling"

    def __init__(self, episode_len: int = 150, raster_size: int = 32,
                 reward_areas: Optional[Sequence[RewardArea]] = None,
                 table: tuple[float, float, float, float] = (0.0, 0.0, 3.0, 3.0),
                 base: tuple[float, float] = (1.5, 0.0),
                 links: tuple[float, float] = (0.8, 0.7),
                 q0: tuple[float, float] = (np.pi / 4, np.pi / 2),
                 ball: tuple[float, float] = (1.5, 1.3),
                 ball_radius: float = 0.1, tip_radius: float = 0.05,
                 joint_speed: float = 0.08, friction: float = 0.02):
        super().__init__(episode_len, raster_size,
                         DEFAULT_AREAS if reward_areas is None else reward_areas,
                         table, [6, 5, 5, 5, 2])
        self.table = np.array(table, dtype=np.float64)
        self.base = np.array(base, dtype=np.float64)
        self.links = np.array(links, dtype=np.float64)
        self.q0 = np.array(q0, dtype=np.float64)
        self.ball0 = np.array(ball, dtype=np.float64)
        self.ball_radius = ball_radius
        self.tip_radius = tip_radius
        self.joint_speed = joint_speed
        self.friction = friction
        self.q_low = np.array([0.0, -2.6])
        self.q_high = np.array([np.pi, 2.6])
        x0, y0, x1, y1 = table
        border = np.array([[x0, y0, x1, y0], [x1, y0, x1, y1], [x1, y1, x0, y1], [x0, y1, x0, y0]])
        m = self.canvas.segment_mask(border[None, :, :2], border[None, :, 2:], 0.5)[0]
        self._background = np.where(m, WALL, 0).astype(np.uint8)

    def joints(self, q: np.ndarray) -> np.ndarray:
        """Base, elbow and tip positions for joint angles (B, 2) -> (B, 3, 2)."""
        q = np.atleast_2d(q)
        elbow = self.base + self.links[0] * np.stack([np.cos(q[:, 0]), np.sin(q[:, 0])], axis=1)
        a = q[:, 0] + q[:, 1]
        tip = elbow + self.links[1] * np.stack([np.cos(a), np.sin(a)], axis=1)
        base = np.broadcast_to(self.base, elbow.shape)
        return np.stack([base, elbow, tip], axis=1)

    def initial_state(self) -> dict:
        tip = self.joints(self.q0)[0, 2]
        return {"q": self.q0.copy(), "dq": np.zeros(2), "ball": self.ball0.copy(), "vel": np.zeros(2),
                "tip": tip.copy()}

    def observe(self, state: dict) -> np.ndarray:
        """Controller input: ball position scaled to [-1, 1], joint angles over pi, last joint velocities."""
        center = 0.5 * (self.table[:2] + self.table[2:])
        half = 0.5 * (self.table[2:] - self.table[:2])
        return np.concatenate([(state["ball"] - center) / half, state["q"] / np.pi, state["dq"]])

    def step(self, state: dict, action: np.ndarray) -> dict:
        """One control step for a single policy (reference for the compiled rollout)."""
        dq = np.asarray(action, dtype=np.float64)
        q = np.clip(state["q"] + self.joint_speed * dq, self.q_low, self.q_high)
        tip = self.joints(q)[0, 2]
        tip_vel = tip - state["tip"]
        ball, vel = state["ball"].copy(), state["vel"].copy()
        contact = self.ball_radius + self.tip_radius
        gap = ball - tip
        d = float(np.hypot(*gap))
        if d < contact:
            vel = tip_vel.copy()
            if d > 0:
                ball = tip + gap / d * contact
        ball = ball + vel
        lo = self.table[:2] + self.ball_radius
        hi = self.table[2:] - self.ball_radius
        for i in range(2):
            if ball[i] < lo[i]:
                ball[i] = 2 * lo[i] - ball[i]
                vel[i] = -vel[i]
            if ball[i] > hi[i]:
                ball[i] = 2 * hi[i] - ball[i]
                vel[i] = -vel[i]
        vel = vel * (1.0 - self.friction)
        return {"q": q, "dq": dq, "ball": ball, "vel": vel, "tip": tip}

    def rasterize(self, state: dict) -> np.ndarray:
        return self.render_state(state["ball"][None], state["q"][None])[0] / 255.0

    def _simulate(self, params, steps):
        self.policy.unpack(params[:1])
        final, snaps = curling_rollout(
            params, np.array(self.policy.sizes, dtype=np.int64), self.episode_len,
            np.array(steps, dtype=np.int64), self.base, self.links, self.q0, self.ball0,
            self.ball_radius, self.tip_radius, self.table, self.joint_speed,
            self.q_low, self.q_high, self.friction)
        return final, [snaps[:, j] for j in range(len(steps))]

    def render_state(self, ball: np.ndarray, q: np.ndarray) -> np.ndarray:
        j = self.joints(q)
        out = np.broadcast_to(self._background, (len(j), self.raster_size, self.raster_size)).copy()
        self.canvas.paint_segments(out, j[:, :-1], j[:, 1:], 0.8, ARM)
        self.canvas.paint_disks(out, ball, max(self.ball_radius * self.canvas.scale, 1.5), BALL)
        return out

    def _render(self, snap):
        return self.render_state(snap[:, :2], snap[:, 2:])
