"""Two-wheeled robot in a walled maze, sensing with five rangefinders."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ._kernels import maze_rollout
from .base import AGENT, WALL, Environment, RewardArea

# Schematic layout: three horizontal bands joined by openings at alternating
# ends, with a baffle in the first two bands. Coordinates are invented.
DEFAULT_WALLS = [
    (0.0, 0.0, 10.0, 0.0), (10.0, 0.0, 10.0, 10.0), (10.0, 10.0, 0.0, 10.0), (0.0, 10.0, 0.0, 0.0),
    (0.0, 3.4, 7.5, 3.4),
    (2.5, 6.6, 10.0, 6.6),
    (5.0, 0.0, 5.0, 2.0),
    (5.0, 4.6, 5.0, 6.6),
]
DEFAULT_AREAS = [
    RewardArea((3.5, 1.0), 1.0, 1.0, "easy"),
    RewardArea((1.5, 8.5), 1.0, 1.0, "hard"),
]
SENSOR_ANGLES = np.array([-np.pi / 2, -np.pi / 4, 0.0, np.pi / 4, np.pi / 2])


def ray_distances(origins: np.ndarray, angles: np.ndarray, walls: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each ray to the first wall, capped at ``max_range``.

    origins (B, 2), angles (B, R), walls (W, 4) -> (B, R).
    """
    b, r = angles.shape
    dx = np.cos(angles).ravel()[None, :]
    dy = np.sin(angles).ravel()[None, :]
    ox = np.repeat(origins[:, 0], r)[None, :]
    oy = np.repeat(origins[:, 1], r)[None, :]
    ex = (walls[:, 2] - walls[:, 0])[:, None]
    ey = (walls[:, 3] - walls[:, 1])[:, None]
    aox = walls[:, 0, None] - ox
    aoy = walls[:, 1, None] - oy
    # origin + t d = a + s e, solved with 2D cross products; layout (W, B*R)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / (dx * ey - dy * ex)
        t = (aox * ey - aoy * ex) * inv
        s = (aox * dy - aoy * dx) * inv
    t[~((t >= 0) & (s >= 0) & (s <= 1))] = np.inf
    return np.minimum(t.min(axis=0), max_range).reshape(b, r)


def _min_wall_dist2(pos: np.ndarray, walls: np.ndarray, inv_len2: np.ndarray) -> np.ndarray:
    ex = (walls[:, 2] - walls[:, 0])[:, None]
    ey = (walls[:, 3] - walls[:, 1])[:, None]
    px = pos[None, :, 0] - walls[:, 0, None]
    py = pos[None, :, 1] - walls[:, 1, None]
    t = np.clip((px * ex + py * ey) * inv_len2[:, None], 0.0, 1.0)
    qx = px - t * ex
    qy = py - t * ey
    return (qx * qx + qy * qy).min(axis=0)


class PointMaze(Environment):
    name = "pointmaze"

    def __init__(self, episode_len: int = 200, raster_size: int = 32,
                 walls: Optional[Sequence[Sequence[float]]] = None,
                 reward_areas: Optional[Sequence[RewardArea]] = None,
                 start: tuple[float, float, float] = (1.5, 1.5, 0.0),
                 robot_radius: float = 0.25, max_speed: float = 0.15, max_turn: float = 0.3,
                 sensor_range: float = 3.0, render_radius: float = 0.5):
        super().__init__(episode_len, raster_size,
                         DEFAULT_AREAS if reward_areas is None else reward_areas,
                         (0.0, 0.0, 10.0, 10.0), [5, 5, 5, 2])
        self.walls = np.array(DEFAULT_WALLS if walls is None else walls, dtype=np.float64)
        xs = np.concatenate([self.walls[:, 0], self.walls[:, 2]])
        ys = np.concatenate([self.walls[:, 1], self.walls[:, 3]])
        self.bounds = (float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))
        self.canvas = type(self.canvas)(self.bounds, raster_size)
        self.start = start
        self.robot_radius = robot_radius
        self.max_speed = max_speed
        self.max_turn = max_turn
        self.sensor_range = sensor_range
        self.render_radius = render_radius
        seg = self.walls[:, 2:] - self.walls[:, :2]
        len2 = (seg ** 2).sum(axis=1)
        self._inv_len2 = np.where(len2 > 0, 1.0 / np.where(len2 > 0, len2, 1.0), 0.0)
        self._background = self._render_walls()

    def _render_walls(self) -> np.ndarray:
        m = self.canvas.segment_mask(self.walls[None, :, :2], self.walls[None, :, 2:], 0.5)[0]
        return np.where(m, WALL, 0).astype(np.uint8)

    def _blocked(self, pos: np.ndarray) -> np.ndarray:
        return _min_wall_dist2(pos, self.walls, self._inv_len2) < self.robot_radius ** 2

    def sensors(self, pos: np.ndarray, heading: np.ndarray) -> np.ndarray:
        angles = heading[:, None] + SENSOR_ANGLES[None, :]
        return ray_distances(pos, angles, self.walls, self.sensor_range)

    def step(self, pos: np.ndarray, heading: np.ndarray, action: np.ndarray):
        """Differential drive. Each axis of the displacement is dropped if it would hit a wall."""
        left, right = action[:, 0], action[:, 1]
        speed = self.max_speed * 0.5 * (left + right)
        heading = heading + self.max_turn * 0.5 * (right - left)
        dx = speed * np.cos(heading)
        dy = speed * np.sin(heading)
        trial = pos.copy()
        trial[:, 0] += dx
        bad = self._blocked(trial)
        trial[bad, 0] = pos[bad, 0]
        before_y = trial.copy()
        trial[:, 1] += dy
        bad = self._blocked(trial)
        trial[bad, 1] = before_y[bad, 1]
        return trial, heading

    def _simulate(self, params, steps):
        self.policy.unpack(params[:1])
        final, snaps = maze_rollout(
            params, np.array(self.policy.sizes, dtype=np.int64), self.walls,
            np.array(self.start, dtype=np.float64), self.episode_len,
            np.array(steps, dtype=np.int64), SENSOR_ANGLES, self.sensor_range,
            self.robot_radius, self.max_speed, self.max_turn)
        return final, [snaps[:, j] for j in range(len(steps))]

    def render_positions(self, pos: np.ndarray) -> np.ndarray:
        pos = np.atleast_2d(pos)
        out = np.broadcast_to(self._background, (len(pos), self.raster_size, self.raster_size)).copy()
        self.canvas.paint_disks(out, pos, self.render_radius * self.canvas.scale, AGENT)
        return out

    def rasterize(self, pos: np.ndarray) -> np.ndarray:
        return self.render_positions(np.asarray(pos)[None])[0] / 255.0

    def _render(self, pos):
        return self.render_positions(pos)
