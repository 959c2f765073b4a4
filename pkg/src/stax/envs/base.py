from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._kernels import paint_disks, paint_segments

# Raster intensities (uint8). Kept distinct so the autoencoder can tell parts apart.
WALL = 255
ARM = 204
AGENT = 153
BALL = 102


@dataclass(frozen=True)
class RewardArea:
    center: tuple[float, float]
    radius: float
    max_reward: float = 1.0
    name: str = ""


def area_rewards(points: np.ndarray, areas: Sequence[RewardArea]) -> tuple[np.ndarray, np.ndarray]:
    """Reward and area index (or -1) for final positions ``points`` of shape (B, 2).

    Inside an area the reward falls linearly from ``max_reward`` at the center
    to 0 on the border.
    """
    points = np.atleast_2d(points)
    if not areas:
        return np.zeros(len(points)), np.full(len(points), -1)
    values = np.zeros((len(points), len(areas)))
    for j, a in enumerate(areas):
        d = np.hypot(points[:, 0] - a.center[0], points[:, 1] - a.center[1])
        values[:, j] = np.where(d < a.radius, a.max_reward * (1.0 - d / a.radius), 0.0)
    best = values.argmax(axis=1)
    reward = values[np.arange(len(points)), best]
    return reward, np.where(reward > 0, best, -1)


class PolicyNetwork:
    """tanh MLP whose weights are read from a flat genome.

    Layout per layer: weight matrix (out x in, row-major) followed by the bias.
    """

    def __init__(self, sizes: Sequence[int]):
        self.sizes = [int(s) for s in sizes]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def unpack(self, params: np.ndarray):
        params = np.atleast_2d(params)
        if params.shape[1] != self.n_params:
            raise ValueError(f"genome has {params.shape[1]} parameters, policy needs {self.n_params}")
        layers, pos = [], 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            w = params[:, pos:pos + o * i].reshape(-1, o, i)
            pos += o * i
            b = params[:, pos:pos + o]
            pos += o
            layers.append((w, b))
        return layers

    @staticmethod
    def forward(layers, x: np.ndarray) -> np.ndarray:
        h = x
        for w, b in layers:
            h = np.tanh(np.einsum("boi,bi->bo", w, h) + b)
        return h


def sample_steps(episode_len: int, k_samples: int) -> list[int]:
    """Steps (1-based) at which observations are captured; the last one is always T."""
    return [int(math.ceil(j * episode_len / k_samples)) for j in range(1, k_samples + 1)]


@dataclass
class Rollout:
    ground_truth_bd: np.ndarray  # (B, 2)
    reward: np.ndarray  # (B,)
    reward_area: np.ndarray  # (B,)
    observations: Optional[np.ndarray]  # (B, K, G, G) uint8


class Canvas:
    """Maps world coordinates of a rectangle onto a G x G pixel grid (row 0 at the top)."""

    def __init__(self, bounds: tuple[float, float, float, float], size: int):
        self.xmin, self.ymin, self.xmax, self.ymax = bounds
        self.size = int(size)
        c = np.arange(self.size) + 0.5
        self.px, self.py = np.meshgrid(c, c)  # px: column coordinate, py: row coordinate
        self.scale = self.size / max(self.xmax - self.xmin, self.ymax - self.ymin)

    def to_pixel(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=np.float64)
        u = (xy[..., 0] - self.xmin) * self.scale
        v = (self.ymax - xy[..., 1]) * self.scale
        return u, v

    def disk_mask(self, centers: np.ndarray, radius_px: float) -> np.ndarray:
        """Boolean masks (N, G, G) of disks centered at world points (N, 2)."""
        u, v = self.to_pixel(centers)
        du = self.px[None] - u[:, None, None]
        dv = self.py[None] - v[:, None, None]
        return du * du + dv * dv <= radius_px * radius_px

    def paint_disks(self, out: np.ndarray, centers: np.ndarray, radius_px: float, value: int) -> None:
        """In-place version of ``disk_mask`` writing ``value`` into uint8 rasters (N, G, G)."""
        u, v = self.to_pixel(np.atleast_2d(centers))
        paint_disks(out, np.ascontiguousarray(u), np.ascontiguousarray(v), float(radius_px), value)

    def paint_segments(self, out: np.ndarray, starts: np.ndarray, ends: np.ndarray,
                       half_width_px: float, value: int) -> None:
        au, av = self.to_pixel(starts)
        bu, bv = self.to_pixel(ends)
        paint_segments(out, np.ascontiguousarray(au), np.ascontiguousarray(av),
                       np.ascontiguousarray(bu), np.ascontiguousarray(bv), float(half_width_px), value)

    def segment_mask(self, starts: np.ndarray, ends: np.ndarray, half_width_px: float) -> np.ndarray:
        """Boolean masks (N, G, G) covering the union of segments (N, S, 2) -> (N, S, 2)."""
        au, av = self.to_pixel(starts)
        bu, bv = self.to_pixel(ends)
        n, s = au.shape
        mask = np.zeros((n, self.size, self.size), dtype=bool)
        px = self.px[None]
        py = self.py[None]
        for j in range(s):
            ax, ay = au[:, j, None, None], av[:, j, None, None]
            dx, dy = bu[:, j, None, None] - ax, bv[:, j, None, None] - ay
            den = dx * dx + dy * dy
            den = np.where(den > 0, den, 1.0)
            t = np.clip(((px - ax) * dx + (py - ay) * dy) / den, 0.0, 1.0)
            ex = px - (ax + t * dx)
            ey = py - (ay + t * dy)
            mask |= ex * ex + ey * ey <= half_width_px * half_width_px
        return mask


def write_pgm(path: Path | str, raster: np.ndarray) -> None:
    """Binary greyscale PGM (P5) of a uint8 raster."""
    raster = np.asarray(raster, dtype=np.uint8)
    h, w = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(raster.tobytes())


def read_pgm(path: Path | str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points (B, 2) to segments a, b (W, 2); returns (B, W)."""
    ab = b - a
    den = np.einsum("wd,wd->w", ab, ab)
    den = np.where(den > 0, den, 1.0)
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("bwd,wd->bw", ap, ab) / den, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    diff = p[:, None, :] - closest
    return np.sqrt(np.einsum("bwd,bwd->bw", diff, diff))


def segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Proper or touching intersection of segment pairs (broadcast over leading axes)."""
    def cross(o, a, b):
        return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])

    d1 = cross(q1, q2, p1)
    d2 = cross(q1, q2, p2)
    d3 = cross(p1, p2, q1)
    d4 = cross(p1, p2, q2)
    return (d1 * d2 <= 0) & (d3 * d4 <= 0) & ~((d1 == 0) & (d2 == 0) & (d3 == 0) & (d4 == 0))


class Environment:
    """Base class: subclasses implement ``_simulate`` and ``_render``."""

    name = "base"
    n_actuators = 0

    def __init__(self, episode_len: int, raster_size: int, reward_areas: Sequence[RewardArea],
                 bounds: tuple[float, float, float, float], policy_sizes: Sequence[int]):
        self.episode_len = int(episode_len)
        self.raster_size = int(raster_size)
        self.reward_areas = list(reward_areas)
        self.bounds = bounds
        self.policy = PolicyNetwork(policy_sizes)
        self.canvas = Canvas(bounds, raster_size)

    @property
    def n_params(self) -> int:
        return self.policy.n_params

    def rollout(self, params: np.ndarray, k_samples: int, render: bool = True) -> Rollout:
        params = np.atleast_2d(np.asarray(params, dtype=np.float64))
        steps = sample_steps(self.episode_len, k_samples) if render else []
        final, snapshots = self._simulate(params, steps)
        reward, area = area_rewards(final, self.reward_areas)
        obs = None
        if render:
            obs = np.stack([self._render(s) for s in snapshots], axis=1)
        return Rollout(final, reward, area, obs)

    def _simulate(self, params: np.ndarray, steps: Sequence[int]):
        raise NotImplementedError

    def _render(self, snapshot) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        return {
            "name": self.name,
            "episode_len": self.episode_len,
            "raster_size": self.raster_size,
            "bounds": list(self.bounds),
            "reward_areas": [[*a.center, a.radius, a.max_reward] for a in self.reward_areas],
            "policy_sizes": self.policy.sizes,
        }
