"""Coverage, reward and learned-space structure metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class CoverageGrid:
    """C x C occupancy grid over a 2D bounding box; points on or past the border land in edge cells."""

    def __init__(self, bounds: Sequence[float], cells: int = 50):
        self.xmin, self.ymin, self.xmax, self.ymax = (float(b) for b in bounds)
        self.cells = int(cells)
        self.occupied = np.zeros((self.cells, self.cells), dtype=bool)

    def cell_index(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[1] != 2:
            raise ValueError("coverage needs 2-dimensional descriptors")
        fx = (points[:, 0] - self.xmin) / (self.xmax - self.xmin)
        fy = (points[:, 1] - self.ymin) / (self.ymax - self.ymin)
        ix = np.clip(np.floor(fx * self.cells), 0, self.cells - 1).astype(int)
        iy = np.clip(np.floor(fy * self.cells), 0, self.cells - 1).astype(int)
        return ix, iy

    def add(self, points: np.ndarray) -> None:
        if len(points) == 0:
            return
        ix, iy = self.cell_index(points)
        self.occupied[ix, iy] = True

    @property
    def percentage(self) -> float:
        return 100.0 * float(self.occupied.sum()) / self.occupied.size


def coverage(points: np.ndarray, bounds: Sequence[float], cells: int = 50) -> float:
    grid = CoverageGrid(bounds, cells)
    grid.add(np.asarray(points, dtype=np.float64).reshape(-1, 2))
    return grid.percentage


class RewardTracker:
    """Running maximum reward for each reward area."""

    def __init__(self, n_areas: int):
        self.maxima = np.zeros(int(n_areas))

    def update(self, rewards: Sequence[float], areas: Sequence[int]) -> None:
        for r, a in zip(rewards, areas):
            if a >= 0 and r > self.maxima[a]:
                self.maxima[a] = r


def max_reward_per_area(log: Sequence[tuple[int, float, int]], n_areas: int,
                        sample_at: Sequence[int]) -> np.ndarray:
    """Per-area best reward seen up to each evaluation count in ``sample_at``.

    ``log`` holds (evaluated_at, reward, area) triples. Returns (len(sample_at), n_areas).
    """
    entries = sorted(log, key=lambda e: e[0])
    out = np.zeros((len(sample_at), n_areas))
    tracker = RewardTracker(n_areas)
    i = 0
    for row, t in enumerate(sample_at):
        while i < len(entries) and entries[i][0] <= t:
            tracker.update([entries[i][1]], [entries[i][2]])
            i += 1
        out[row] = tracker.maxima
    return out


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Product-moment correlation; None when either input has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass
class DistanceReport:
    # (anchor id, member id, ground-truth distance, learned distance)
    rows: list[tuple[int, int, float, float]] = field(default_factory=list)
    # anchor id -> r (None when undefined)
    summary: dict[int, Optional[float]] = field(default_factory=dict)


def _learned_or_truth(p) -> np.ndarray:
    return p.learned_bd if p.learned_bd is not None else p.ground_truth_bd


def distance_structure_report(archive: Sequence, n_anchors: int = 6,
                              rng: Optional[np.random.Generator] = None) -> DistanceReport:
    """Compare distances from sampled anchors to every other member in both descriptor spaces.

    Members without a learned descriptor use their ground-truth one in its place.
    """
    members = list(archive)
    if len(members) < 3:
        raise ValueError(f"archive has {len(members)} members, need at least 3")
    rng = rng if rng is not None else np.random.default_rng(0)
    gt = np.stack([np.asarray(p.ground_truth_bd, dtype=np.float64) for p in members])
    lr = np.stack([np.asarray(_learned_or_truth(p), dtype=np.float64) for p in members])
    anchors = rng.choice(len(members), size=min(n_anchors, len(members)), replace=False)
    report = DistanceReport()
    for a in sorted(int(i) for i in anchors):
        others = [j for j in range(len(members)) if j != a]
        dg = np.sqrt(((gt[others] - gt[a]) ** 2).sum(axis=1))
        dl = np.sqrt(((lr[others] - lr[a]) ** 2).sum(axis=1))
        aid = members[a].id
        report.rows += [(aid, members[j].id, float(g), float(d)) for j, g, d in zip(others, dg, dl)]
        report.summary[aid] = pearson(dg, dl)
    return report


def write_distance_report(report: DistanceReport, rows_path: Path | str, summary_path: Path | str) -> None:
    with open(rows_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["anchor_id", "member_id", "gt_dist", "learned_dist"])
        for a, m, g, d in report.rows:
            w.writerow([a, m, repr(g), repr(d)])
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["anchor_id", "r"])
        for a, r in report.summary.items():
            w.writerow([a, "undefined" if r is None else repr(r)])


def read_distance_report(rows_path: Path | str, summary_path: Path | str) -> DistanceReport:
    report = DistanceReport()
    with open(rows_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for a, m, g, d in reader:
            report.rows.append((int(a), int(m), float(g), float(d)))
    with open(summary_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for a, r in reader:
            report.summary[int(a)] = None if r == "undefined" else float(r)
    return report


def median_iqr(values: Sequence[float]) -> tuple[float, float]:
    """Median and interquartile range (numpy's default linear percentiles)."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return math.nan, math.nan
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return float(med), float(q3 - q1)
