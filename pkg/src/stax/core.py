"""Policies, archives and buffers shared by the exploration and exploitation phases."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

PARAM_MIN = -5.0
PARAM_MAX = 5.0


@dataclass
class Genome:
    """Flat parameter vector of a policy network."""

    params: np.ndarray
    id: int
    parent_id: Optional[int] = None

    @property
    def dim(self) -> int:
        return int(self.params.shape[0])


@dataclass
class EvaluatedPolicy:
    genome: Genome
    # uint8 rasters, shape (K, G, G); None when the run never needs pixels
    observations: Optional[np.ndarray]
    ground_truth_bd: np.ndarray
    reward: float = 0.0
    reward_area: int = -1
    learned_bd: Optional[np.ndarray] = None
    novelty: float = float("nan")
    surprise: float = 0.0
    evaluated_at: int = 0

    @property
    def id(self) -> int:
        return self.genome.id

    @property
    def params(self) -> np.ndarray:
        return self.genome.params

    def descriptor(self) -> np.ndarray:
        """Descriptor used for search: the learned one when present."""
        return self.learned_bd if self.learned_bd is not None else self.ground_truth_bd

    def pixel_observations(self) -> np.ndarray:
        """Observations as float rasters in [0, 1], flattened per sample."""
        obs = self.observations
        return obs.reshape(obs.shape[0], -1).astype(np.float64) / 255.0


def stack_descriptors(policies: Sequence[EvaluatedPolicy]) -> np.ndarray:
    if not policies:
        return np.zeros((0, 0))
    return np.stack([p.descriptor() for p in policies])


class _PolicyCollection:
    def __init__(self, entries: Iterable[EvaluatedPolicy] = ()):
        self.entries: list[EvaluatedPolicy] = list(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[EvaluatedPolicy]:
        return iter(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def descriptors(self) -> np.ndarray:
        return stack_descriptors(self.entries)

    def ids(self) -> list[int]:
        return [p.id for p in self.entries]


class NoveltyArchive(_PolicyCollection):
    """Append-only archive of diverse policies."""

    def add(self, policy: EvaluatedPolicy) -> None:
        self.entries.append(policy)


class RewardArchive(_PolicyCollection):
    """Append-only archive of rewarding policies found while exploiting."""

    def add(self, policy: EvaluatedPolicy) -> None:
        if not policy.reward > 0:
            raise ValueError(f"policy {policy.id} has no reward ({policy.reward})")
        self.entries.append(policy)


class CandidateEmitterBuffer(_PolicyCollection):
    """Rewarding policies waiting to seed an emitter."""

    def add(self, policy: EvaluatedPolicy) -> None:
        if not policy.reward > 0:
            raise ValueError(f"policy {policy.id} has no reward ({policy.reward})")
        self.entries.append(policy)

    def pop(self, index: int) -> EvaluatedPolicy:
        return self.entries.pop(index)


def archive_sample_add(archive: NoveltyArchive, population: Sequence[EvaluatedPolicy],
                       n_add: int, rng: np.random.Generator) -> list[int]:
    """Append ``min(n_add, len(population))`` policies drawn uniformly without replacement."""
    if n_add < 0:
        raise ValueError("n_add must be >= 0")
    count = min(n_add, len(population))
    if count == 0:
        return []
    picked = rng.choice(len(population), size=count, replace=False)
    added = []
    for i in picked:
        archive.add(population[int(i)])
        added.append(population[int(i)].id)
    return added


def reward_archive_add_if_record(archive: RewardArchive, policy: EvaluatedPolicy,
                                 best_so_far: float) -> tuple[bool, float]:
    if best_so_far < 0:
        raise ValueError("best_so_far must be >= 0")
    if policy.reward > best_so_far:
        archive.add(policy)
        return True, float(policy.reward)
    return False, best_so_far


# -- serialization ---------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_archive(path: Path | str, entries: Iterable[EvaluatedPolicy]) -> None:
    """One CSV row per policy; floats use shortest round-trip repr (17 sig. digits max)."""
    entries = list(entries)
    gt_dim = max((len(p.ground_truth_bd) for p in entries), default=0)
    lr_dim = max((len(p.learned_bd) for p in entries if p.learned_bd is not None), default=0)
    header = (["id", "parent_id", "kind", "reward"]
              + [f"gt_{i}" for i in range(gt_dim)]
              + [f"learned_{i}" for i in range(lr_dim)]
              + ["evaluated_at"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in entries:
            learned = list(p.learned_bd) if p.learned_bd is not None else []
            row = [p.id, "" if p.genome.parent_id is None else p.genome.parent_id,
                   "learned" if p.learned_bd is not None else "ground_truth",
                   _fmt(p.reward)]
            row += [_fmt(v) for v in p.ground_truth_bd]
            row += [_fmt(v) for v in learned] + [""] * (lr_dim - len(learned))
            row.append(p.evaluated_at)
            w.writerow(row)


@dataclass
class ArchiveRecord:
    id: int
    parent_id: Optional[int]
    kind: str
    reward: float
    ground_truth_bd: np.ndarray
    learned_bd: Optional[np.ndarray]
    evaluated_at: int = 0


def read_archive(path: Path | str) -> list[ArchiveRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        gt_cols = [i for i, h in enumerate(header) if h.startswith("gt_")]
        lr_cols = [i for i, h in enumerate(header) if h.startswith("learned_")]
        records = []
        for row in reader:
            learned = None
            if row[2] == "learned":
                learned = np.array([float(row[i]) for i in lr_cols])
            records.append(ArchiveRecord(
                id=int(row[0]),
                parent_id=int(row[1]) if row[1] else None,
                kind=row[2],
                reward=float(row[3]),
                ground_truth_bd=np.array([float(row[i]) for i in gt_cols]),
                learned_bd=learned,
                evaluated_at=int(row[-1]),
            ))
    return records
