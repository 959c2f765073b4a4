"""Mutation, kNN novelty and NSGA-II survivor selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import PARAM_MAX, PARAM_MIN, EvaluatedPolicy, Genome

# Queries processed per block when computing pairwise distances.
_BLOCK = 64


@dataclass
class Population:
    members: list[EvaluatedPolicy]
    generation: int = 0
    # objective used by single-objective selection, if any
    selected_by: Optional[str] = None


@dataclass
class FrontAssignment:
    front_index: np.ndarray
    crowding: np.ndarray
    fronts: list[list[int]] = field(default_factory=list)


class IdCounter:
    """Monotone source of genome ids."""

    def __init__(self, start: int = 0):
        self.next_id = start

    def __call__(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i


def mutate(parent: Genome, sigma: float, m: int, rng: np.random.Generator,
           new_id: Callable[[], int], bounds: tuple[float, float] = (PARAM_MIN, PARAM_MAX)) -> list[Genome]:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    noise = rng.normal(0.0, sigma, size=(m, parent.dim))
    children = np.clip(parent.params[None, :] + noise, bounds[0], bounds[1])
    return [Genome(children[j], new_id(), parent.id) for j in range(m)]


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.sum((np.asarray(a) - np.asarray(b)) ** 2)))


def knn_novelty(queries: np.ndarray, references: np.ndarray, k: int,
                exclude: Optional[np.ndarray] = None) -> np.ndarray:
    """Mean distance of each query to its ``k`` nearest references.

    ``exclude[q]`` is the index of a reference row to ignore for query ``q``
    (the query itself), or -1. A query with no usable reference gets +inf.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    references = np.asarray(references, dtype=np.float64)
    nq = queries.shape[0]
    if references.size == 0:
        return np.full(nq, np.inf)
    references = np.atleast_2d(references)
    if references.shape[1] != queries.shape[1]:
        raise ValueError(f"descriptor dimension mismatch: {queries.shape[1]} vs {references.shape[1]}")
    if k < 1:
        raise ValueError("k must be >= 1")
    nr = references.shape[0]
    k_max = min(k, nr)
    out = np.empty(nq)
    for start in range(0, nq, _BLOCK):
        stop = min(start + _BLOCK, nq)
        diff = queries[start:stop, None, :] - references[None, :, :]
        dist = np.sqrt(np.einsum("qrd,qrd->qr", diff, diff))
        usable = np.full(stop - start, nr)
        if exclude is not None:
            ex = np.asarray(exclude[start:stop])
            rows = np.flatnonzero(ex >= 0)
            dist[rows, ex[rows]] = np.inf
            usable[rows] -= 1
        nearest = np.sort(np.partition(dist, k_max - 1, axis=1)[:, :k_max], axis=1)
        kk = np.minimum(k_max, usable)
        for i in range(stop - start):
            out[start + i] = nearest[i, :kk[i]].sum() / kk[i] if kk[i] > 0 else np.inf
    return out


def novelty(target_bd: np.ndarray, reference_bds: Sequence[np.ndarray] | np.ndarray, k: int) -> float:
    """Novelty of a single descriptor w.r.t. a reference set that excludes it."""
    refs = np.asarray(reference_bds, dtype=np.float64)
    target = np.asarray(target_bd, dtype=np.float64)
    if refs.size == 0:
        return float("inf")
    refs = refs.reshape(len(reference_bds), -1)
    return float(knn_novelty(target[None, :], refs, k)[0])


# -- NSGA-II ------------------------------------------------------------------

def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """``a`` dominates ``b`` when maximizing every objective."""
    ge = all(x >= y for x, y in zip(a, b))
    return ge and any(x > y for x, y in zip(a, b))


def _front_sort(obj: np.ndarray) -> list[list[int]]:
    n = obj.shape[0]
    ge = np.all(obj[:, None, :] >= obj[None, :, :], axis=2)
    gt = np.any(obj[:, None, :] > obj[None, :, :], axis=2)
    dom = ge & gt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def crowding_distance(obj: np.ndarray, ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Standard NSGA-II crowding for the members of one front.

    Sorting ties are broken by ``ids`` so the result does not depend on input order.
    """
    n, n_obj = obj.shape
    ids = np.arange(n) if ids is None else np.asarray(ids)
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for m in range(n_obj):
        order = np.lexsort((ids, obj[:, m]))
        vals = obj[order, m]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if not np.isfinite(span) or span <= 0:
            continue
        gaps = (vals[2:] - vals[:-2]) / span
        dist[order[1:-1]] += gaps
    return dist


def fast_nondominated_sort(objectives: np.ndarray, ids: Optional[Sequence[int]] = None) -> FrontAssignment:
    obj = np.asarray(objectives, dtype=np.float64)
    if obj.ndim == 1:
        obj = obj[:, None]
    n = obj.shape[0]
    ids = np.arange(n) if ids is None else np.asarray(ids)
    fronts = _front_sort(obj) if n else []
    front_index = np.zeros(n, dtype=int)
    crowding = np.zeros(n)
    for f, members in enumerate(fronts):
        members = np.asarray(members)
        front_index[members] = f
        crowding[members] = crowding_distance(obj[members], ids[members])
    return FrontAssignment(front_index, crowding, fronts)


def nsga2_select(objectives: np.ndarray, ids: Sequence[int], count: int) -> list[int]:
    """Indices of the ``count`` survivors: whole fronts first, then least crowded."""
    ids = np.asarray(ids)
    fa = fast_nondominated_sort(objectives, ids)
    chosen: list[int] = []
    for members in fa.fronts:
        if len(chosen) + len(members) <= count:
            chosen.extend(sorted(members, key=lambda i: ids[i]))
            if len(chosen) == count:
                break
            continue
        rest = sorted(members, key=lambda i: (-fa.crowding[i], ids[i]))
        chosen.extend(rest[:count - len(chosen)])
        break
    return chosen


def _objective_matrix(pool: Sequence[EvaluatedPolicy], names: Sequence[str]) -> np.ndarray:
    return np.array([[getattr(p, n) for n in names] for p in pool], dtype=np.float64)


def select_next_population(parents: Population, offspring: Population, M: int,
                           objectives: Sequence[str] = ("novelty", "surprise")) -> Population:
    pool = parents.members + offspring.members
    if len(pool) < M:
        raise ValueError(f"pool of {len(pool)} smaller than M={M}")
    obj = _objective_matrix(pool, objectives)
    idx = nsga2_select(obj, [p.id for p in pool], M)
    members = sorted((pool[i] for i in idx), key=lambda p: p.id)
    return Population(members, parents.generation + 1)


def select_top(parents: Population, offspring: Population, M: int, objective: str) -> Population:
    pool = parents.members + offspring.members
    ranked = sorted(pool, key=lambda p: (-getattr(p, objective), p.id))
    members = sorted(ranked[:M], key=lambda p: p.id)
    return Population(members, parents.generation + 1, selected_by=objective)


def alternating_select(parents: Population, offspring: Population, M: int, generation: int,
                       rng: np.random.Generator) -> Population:
    """Pick novelty or surprise uniformly at random, keep the best M by it."""
    objective = "novelty" if rng.random() < 0.5 else "surprise"
    pop = select_top(parents, offspring, M, objective)
    pop.generation = generation + 1
    return pop
