"""Slow, obviously-correct reference implementations used only by the tests."""
from __future__ import annotations

import math

import numpy as np


def brute_front_index(obj: np.ndarray) -> np.ndarray:
    """Front rank by peeling: rank r = not dominated by anything left after removing ranks < r."""
    obj = [tuple(map(float, row)) for row in obj]
    n = len(obj)

    def dom(a, b):
        return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))

    rank = [-1] * n
    remaining = set(range(n))
    r = 0
    while remaining:
        layer = {i for i in remaining if not any(dom(obj[j], obj[i]) for j in remaining if j != i)}
        for i in layer:
            rank[i] = r
        remaining -= layer
        r += 1
    return np.array(rank)


def reference_crowding(obj: np.ndarray, ids) -> list[float]:
    """Crowding distance written directly from its definition, ties broken by id."""
    n, k = obj.shape
    dist = [0.0] * n
    if n <= 2:
        return [math.inf] * n
    for m in range(k):
        order = sorted(range(n), key=lambda i: (obj[i, m], ids[i]))
        lo, hi = obj[order[0], m], obj[order[-1], m]
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        if hi - lo <= 0:
            continue
        for pos in range(1, n - 1):
            i = order[pos]
            dist[i] += (obj[order[pos + 1], m] - obj[order[pos - 1], m]) / (hi - lo)
    return dist


def reference_nsga2_truncate(obj: np.ndarray, ids, count: int) -> set:
    """Survivor ids: full fronts in rank order, last front cut by descending crowding then id."""
    ids = list(ids)
    rank = brute_front_index(obj)
    chosen: list = []
    for r in range(int(rank.max()) + 1 if len(rank) else 0):
        members = [i for i in range(len(ids)) if rank[i] == r]
        if len(chosen) + len(members) <= count:
            chosen += members
            continue
        cd = reference_crowding(obj[members], [ids[i] for i in members])
        ordered = sorted(range(len(members)), key=lambda j: (-cd[j], ids[members[j]]))
        chosen += [members[j] for j in ordered[:count - len(chosen)]]
        break
    return {ids[i] for i in chosen}


def exhaustive_knn(queries: np.ndarray, references: np.ndarray, k: int, exclude=None) -> np.ndarray:
    out = []
    for q, x in enumerate(queries):
        d = []
        for r, y in enumerate(references):
            if exclude is not None and exclude[q] == r:
                continue
            d.append(math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(x, y))))
        d.sort()
        kk = min(k, len(d))
        out.append(sum(d[:kk]) / kk if kk else math.inf)
    return np.array(out)


def finite_difference_gradient(f, flat: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(flat)
        flat[i] = old - h
        down = f(flat)
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def window_sum_improvement(history, lam: int, M_E: int, gamma0: int = 0) -> float:
    h = history[gamma0:]
    half = lam // 2
    first = 0.0
    for gen in h[:half]:
        for r in gen:
            first += float(r)
    last = 0.0
    for gen in h[len(h) - half:]:
        for r in gen:
            last += float(r)
    return (last - first) / (lam * M_E)


def brute_coverage(points, bounds, cells: int) -> float:
    xmin, ymin, xmax, ymax = bounds
    seen = set()
    for x, y in points:
        i = int(math.floor((x - xmin) / (xmax - xmin) * cells))
        j = int(math.floor((y - ymin) / (ymax - ymin) * cells))
        seen.add((min(max(i, 0), cells - 1), min(max(j, 0), cells - 1)))
    return 100.0 * len(seen) / cells ** 2


def exhaustive_knn_rows(queries: np.ndarray, references: np.ndarray, k: int, exclude=None) -> np.ndarray:
    """Same contract as ``exhaustive_knn``: one full distance row and a full sort per query."""
    out = np.empty(len(queries))
    for q in range(len(queries)):
        d = np.sqrt(((references - queries[q]) ** 2).sum(axis=1))
        if exclude is not None and exclude[q] >= 0:
            d = np.delete(d, exclude[q])
        d = np.sort(d)
        kk = min(k, len(d))
        out[q] = d[:kk].mean() if kk else np.inf
    return out
