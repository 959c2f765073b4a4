"""Reward exploitation with local elitist emitters.

An emitter is seeded from a rewarding policy found while exploring. It is first
run for a few generations (bootstrap) to estimate whether it can improve the
reward; promising emitters are queued and later resumed until they stagnate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (PARAM_MAX, PARAM_MIN, CandidateEmitterBuffer, EvaluatedPolicy, Genome,
                   NoveltyArchive, RewardArchive, archive_sample_add)
from .evolution import dominates, knn_novelty, mutate

Evaluator = Callable[[Sequence[Genome]], list]


class EmitterState(str, Enum):
    BOOTSTRAPPING = "bootstrapping"
    QUEUED = "queued"
    RUNNING = "running"
    TERMINATED = "terminated"
    DISCARDED = "discarded"


@dataclass
class Emitter:
    id: int
    seed: EvaluatedPolicy
    sigma: float
    initial_genomes: list[Genome] = field(default_factory=list)
    population: list[EvaluatedPolicy] = field(default_factory=list)
    generation: int = 0
    gamma0: int = 0
    # rewards of the population P_g, one array per generation (index = generation)
    reward_history: list[np.ndarray] = field(default_factory=list)
    # best offspring reward per generation, used by the stagnation test
    offspring_best: list[float] = field(default_factory=list)
    r_max: float = 0.0
    eta_max: float = 0.0
    emitter_novelty: float = math.inf
    improvement: float = 0.0
    novelty_candidates: list[EvaluatedPolicy] = field(default_factory=list)
    state: EmitterState = EmitterState.BOOTSTRAPPING
    evaluations: int = 0

    def policies(self) -> list[EvaluatedPolicy]:
        """Every stored policy whose descriptor must follow encoder updates."""
        return [self.seed, *self.population, *self.novelty_candidates]


@dataclass
class GenerationReport:
    offspring: list[EvaluatedPolicy]
    evaluations: int
    best_reward: float


def sigma_from_neighbors(seed_params: np.ndarray, neighbor_params: np.ndarray, fallback: float) -> float:
    """A third of the distance to the closest neighbor in parameter space.

    Falls back to ``fallback`` with no neighbors or when the closest one is a duplicate.
    """
    neighbor_params = np.asarray(neighbor_params, dtype=np.float64).reshape(-1, len(seed_params))
    if len(neighbor_params) == 0:
        return float(fallback)
    d = np.sqrt(((neighbor_params - seed_params) ** 2).sum(axis=1)).min()
    if not d > 0:
        return float(fallback)
    return float(d / 3.0)


def init_emitter(seed: EvaluatedPolicy, neighbors: Sequence[Genome], M_E: int, rng: np.random.Generator,
                 new_id: Callable[[], int], emitter_id: int = 0, fallback_sigma: float = 0.5,
                 bounds: tuple[float, float] = (PARAM_MIN, PARAM_MAX)) -> Emitter:
    """Set up an emitter around ``seed``; the initial population still has to be evaluated."""
    if not seed.reward > 0:
        raise ValueError("emitters are seeded from rewarding policies only")
    others = [g.params for g in neighbors if g.id != seed.id]
    sigma = sigma_from_neighbors(seed.params, np.array(others).reshape(-1, seed.genome.dim), fallback_sigma)
    noise = rng.normal(0.0, sigma, size=(M_E, seed.genome.dim))
    params = np.clip(seed.params[None, :] + noise, bounds[0], bounds[1])
    genomes = [Genome(p, new_id(), seed.id) for p in params]
    return Emitter(id=emitter_id, seed=seed, sigma=sigma, initial_genomes=genomes, r_max=float(seed.reward))


def _elite(pool: Sequence[EvaluatedPolicy], size: int) -> list[EvaluatedPolicy]:
    return sorted(pool, key=lambda p: (-p.reward, p.id))[:size]


def evaluate_initial_population(emitter: Emitter, evaluate: Evaluator) -> int:
    pop = evaluate(emitter.initial_genomes)
    emitter.population = _elite(pop, len(pop))
    emitter.initial_genomes = []
    emitter.reward_history = [np.array([p.reward for p in emitter.population])]
    emitter.generation = 0
    emitter.evaluations += len(pop)
    return len(pop)


def emitter_generation(emitter: Emitter, evaluate: Evaluator, m: int, rng: np.random.Generator,
                       new_id: Callable[[], int],
                       bounds: tuple[float, float] = (PARAM_MIN, PARAM_MAX)) -> GenerationReport:
    """One elitist generation: m children per member, keep the best M_E of parents and children."""
    genomes = []
    for parent in emitter.population:
        genomes += mutate(parent.genome, emitter.sigma, m, rng, new_id, bounds)
    offspring = evaluate(genomes)
    size = len(emitter.population)
    emitter.population = _elite(emitter.population + offspring, size)
    emitter.generation += 1
    emitter.reward_history.append(np.array([p.reward for p in emitter.population]))
    best = max((p.reward for p in offspring), default=0.0)
    emitter.offspring_best.append(float(best))
    emitter.evaluations += len(offspring)
    return GenerationReport(offspring, len(offspring), float(best))


def improvement(reward_history: Sequence[Sequence[float]], lam: int, M_E: int, gamma0: int = 0) -> float:
    """Reward gained between the first and last ``lam // 2`` generations since ``gamma0``.

    Both windows are disjoint and the difference is normalised by ``lam * M_E``.
    """
    h = list(reward_history)[gamma0:]
    if len(h) < lam:
        raise ValueError(f"need {lam} generations since generation {gamma0}, have {len(h)}")
    half = lam // 2
    if half == 0:
        return 0.0
    first = sum(float(np.sum(r)) for r in h[:half])
    last = sum(float(np.sum(r)) for r in h[len(h) - half:])
    return (last - first) / (lam * M_E)


def termination_window(n_params: int, M_E: int) -> int:
    return 120 + 20 * (n_params // M_E)


def should_terminate(history: Sequence[float], n_params: int, M_E: int) -> bool:
    """Stagnation test on per-generation best rewards.

    Looks at the last W generations; stops when the last 20 fail to strictly beat
    the first 20 on either the maximum or the median.
    """
    w = termination_window(n_params, M_E)
    if len(history) < w:
        return False
    window = np.asarray(history[-w:], dtype=np.float64)
    first, last = window[:20], window[-20:]
    return bool(last.max() <= first.max() or np.median(last) <= np.median(first))


def pareto_front_emitters(emitters: Sequence[Emitter]) -> list[Emitter]:
    objs = [(e.improvement, e.emitter_novelty) for e in emitters]
    return [e for i, e in enumerate(emitters)
            if not any(dominates(objs[j], objs[i]) for j in range(len(emitters)) if j != i)]


def pareto_pick_emitter(emitters: Sequence[Emitter], rng: np.random.Generator) -> Emitter:
    """Uniform pick among emitters non-dominated in (improvement, emitter novelty)."""
    if not emitters:
        raise ValueError("no emitter to pick from")
    front = pareto_front_emitters(emitters)
    return front[int(rng.integers(len(front)))]


# -- exploitation phase ----------------------------------------------------

@dataclass
class ExploitContext:
    """Everything the exploitation phase needs from the running engine."""

    evaluate: Evaluator
    novelty_archive: NoveltyArchive
    reward_archive: RewardArchive
    candidates: CandidateEmitterBuffer
    rng: np.random.Generator
    new_id: Callable[[], int]
    neighbors: Callable[[], list]
    n_params: int
    m: int = 2
    M_E: int = 6
    lam: int = 6
    N_Q: int = 5
    k_nn: int = 15
    fallback_sigma: float = 0.5
    bounds: tuple[float, float] = (PARAM_MIN, PARAM_MAX)
    clock: Callable[[], int] = lambda: 0


@dataclass
class EmitterPool:
    """Emitter buffer plus the emitter whose bootstrap was cut short by the budget."""

    queue: list[Emitter] = field(default_factory=list)
    pending: Optional[Emitter] = None
    next_id: int = 0
    log: list[str] = field(default_factory=list)

    def active(self) -> int:
        return len(self.queue) + (self.pending is not None)

    def policies(self) -> list[EvaluatedPolicy]:
        out = []
        for e in self.queue + ([self.pending] if self.pending is not None else []):
            out += e.policies()
        return out


@dataclass
class ExploitReport:
    bootstrap_evaluations: int = 0
    emitter_evaluations: int = 0
    created: int = 0
    queued: int = 0
    discarded: int = 0
    terminated: int = 0

    @property
    def evaluations(self) -> int:
        return self.bootstrap_evaluations + self.emitter_evaluations


LOG_HEADER = "event,emitter,generation,improvement,emitter_novelty,r_max,evaluations,at"


def _log(pool: EmitterPool, ctx: ExploitContext, event: str, e: Emitter) -> None:
    pool.log.append(f"{event},{e.id},{e.generation},{e.improvement!r},{e.emitter_novelty!r},"
                    f"{e.r_max!r},{e.evaluations},{ctx.clock()}")


def _novelty_vs(policies: Sequence[EvaluatedPolicy], reference: Sequence[EvaluatedPolicy], k: int) -> np.ndarray:
    if not policies:
        return np.zeros(0)
    if not reference:
        return np.full(len(policies), math.inf)
    q = np.stack([p.descriptor() for p in policies])
    r = np.stack([p.descriptor() for p in reference])
    return knn_novelty(q, r, k)


def pick_candidate(ctx: ExploitContext) -> EvaluatedPolicy:
    """Pop the candidate most novel with respect to the reward archive (first one on ties)."""
    nov = _novelty_vs(ctx.candidates.entries, ctx.reward_archive.entries, ctx.k_nn)
    return ctx.candidates.pop(int(np.argmax(nov)))


def bootstrap_step(ctx: ExploitContext, pool: EmitterPool, budget: int, report: ExploitReport) -> int:
    """Quick evaluation of new emitters. Returns evaluations spent (never more than ``budget``)."""
    used = 0
    gen_cost = ctx.m * ctx.M_E
    while True:
        e = pool.pending
        if e is None:
            if not ctx.candidates or used + ctx.M_E > budget:
                break
            seed = pick_candidate(ctx)
            e = init_emitter(seed, ctx.neighbors(), ctx.M_E, ctx.rng, ctx.new_id, pool.next_id,
                             ctx.fallback_sigma, ctx.bounds)
            pool.next_id += 1
            pool.pending = e
            used += evaluate_initial_population(e, ctx.evaluate)
            report.created += 1
            _log(pool, ctx, "created", e)
        while e.generation < ctx.lam and used + gen_cost <= budget:
            used += emitter_generation(e, ctx.evaluate, ctx.m, ctx.rng, ctx.new_id, ctx.bounds).evaluations
        if e.generation < ctx.lam:
            break
        pool.pending = None
        e.improvement = improvement(e.reward_history, ctx.lam, ctx.M_E, 0)
        if e.improvement > 0:
            e.state = EmitterState.QUEUED
            pool.queue.append(e)
            report.queued += 1
            _log(pool, ctx, "queued", e)
        else:
            e.state = EmitterState.DISCARDED
            report.discarded += 1
            _log(pool, ctx, "discarded", e)
    report.bootstrap_evaluations += used
    return used


def _record_generation(ctx: ExploitContext, e: Emitter, offspring: Sequence[EvaluatedPolicy]) -> None:
    """Reward records go to the reward archive, novelty records to the emitter's candidates."""
    r_prev = e.r_max
    for p in offspring:
        if p.reward > r_prev:
            ctx.reward_archive.add(p)
    e.r_max = max(r_prev, max((p.reward for p in offspring), default=r_prev))
    nov = _novelty_vs(offspring, ctx.novelty_archive.entries, ctx.k_nn)
    eta_prev = e.eta_max
    for p, v in zip(offspring, nov):
        p.novelty = float(v)
        if v > eta_prev:
            e.novelty_candidates.append(p)
    if len(nov):
        e.eta_max = max(eta_prev, float(nov.max()))


def emitter_run_step(ctx: ExploitContext, pool: EmitterPool, budget: int, report: ExploitReport) -> int:
    """Run queued emitters until the budget cannot fit another generation."""
    used = 0
    gen_cost = ctx.m * ctx.M_E
    for e in pool.queue:
        e.emitter_novelty = float(_novelty_vs([e.seed], ctx.reward_archive.entries, ctx.k_nn)[0])
    while pool.queue and used + gen_cost <= budget:
        e = pareto_pick_emitter(pool.queue, ctx.rng)
        pool.queue.remove(e)
        e.state = EmitterState.RUNNING
        e.gamma0 = e.generation
        _log(pool, ctx, "resumed", e)
        terminated = False
        while used + gen_cost <= budget:
            rep = emitter_generation(e, ctx.evaluate, ctx.m, ctx.rng, ctx.new_id, ctx.bounds)
            used += rep.evaluations
            _record_generation(ctx, e, rep.offspring)
            if should_terminate(e.offspring_best, ctx.n_params, ctx.M_E):
                terminated = True
                break
        if terminated:
            archive_sample_add(ctx.novelty_archive, e.novelty_candidates, ctx.N_Q, ctx.rng)
            e.state = EmitterState.TERMINATED
            report.terminated += 1
            _log(pool, ctx, "terminated", e)
            continue
        # budget ran out: refresh the improvement and put the emitter back
        if e.generation > e.gamma0:
            start = e.gamma0 if e.generation - e.gamma0 >= ctx.lam else max(e.generation - ctx.lam, 0)
            if len(e.reward_history) - start >= ctx.lam:
                e.improvement = improvement(e.reward_history, ctx.lam, ctx.M_E, start)
        e.state = EmitterState.QUEUED
        pool.queue.append(e)
        _log(pool, ctx, "queued", e)
    report.emitter_evaluations += used
    return used


def exploitation_phase(ctx: ExploitContext, pool: EmitterPool, budget: int) -> ExploitReport:
    """Bootstrap new emitters with a third of the budget, then run the queued ones."""
    report = ExploitReport()
    share = budget // 3
    spent = bootstrap_step(ctx, pool, share, report)
    emitter_run_step(ctx, pool, budget - spent, report)
    return report
