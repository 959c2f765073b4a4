"""Run configuration, algorithm variants and the budget-chunked main loop."""
from __future__ import annotations

import csv
import dataclasses
import json
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .analysis import CoverageGrid, RewardTracker
from .autoencoder import (MlpAutoencoder, TrainingReport, TrainingSchedule, assemble_dataset, encode_policies,
                          refresh_descriptors, save_checkpoint, train_episode)
from .core import (CandidateEmitterBuffer, EvaluatedPolicy, Genome, NoveltyArchive, RewardArchive,
                   archive_sample_add, write_archive)
from .emitter import LOG_HEADER, EmitterPool, ExploitContext, exploitation_phase
from .envs import Environment, make_env
from .evolution import (IdCounter, Population, alternating_select, knn_novelty, mutate, select_next_population,
                        select_top)

AE_REGIMES = ("train", "frozen_random", "reshuffle_random", "reset_each_episode")
DESCRIPTORS = ("learned", "ground_truth")
SELECTIONS = ("nsga2_novelty_surprise", "alternating", "novelty_only", "novelty_reward_nsga2", "map_elites_grid")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    budget: int = 500000
    chunk_size: int = 100
    pop_size: int = 100
    offspring_per_parent: int = 2
    sigma: float = 0.5
    archive_add: int = 5
    emitter_pop_size: int = 6
    bootstrap_gens: int = 6
    k_samples: int = 5
    latent_dim: int = 10
    k_nn: int = 15
    param_min: float = -5.0
    param_max: float = 5.0
    seed: int = 0
    env: str = "pointmaze"
    variant: str = "STAX"
    ae_regime: str = "train"
    descriptor: str = "learned"
    selection: str = "nsga2_novelty_surprise"
    emitters_enabled: bool = True
    ae_hidden: tuple = (256, 64)
    ae_lr: float = 1e-3
    ae_dtype: str = "float32"
    max_epochs: int = 50
    batch_size: int = 64
    train_fraction: float = 0.9
    grid_cells: int = 50
    metric_interval: int = 1000
    workers: int = 1
    episode_len: Optional[int] = None
    raster_size: int = 32
    arm_dof: int = 10
    end_effector_only: bool = False
    walls: Optional[list] = None
    reward_areas: Optional[list] = None

    def validate(self) -> "RunConfig":
        positive = ["budget", "chunk_size", "pop_size", "offspring_per_parent", "emitter_pop_size",
                    "bootstrap_gens", "k_samples", "latent_dim", "k_nn", "batch_size", "grid_cells",
                    "metric_interval", "workers", "raster_size", "arm_dof"]
        for key in positive:
            if getattr(self, key) < 1:
                raise ConfigError(key, f"must be >= 1, got {getattr(self, key)}")
        if self.archive_add < 0:
            raise ConfigError("archive_add", "must be >= 0")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs", "must be >= 0")
        for key in ("sigma", "ae_lr"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, f"must be > 0, got {getattr(self, key)}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction", "must lie in (0, 1)")
        if not self.param_min < self.param_max:
            raise ConfigError("param_min", "must be smaller than param_max")
        if self.episode_len is not None and self.episode_len < 1:
            raise ConfigError("episode_len", "must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        choices = {"ae_regime": AE_REGIMES, "descriptor": DESCRIPTORS, "selection": SELECTIONS}
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(key, f"{getattr(self, key)!r} not in {list(allowed)}")
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"unknown variant {self.variant!r}")
        if self.env not in ("pointmaze", "curling", "arm"):
            raise ConfigError("env", f"unknown environment {self.env!r}")
        if self.ae_dtype not in ("float32", "float64"):
            raise ConfigError("ae_dtype", f"{self.ae_dtype!r} not in ['float32', 'float64']")
        if any(h < 1 for h in self.ae_hidden):
            raise ConfigError("ae_hidden", "layer sizes must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ae_hidden"] = list(self.ae_hidden)
        return d

    def env_options(self) -> dict:
        opts: dict[str, Any] = {"episode_len": self.episode_len, "raster_size": self.raster_size,
                                "reward_areas": self.reward_areas}
        if self.env == "arm":
            opts.update(dof=self.arm_dof, end_effector_only=self.end_effector_only, walls=self.walls)
        elif self.env == "pointmaze":
            opts["walls"] = self.walls
        return opts


# Short names used in the literature, accepted as configuration keys.
ALIASES = {
    "Bud": "budget", "K_Bud": "chunk_size", "M": "pop_size", "m": "offspring_per_parent",
    "N_Q": "archive_add", "M_E": "emitter_pop_size", "lambda": "bootstrap_gens",
    "K_samples": "k_samples", "C": "grid_cells", "G": "raster_size", "T": "episode_len",
}

VARIANTS: dict[str, dict[str, Any]] = {
    "STAX": {},
    "STAX_single": {"k_samples": 1},
    "STAX-ALT_multi": {"selection": "alternating"},
    "STAX-ALT_single": {"selection": "alternating", "k_samples": 1},
    "STAX-NT": {"ae_regime": "frozen_random"},
    "STAX-NT_reset": {"ae_regime": "reshuffle_random"},
    "STAX_reset": {"ae_regime": "reset_each_episode"},
    "NS": {"descriptor": "ground_truth", "selection": "novelty_only", "emitters_enabled": False},
    "SERENE": {"descriptor": "ground_truth", "selection": "novelty_only", "emitters_enabled": True},
    "TAXONS": {"selection": "alternating", "emitters_enabled": False, "k_samples": 1},
    "MOO-NR": {"descriptor": "ground_truth", "selection": "novelty_reward_nsga2", "emitters_enabled": False},
    "MAP-Elites": {"descriptor": "ground_truth", "selection": "map_elites_grid", "emitters_enabled": False},
}


def variant(tag: str) -> dict[str, Any]:
    """Configuration delta of a named variant."""
    if tag not in VARIANTS:
        raise ConfigError("variant", f"unknown variant {tag!r}; choose from {sorted(VARIANTS)}")
    return {"variant": tag, **VARIANTS[tag]}


def make_config(tag: str = "STAX", **overrides) -> RunConfig:
    """Defaults, then the variant delta, then explicit overrides."""
    values = {**variant(tag), **{ALIASES.get(k, k): v for k, v in overrides.items()}}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for k in values:
        if k not in names:
            raise ConfigError(k, "unknown key")
    return RunConfig(**values).validate()


# -- evaluation ------------------------------------------------------------

_WORKER_ENV: Optional[Environment] = None


def _worker_init(name: str, options: dict) -> None:
    global _WORKER_ENV
    _WORKER_ENV = make_env(name, options)


def _worker_rollout(args):
    params, k, render = args
    return _WORKER_ENV.rollout(params, k, render)


@dataclass
class ChunkRecord:
    chunk: int
    phase: str
    start_eval: int
    end_eval: int
    overshoot: int


@dataclass
class RunResult:
    config: RunConfig
    novelty_archive: NoveltyArchive
    reward_archive: RewardArchive
    ae: Optional[MlpAutoencoder]
    schedule: TrainingSchedule
    metrics: list[dict]
    chunks: list[ChunkRecord]
    emitter_log: list[str]
    evaluations: int
    coverage: float
    max_rewards: np.ndarray
    population: list[EvaluatedPolicy] = field(default_factory=list)
    training_reports: list[TrainingReport] = field(default_factory=list)


class Engine:
    """State and main loop of one run."""

    def __init__(self, config: RunConfig, env: Optional[Environment] = None):
        self.config = config.validate()
        self.env = env if env is not None else make_env(config.env, config.env_options())
        ss = np.random.SeedSequence(config.seed)
        evo, ae, emit, samp = ss.spawn(4)
        self.rng_evolution = np.random.default_rng(evo)
        self.rng_ae = np.random.default_rng(ae)
        self.rng_emitters = np.random.default_rng(emit)
        self.rng_sampling = np.random.default_rng(samp)
        self.new_id = IdCounter()
        self.bounds = (config.param_min, config.param_max)
        self.learned = config.descriptor == "learned"
        self.ae: Optional[MlpAutoencoder] = None
        if self.learned:
            self.ae = MlpAutoencoder(self.env.raster_size ** 2, config.ae_hidden, config.latent_dim,
                                     lr=config.ae_lr, rng=self.rng_ae, dtype=np.dtype(config.ae_dtype))
        self.schedule = TrainingSchedule()
        self.novelty_archive = NoveltyArchive()
        self.reward_archive = RewardArchive()
        self.candidates = CandidateEmitterBuffer()
        self.emitters = EmitterPool()
        self.population: list[EvaluatedPolicy] = []
        self.last_parents: list[EvaluatedPolicy] = []
        self.last_offspring: list[EvaluatedPolicy] = []
        self.evaluations = 0
        self.generation = 0
        self.chunk = 0
        self.phase = "exploration"
        self.coverage = CoverageGrid(self.env.bounds, config.grid_cells)
        self.rewards = RewardTracker(len(self.env.reward_areas))
        self.metrics: list[dict] = []
        self.chunks: list[ChunkRecord] = []
        self.training_reports: list[TrainingReport] = []
        self._pool: Optional[ProcessPoolExecutor] = None

    # -- evaluation ----------------------------------------------------
    def _rollout(self, params: np.ndarray, render: bool):
        w = self.config.workers
        if w <= 1 or len(params) < 2:
            return self.env.rollout(params, self.config.k_samples, render)
        if self._pool is None:
            self._pool = ProcessPoolExecutor(w, initializer=_worker_init,
                                             initargs=(self.config.env, self.config.env_options()))
        blocks = np.array_split(params, min(w, len(params)))
        parts = list(self._pool.map(_worker_rollout, [(b, self.config.k_samples, render) for b in blocks]))
        obs = None if parts[0].observations is None else np.concatenate([p.observations for p in parts])
        return type(parts[0])(np.concatenate([p.ground_truth_bd for p in parts]),
                              np.concatenate([p.reward for p in parts]),
                              np.concatenate([p.reward_area for p in parts]), obs)

    def evaluate(self, genomes: Sequence[Genome], with_surprise: bool = True) -> list[EvaluatedPolicy]:
        """Roll out ``genomes``, update the online metrics and return policies in input order."""
        if not genomes:
            return []
        params = np.stack([g.params for g in genomes])
        out = self._rollout(params, render=self.learned)
        start = self.evaluations
        policies = []
        for i, g in enumerate(genomes):
            policies.append(EvaluatedPolicy(
                genome=g,
                observations=None if out.observations is None else out.observations[i],
                ground_truth_bd=out.ground_truth_bd[i].copy(),
                reward=float(out.reward[i]),
                reward_area=int(out.reward_area[i]),
                evaluated_at=start + i + 1,
            ))
        if self.learned:
            encode_policies(self.ae, policies, with_surprise=with_surprise)
        self.evaluations += len(genomes)
        self.coverage.add(out.ground_truth_bd)
        self.rewards.update(out.reward, out.reward_area)
        interval = self.config.metric_interval
        if self.evaluations // interval > start // interval:
            self._record_metrics()
        return policies

    # -- metrics -------------------------------------------------------
    def _record_metrics(self) -> None:
        last = self.training_reports[-1] if self.training_reports else None
        row = {
            "evaluations": self.evaluations,
            "chunk": self.chunk,
            "phase": self.phase,
            "generation": self.generation,
            "coverage": self.coverage.percentage,
        }
        for j, m in enumerate(self.rewards.maxima):
            row[f"max_reward_{j}"] = float(m)
        row.update({
            "archive_nov": len(self.novelty_archive),
            "archive_rew": len(self.reward_archive),
            "active_emitters": self.emitters.active(),
            "ae_train_loss": last.train_losses[-1] if last and last.train_losses else None,
            "ae_val_loss": last.val_losses[-1] if last and last.val_losses else None,
            "TI": self.schedule.interval if self.learned else None,
        })
        self.metrics.append(row)

    # -- exploration -----------------------------------------------------
    def _random_population(self) -> list[Genome]:
        n = self.env.n_params
        params = np.clip(self.rng_evolution.normal(0.0, 1.0, (self.config.pop_size, n)), *self.bounds)
        return [Genome(p, self.new_id()) for p in params]

    def _compute_novelty(self, pool: Sequence[EvaluatedPolicy]) -> None:
        """Novelty of every pool member against pool and novelty archive, itself excluded."""
        ids = {p.id for p in pool}
        refs = list(pool) + [a for a in self.novelty_archive if a.id not in ids]
        q = np.stack([p.descriptor() for p in pool])
        r = np.stack([p.descriptor() for p in refs])
        nov = knn_novelty(q, r, self.config.k_nn, exclude=np.arange(len(pool)))
        for p, v in zip(pool, nov):
            p.novelty = float(v)

    def _select(self, parents: list[EvaluatedPolicy], offspring: list[EvaluatedPolicy]) -> list[EvaluatedPolicy]:
        cfg = self.config
        par = Population(parents, self.generation)
        off = Population(offspring, self.generation)
        if cfg.selection == "nsga2_novelty_surprise":
            return select_next_population(par, off, cfg.pop_size).members
        if cfg.selection == "novelty_reward_nsga2":
            return select_next_population(par, off, cfg.pop_size, ("novelty", "reward")).members
        if cfg.selection == "alternating":
            return alternating_select(par, off, cfg.pop_size, self.generation, self.rng_evolution).members
        return select_top(par, off, cfg.pop_size, "novelty").members

    def exploration_generation(self) -> int:
        cfg = self.config
        genomes = []
        for parent in self.population:
            genomes += mutate(parent.genome, cfg.sigma, cfg.offspring_per_parent, self.rng_evolution,
                              self.new_id, self.bounds)
        offspring = self.evaluate(genomes, with_surprise=True)
        pool = self.population + offspring
        self._compute_novelty(pool)
        archive_sample_add(self.novelty_archive, offspring, cfg.archive_add, self.rng_sampling)
        if cfg.emitters_enabled:
            for p in offspring:
                if p.reward > 0:
                    self.candidates.add(p)
        self.last_parents = self.population
        self.last_offspring = offspring
        self.population = self._select(self.population, offspring)
        self.generation += 1
        return len(offspring)

    def exploration_chunk(self) -> int:
        self.phase = "exploration"
        start = self.evaluations
        used = 0
        if not self.population:
            self.population = self.evaluate(self._random_population(), with_surprise=True)
        while used < self.config.chunk_size and self.evaluations < self.config.budget:
            used += self.exploration_generation()
        self.chunks.append(ChunkRecord(self.chunk, "exploration", start, self.evaluations,
                                       max(0, used - self.config.chunk_size)))
        self.chunk += 1
        return used

    # -- autoencoder -------------------------------------------------------
    def _stored_policies(self) -> list[list[EvaluatedPolicy]]:
        return [self.novelty_archive.entries, self.reward_archive.entries, self.population,
                self.last_parents, self.last_offspring, self.candidates.entries, self.emitters.policies()]

    def training_event(self) -> Optional[TrainingReport]:
        """Called after each exploration chunk; trains (or resamples) the AE when the schedule fires."""
        if not self.learned or not self.schedule.tick():
            return None
        cfg = self.config
        regime = cfg.ae_regime
        if regime == "frozen_random":
            return None
        report = None
        if regime in ("reshuffle_random", "reset_each_episode"):
            self.ae.reset_parameters()
        if regime in ("train", "reset_each_episode"):
            data = assemble_dataset([self.novelty_archive, self.reward_archive, self.last_parents,
                                     self.last_offspring], self.rng_ae, cfg.train_fraction)
            report = train_episode(self.ae, data, cfg.max_epochs, cfg.batch_size, self.rng_ae)
            self.training_reports.append(report)
        refresh_descriptors(self.ae, self._stored_policies(), with_surprise=True)
        return report

    # -- exploitation ------------------------------------------------------
    def _exploit_context(self) -> ExploitContext:
        cfg = self.config
        return ExploitContext(
            evaluate=lambda gs: self.evaluate(gs, with_surprise=False),
            novelty_archive=self.novelty_archive, reward_archive=self.reward_archive,
            candidates=self.candidates, rng=self.rng_emitters, new_id=self.new_id,
            neighbors=lambda: [p.genome for p in self.population + self.last_offspring],
            n_params=self.env.n_params, m=cfg.offspring_per_parent, M_E=cfg.emitter_pop_size,
            lam=cfg.bootstrap_gens, N_Q=cfg.archive_add, k_nn=cfg.k_nn, fallback_sigma=cfg.sigma,
            bounds=self.bounds, clock=lambda: self.evaluations)

    def exploitation_pending(self) -> bool:
        return bool(self.candidates) or self.emitters.active() > 0

    def exploitation_chunk(self) -> int:
        self.phase = "exploitation"
        start = self.evaluations
        budget = min(self.config.chunk_size, self.config.budget - self.evaluations)
        report = exploitation_phase(self._exploit_context(), self.emitters, budget)
        self.chunks.append(ChunkRecord(self.chunk, "exploitation", start, self.evaluations, 0))
        self.chunk += 1
        return report.evaluations

    # -- MAP-Elites ----------------------------------------------------------
    def _map_elites(self) -> dict:
        cfg = self.config
        grid: dict[tuple[int, int], EvaluatedPolicy] = {}

        def insert(policies):
            ix, iy = self.coverage.cell_index(np.stack([p.ground_truth_bd for p in policies]))
            for p, a, b in zip(policies, ix, iy):
                key = (int(a), int(b))
                if key not in grid or p.reward > grid[key].reward:
                    grid[key] = p

        self.phase = "exploration"
        batch = cfg.pop_size * cfg.offspring_per_parent
        while self.evaluations < cfg.budget:
            start = self.evaluations
            used = 0
            if not grid:
                insert(self.evaluate(self._random_population()))
            while used < cfg.chunk_size and self.evaluations < cfg.budget:
                cells = sorted(grid)
                picks = self.rng_evolution.integers(len(cells), size=batch)
                genomes = []
                for i in picks:
                    genomes += mutate(grid[cells[int(i)]].genome, cfg.sigma, 1, self.rng_evolution,
                                      self.new_id, self.bounds)
                insert(self.evaluate(genomes))
                used += len(genomes)
                self.generation += 1
            self.chunks.append(ChunkRecord(self.chunk, "exploration", start, self.evaluations,
                                           max(0, used - cfg.chunk_size)))
            self.chunk += 1
        for key in sorted(grid):
            p = grid[key]
            (self.reward_archive if p.reward > 0 else self.novelty_archive).add(p)
        return grid

    # -- main loop -----------------------------------------------------------
    def run(self) -> RunResult:
        cfg = self.config
        try:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(1)
        except ImportError:  # pragma: no cover
            limiter = None
        try:
            if cfg.selection == "map_elites_grid":
                self._map_elites()
            else:
                while self.evaluations < cfg.budget:
                    self.exploration_chunk()
                    self.training_event()
                    if self.evaluations >= cfg.budget:
                        break
                    if cfg.emitters_enabled and self.exploitation_pending():
                        self.exploitation_chunk()
            if not self.metrics or self.metrics[-1]["evaluations"] != self.evaluations:
                self._record_metrics()
        finally:
            if limiter is not None:
                limiter.unregister()
            if self._pool is not None:
                self._pool.shutdown()
                self._pool = None
        return RunResult(cfg, self.novelty_archive, self.reward_archive, self.ae, self.schedule,
                         self.metrics, self.chunks, list(self.emitters.log), self.evaluations,
                         self.coverage.percentage, self.rewards.maxima.copy(), self.population,
                         self.training_reports)


def run(config: RunConfig, env: Optional[Environment] = None) -> RunResult:
    return Engine(config, env).run()


# -- output ------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(path: Path | str, rows: Sequence[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_cell(v) for v in r.values()])


def read_metrics(path: Path | str) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_chunks(path: Path | str, chunks: Sequence[ChunkRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chunk", "phase", "start_eval", "end_eval", "overshoot"])
        for c in chunks:
            w.writerow([c.chunk, c.phase, c.start_eval, c.end_eval, c.overshoot])


def save_run(result: RunResult, run_dir: Path | str, env: Optional[Environment] = None) -> Path:
    """Write every run artifact to a sibling temp dir, then rename it into place."""
    run_dir = Path(run_dir)
    tmp = run_dir.with_name(f".{run_dir.name}.tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    snapshot = {"run": result.config.to_dict()}
    if env is not None:
        snapshot["environment"] = env.spec()
    (tmp / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    write_metrics(tmp / "metrics.csv", result.metrics)
    write_chunks(tmp / "chunks.csv", result.chunks)
    write_archive(tmp / "archive_nov.csv", result.novelty_archive)
    write_archive(tmp / "archive_rew.csv", result.reward_archive)
    if result.ae is not None:
        save_checkpoint(tmp / "ae.ckpt", result.ae, result.schedule)
    (tmp / "emitters.log").write_text("\n".join([LOG_HEADER, *result.emitter_log]) + "\n")
    if run_dir.exists():
        shutil.rmtree(run_dir)
    os.replace(tmp, run_dir)
    return run_dir


def final_summary(result: RunResult) -> dict:
    return {"coverage": result.coverage, "evaluations": result.evaluations,
            **{f"max_reward_{j}": float(m) for j, m in enumerate(result.max_rewards)}}


__all__ = ["RunConfig", "ConfigError", "VARIANTS", "ALIASES", "variant", "make_config", "Engine", "run",
           "RunResult", "ChunkRecord", "save_run", "write_metrics", "read_metrics", "write_chunks",
           "final_summary"]
