"""Batch experiment runner: parse an INI config, run every (variant, env, seed), summarize.

Config layout::

    [experiment]
    out = results          ; optional, --out wins
    seeds = 0, 1, 2        ; default seed list for every run section

    [stax_maze]            ; any other section is one run group
    variant = STAX
    env = pointmaze
    Bud = 50000            ; RunConfig field names or their short aliases
"""
from __future__ import annotations

import argparse
import ast
import configparser
import csv
import dataclasses
import json
import re
import shutil
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, get_type_hints

from .analysis import median_iqr
from .engine import ALIASES, ConfigError, RunConfig, make_config, read_metrics, run, save_run
from .envs import make_env

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# Desk-scale preset used by the acceptance runs. max_epochs is capped so that a
# 50000-evaluation run with AE training stays near a minute on one core.
DESK_PROFILE: dict[str, Any] = {"budget": 50000, "grid_cells": 50, "raster_size": 32, "arm_dof": 10,
                                "max_epochs": 5}
DESK_SEEDS = (0, 1, 2, 3, 4)
PROFILES = {"desk": (DESK_PROFILE, DESK_SEEDS)}

RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)}
_HINTS = get_type_hints(RunConfig)


class ConfigSyntaxError(ConfigError):
    def __init__(self, key: str, line: Optional[int], message: str):
        where = f" (line {line})" if line is not None else ""
        ValueError.__init__(self, f"{key}{where}: {message}")
        self.key = key
        self.line = line


@dataclass
class RunGroup:
    name: str
    variant: str
    env: str
    seeds: list[int]
    overrides: dict[str, Any] = field(default_factory=dict)

    def configs(self) -> list[RunConfig]:
        return [make_config(self.variant, env=self.env, seed=s, **self.overrides) for s in self.seeds]


@dataclass
class ExperimentSpec:
    groups: list[RunGroup]
    out: Optional[Path] = None

    def runs(self) -> list[RunConfig]:
        return [c for g in self.groups for c in g.configs()]


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line number, for error messages."""
    index: dict[tuple[str, str], int] = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index[(section, "")] = n
        elif line and line[0] not in "#;":
            key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
            index.setdefault((section, key), n)
    return index


def _parse_seeds(value: str) -> list[int]:
    seeds = [int(s) for s in value.replace(",", " ").split()]
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


def _coerce(name: str, raw: str) -> Any:
    hint = _HINTS[name]
    text = raw.strip()
    if hint is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    if hint is str:
        return text
    if name == "ae_hidden":
        return tuple(int(s) for s in text.replace(",", " ").split())
    if name == "episode_len":
        return None if text.lower() == "none" else int(text)
    # walls / reward_areas: python literal lists of tuples
    if text.lower() == "none":
        return None
    value = ast.literal_eval(text)
    if not isinstance(value, (list, tuple)):
        raise ValueError("expected a list")
    return [tuple(float(x) for x in item) for item in value]


def parse_config(text: str, profile: Optional[str] = None) -> ExperimentSpec:
    """Parse and fully validate an experiment config; errors name the key and its line."""
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigSyntaxError("config", getattr(exc, "lineno", None), str(exc).splitlines()[0]) from None

    base_overrides: dict[str, Any] = {}
    default_seeds = list(DEFAULT_SEEDS)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigSyntaxError("profile", None, f"unknown profile {profile!r}")
        base_overrides = dict(PROFILES[profile][0])
        default_seeds = list(PROFILES[profile][1])

    out = None
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            line = lines.get(("experiment", key))
            if key == "out":
                out = Path(raw.strip())
            elif key == "seeds":
                try:
                    default_seeds = _parse_seeds(raw)
                except ValueError as exc:
                    raise ConfigSyntaxError(key, line, str(exc)) from None
            else:
                raise ConfigSyntaxError(key, line, "unknown key in [experiment]")

    groups = []
    for section in parser.sections():
        if section == "experiment":
            continue
        variant_tag, env, seeds = "STAX", "pointmaze", list(default_seeds)
        overrides = dict(base_overrides)
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            name = ALIASES.get(key, key)
            try:
                if name == "variant":
                    variant_tag = raw.strip()
                elif name == "seeds":
                    seeds = _parse_seeds(raw)
                elif name == "seed":
                    raise ValueError("use 'seeds' to choose seeds")
                elif name in RUN_KEYS:
                    overrides[name] = _coerce(name, raw)
                else:
                    raise ValueError("unknown key")
            except (ValueError, SyntaxError) as exc:
                raise ConfigSyntaxError(key, line, str(exc)) from None
        env = overrides.pop("env", env)
        if len(set(seeds)) != len(seeds):
            raise ConfigSyntaxError("seeds", lines.get((section, "seeds")), "seeds must be distinct")
        group = RunGroup(section, variant_tag, env, seeds, overrides)
        try:
            group.configs()
        except ConfigError as exc:
            key = exc.key
            alias = next((a for a, n in ALIASES.items() if n == key and (section, a) in lines), key)
            line = lines.get((section, alias), lines.get((section, "")))
            raise ConfigSyntaxError(alias, line, str(exc).split(": ", 1)[-1]) from None
        except TypeError as exc:
            raise ConfigSyntaxError(section, lines.get((section, "")), str(exc)) from None
        groups.append(group)

    seen: set[tuple[str, str, int]] = set()
    for g in groups:
        for s in g.seeds:
            k = (g.variant, g.env, s)
            if k in seen:
                raise ConfigSyntaxError("seeds", lines.get((g.name, "seeds"), lines.get((g.name, ""))),
                                        f"seed {s} repeated for {g.variant}/{g.env}")
            seen.add(k)
    if not groups:
        raise ConfigSyntaxError("config", None, "no run sections")
    return ExperimentSpec(groups, out)


def run_dir_name(config: RunConfig) -> str:
    return f"{config.variant}__{config.env}__seed{config.seed}"


def _execute(config: RunConfig, out: Path) -> tuple[str, Optional[str]]:
    name = run_dir_name(config)
    try:
        env = make_env(config.env, config.env_options())
        result = run(config, env)
        save_run(result, out / name, env)
        return name, None
    except Exception:  # noqa: BLE001 - recorded and reported, the batch keeps going
        err = traceback.format_exc()
        tmp = out / f".{name}.tmp"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        (tmp / "config.json").write_text(json.dumps({"run": config.to_dict()}, indent=2, sort_keys=True) + "\n")
        (tmp / "error.txt").write_text(err)
        final = out / name
        if final.exists():
            shutil.rmtree(final)
        tmp.replace(final)
        return name, err


def run_experiment(spec: ExperimentSpec, out: Optional[Path] = None, parallel: int = 1,
                   log=print) -> int:
    """Run every configured run, write summary.csv, and return the exit status (0 ok, 2 failures)."""
    out = Path(out or spec.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    configs = spec.runs()
    failures: list[tuple[str, str]] = []
    if parallel > 1 and len(configs) > 1:
        with ProcessPoolExecutor(parallel) as pool:
            results = list(pool.map(_execute, configs, [out] * len(configs)))
    else:
        results = []
        for c in configs:
            results.append(_execute(c, out))
            log(f"{results[-1][0]}: {'ok' if results[-1][1] is None else 'FAILED'}")
    for name, err in results:
        if err is not None:
            failures.append((name, err.strip().splitlines()[-1]))
    with open(out / "failures.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "error"])
        w.writerows(failures)
    summarize(out)
    return 2 if failures else 0


def _final_row(run_dir: Path) -> Optional[dict]:
    path = run_dir / "metrics.csv"
    if not path.exists():
        return None
    rows = read_metrics(path)
    return rows[-1] if rows else None


def summarize(out: Path | str) -> list[dict]:
    """Aggregate the final metrics row of each run directory into summary.csv (median and IQR across seeds)."""
    out = Path(out)
    groups: dict[tuple[str, str], list[dict]] = {}
    failed: dict[tuple[str, str], int] = {}
    for d in sorted(p for p in out.iterdir() if p.is_dir() and not p.name.startswith(".")):
        cfg_path = d / "config.json"
        if not cfg_path.exists():
            continue
        cfg = json.loads(cfg_path.read_text())["run"]
        key = (cfg["variant"], cfg["env"])
        row = _final_row(d)
        if row is None or (d / "error.txt").exists():
            failed[key] = failed.get(key, 0) + 1
            groups.setdefault(key, [])
            continue
        groups.setdefault(key, []).append(row)

    table = []
    for (variant_tag, env), rows in sorted(groups.items()):
        entry: dict[str, Any] = {"variant": variant_tag, "env": env, "runs": len(rows),
                                 "failed": failed.get((variant_tag, env), 0)}
        columns = ["coverage"] + sorted({k for r in rows for k in r if k.startswith("max_reward_")})
        for col in columns:
            med, iqr = median_iqr([float(r[col]) for r in rows])
            entry[f"{col}_median"] = med
            entry[f"{col}_iqr"] = iqr
        table.append(entry)

    header: list[str] = []
    for e in table:
        header += [k for k in e if k not in header]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e in table:
            w.writerow([repr(e[k]) if isinstance(e.get(k), float) else e.get(k, "") for k in header])
    return table


def _load_spec(args) -> ExperimentSpec:
    text = Path(args.config).read_text()
    spec = parse_config(text, profile=args.profile)
    if args.seeds:
        seeds = _parse_seeds(args.seeds)
        if len(set(seeds)) != len(seeds):
            raise ConfigSyntaxError("--seeds", None, "seeds must be distinct")
        for g in spec.groups:
            g.seeds = seeds
    if args.metric_interval:
        for g in spec.groups:
            g.overrides["metric_interval"] = args.metric_interval
        spec.runs()
    return spec


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stax", description="Run sparse-reward exploration experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        s = sub.add_parser(name)
        s.add_argument("config", help="INI experiment file")
        s.add_argument("--profile", choices=sorted(PROFILES))
        s.add_argument("--seeds", help="comma separated seed list replacing every section's seeds")
        s.add_argument("--metric-interval", type=int, help="evaluations between metric rows")
        if name == "run":
            s.add_argument("--out", type=Path, help="output directory (default: config value or ./results)")
            s.add_argument("--parallel", type=int, default=1, help="runs executed concurrently")
            s.add_argument("--dry-run", action="store_true", help="validate and list runs, write nothing")
    s = sub.add_parser("summarize")
    s.add_argument("out", type=Path)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "summarize":
        if not args.out.is_dir():
            print(f"error: {args.out} is not a directory", file=sys.stderr)
            return 1
        for row in summarize(args.out):
            print(row["variant"], row["env"], f"coverage {row['coverage_median']:.2f}")
        return 0
    try:
        spec = _load_spec(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    configs = spec.runs()
    if args.command == "validate" or args.dry_run:
        for c in configs:
            print(run_dir_name(c))
        print(f"{len(configs)} runs ok")
        return 0
    return run_experiment(spec, args.out, args.parallel)


if __name__ == "__main__":
    sys.exit(main())
