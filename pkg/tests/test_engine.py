import filecmp

import numpy as np
import pytest

from stax.core import read_archive
from stax.engine import (ConfigError, Engine, VARIANTS, make_config, read_metrics, run, save_run)

FAST = dict(budget=1500, chunk_size=40, pop_size=20, metric_interval=100, episode_len=50, raster_size=16,
            ae_hidden=(32, 16), latent_dim=4, max_epochs=3)


def test_default_settings():
    c = make_config()
    assert (c.budget, c.chunk_size, c.pop_size, c.sigma, c.archive_add, c.emitter_pop_size,
            c.bootstrap_gens) == (500000, 100, 100, 0.5, 5, 6, 6)
    assert c.offspring_per_parent == 2 and c.k_samples == 5 and c.k_nn == 15


def test_aliases_and_variant_resolution():
    c = make_config("STAX_single", Bud=1000, M_E=4)
    assert c.k_samples == 1 and c.budget == 1000 and c.emitter_pop_size == 4
    assert make_config("NS").emitters_enabled is False
    with pytest.raises(ConfigError) as err:
        make_config(bogus=1)
    assert err.value.key == "bogus"
    with pytest.raises(ConfigError) as err:
        make_config(sigma=-1)
    assert err.value.key == "sigma"
    with pytest.raises(ConfigError):
        make_config("NOPE")


@pytest.mark.parametrize("tag", sorted(VARIANTS))
def test_every_variant_respects_budget(tag):
    cfg = make_config(tag, **FAST)
    res = run(cfg)
    width = cfg.pop_size * cfg.offspring_per_parent
    assert cfg.budget <= res.evaluations < cfg.budget + width
    phases = {}
    for row in res.metrics:
        phases.setdefault(row["chunk"], set()).add(row["phase"])
    assert all(len(p) == 1 for p in phases.values())
    cov = [row["coverage"] for row in res.metrics]
    assert cov == sorted(cov)
    assert (res.ae is None) == (cfg.descriptor == "ground_truth")


def test_training_schedule_in_engine():
    eng = Engine(make_config("STAX", **FAST))
    fired = []
    for step in range(1, 11):
        eng.exploration_chunk()
        if eng.training_event() is not None:
            fired.append(step)
    assert fired == [1, 3, 6, 10]


def test_frozen_encoder_never_changes():
    eng = Engine(make_config("STAX-NT", **FAST))
    h = eng.ae.parameter_hash()
    eng.run()
    assert eng.ae.parameter_hash() == h


def test_learned_descriptors_have_k_times_latent_dims():
    res = run(make_config("STAX", **FAST))
    for p in res.novelty_archive:
        assert p.learned_bd.shape == (5 * 4,)


def test_reward_archive_entries_reward_positive():
    res = run(make_config("SERENE", **{**FAST, "budget": 3000}))
    assert all(p.reward > 0 for p in res.reward_archive)


def _save(cfg, path):
    res = run(cfg)
    save_run(res, path)
    return path


def test_deterministic_outputs_including_workers(tmp_path):
    cfg = make_config("STAX", **FAST, seed=3)
    a = _save(cfg, tmp_path / "a")
    b = _save(cfg, tmp_path / "b")
    c = _save(make_config("STAX", **FAST, seed=3, workers=2), tmp_path / "c")
    for name in ("metrics.csv", "archive_nov.csv", "archive_rew.csv", "ae.ckpt", "emitters.log"):
        assert filecmp.cmp(a / name, b / name, shallow=False), name
        assert filecmp.cmp(a / name, c / name, shallow=False), name
    d = _save(make_config("STAX", **FAST, seed=4), tmp_path / "d")
    assert not filecmp.cmp(a / "metrics.csv", d / "metrics.csv", shallow=False)


def test_saved_run_is_readable(tmp_path):
    cfg = make_config("NS", **FAST)
    out = _save(cfg, tmp_path / "r")
    rows = read_metrics(out / "metrics.csv")
    assert int(rows[-1]["evaluations"]) >= cfg.budget
    assert len(read_archive(out / "archive_nov.csv")) > 0
    assert not (tmp_path / ".r.tmp").exists()


def test_map_elites_keeps_one_elite_per_cell():
    eng = Engine(make_config("MAP-Elites", **FAST))
    res = eng.run()
    elites = list(res.novelty_archive) + list(res.reward_archive)
    ix, iy = eng.coverage.cell_index(np.stack([p.ground_truth_bd for p in elites]))
    cells = list(zip(ix.tolist(), iy.tolist()))
    assert len(cells) == len(set(cells))
    assert len(cells) == int(eng.coverage.occupied.sum())
