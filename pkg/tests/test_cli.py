import csv
import filecmp
import statistics

import pytest

import stax.cli as cli
from stax.cli import ConfigSyntaxError, main, parse_config, run_experiment, summarize
from stax.engine import read_metrics

SMALL = """
[experiment]
seeds = 1, 2, 3

[ns]
variant = NS
Bud = 600
M = 20
K_Bud = 40
T = 40
metric_interval = 200

[single]
variant = STAX_single
Bud = 600
M = 20
K_Bud = 40
T = 40
G = 16
ae_hidden = 32, 16
max_epochs = 2
"""


def test_empty_section_gives_defaults():
    spec = parse_config("[a]\n")
    c = spec.runs()[0]
    assert (c.budget, c.chunk_size, c.pop_size, c.sigma, c.archive_add, c.emitter_pop_size,
            c.bootstrap_gens) == (500000, 100, 100, 0.5, 5, 6, 6)
    assert len(spec.runs()) == 5


def test_variant_resolves_k_samples():
    assert parse_config("[a]\nvariant = STAX_single\n").runs()[0].k_samples == 1


@pytest.mark.parametrize("text,key,line", [
    ("[a]\nvariant = STAX\nsigma = -1\n", "sigma", 3),
    ("[a]\n\nfoo = 1\n", "foo", 3),
    ("[a]\nM = ten\n", "M", 2),
    ("[a]\nBud = 0\n", "Bud", 2),
    ("[a]\nseeds = 1, 1\n", "seeds", 2),
    ("[experiment]\nwhat = 1\n[a]\n", "what", 2),
])
def test_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigSyntaxError) as err:
        parse_config(text)
    assert err.value.key == key and err.value.line == line
    assert key in str(err.value) and f"line {line}" in str(err.value)


def test_desk_profile():
    c = parse_config("[a]\nvariant = STAX\n", profile="desk").runs()
    assert len(c) == 5
    assert (c[0].budget, c[0].grid_cells, c[0].raster_size, c[0].arm_dof) == (50000, 50, 32, 10)
    # explicit keys still win over the profile
    assert parse_config("[a]\nBud = 100\n", profile="desk").runs()[0].budget == 100


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    status = run_experiment(parse_config(SMALL), out, log=lambda *_: None)
    return out, status


def test_run_tree(experiment):
    out, status = experiment
    assert status == 0
    runs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert len(runs) == 6
    assert (out / "summary.csv").exists()
    for r in runs:
        assert {"config.json", "metrics.csv", "archive_nov.csv", "archive_rew.csv", "emitters.log"} <= {
            p.name for p in (out / r).iterdir()}
    assert (out / "STAX_single__pointmaze__seed1" / "ae.ckpt").exists()


def test_summary_matches_recomputation(experiment):
    out, _ = experiment
    with open(out / "summary.csv") as fh:
        rows = {r["variant"]: r for r in csv.DictReader(fh)}
    for variant in ("NS", "STAX_single"):
        finals = [float(read_metrics(out / f"{variant}__pointmaze__seed{s}" / "metrics.csv")[-1]["coverage"])
                  for s in (1, 2, 3)]
        assert float(rows[variant]["coverage_median"]) == statistics.median(finals)
        assert int(rows[variant]["runs"]) == 3


def test_rerun_is_byte_identical(experiment, tmp_path):
    out, _ = experiment
    run_experiment(parse_config(SMALL), tmp_path, log=lambda *_: None)
    for d in (p for p in out.iterdir() if p.is_dir()):
        assert filecmp.cmp(d / "metrics.csv", tmp_path / d.name / "metrics.csv", shallow=False)


def test_dry_run_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "x.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "--dry-run"]) == 0
    assert not out.exists()
    assert "6 runs ok" in capsys.readouterr().out


def test_validation_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[a]\nsigma = -1\n")
    assert main(["validate", str(cfg)]) == 1
    assert "sigma" in capsys.readouterr().err


def test_partial_failure_recorded(tmp_path, monkeypatch):
    real = cli.run

    def flaky(config, env=None):
        if config.seed == 2:
            raise RuntimeError("boom")
        return real(config, env)

    monkeypatch.setattr(cli, "run", flaky)
    spec = parse_config("[ns]\nvariant = NS\nBud = 200\nM = 10\nT = 20\nseeds = 1, 2\n")
    assert run_experiment(spec, tmp_path, log=lambda *_: None) == 2
    assert (tmp_path / "NS__pointmaze__seed2" / "error.txt").read_text().strip().endswith("boom")
    assert (tmp_path / "NS__pointmaze__seed1" / "metrics.csv").exists()
    with open(tmp_path / "summary.csv") as fh:
        row = next(csv.DictReader(fh))
    assert row["runs"] == "1" and row["failed"] == "1"
    assert "boom" in (tmp_path / "failures.csv").read_text()


def test_summarize_command(experiment, capsys):
    out, _ = experiment
    assert main(["summarize", str(out)]) == 0
    assert summarize(out)[0]["variant"] == "NS"
