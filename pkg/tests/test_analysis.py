import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_policy
from oracles import brute_coverage
from stax.analysis import (CoverageGrid, coverage, distance_structure_report, max_reward_per_area, median_iqr,
                           pearson, read_distance_report, write_distance_report)


def test_coverage_edges_and_corners():
    pts = np.array([[0.0, 0.0], [10.0, 10.0], [9.99, 9.99], [-3.0, 5.0], [5.0, 5.0]])
    assert coverage(pts, (0, 0, 10, 10), 10) == pytest.approx(100 * 4 / 100)


@given(st.lists(st.tuples(st.floats(-1, 11), st.floats(-1, 11)), min_size=1, max_size=200),
       st.integers(1, 60))
@settings(max_examples=100, deadline=None)
def test_coverage_matches_brute_force(points, cells):
    assert coverage(np.array(points), (0, 0, 10, 10), cells) == pytest.approx(
        brute_coverage(points, (0, 0, 10, 10), cells))


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=100))
@settings(max_examples=50, deadline=None)
def test_coverage_monotone(points):
    grid = CoverageGrid((0, 0, 10, 10), 50)
    last = 0.0
    for p in points:
        grid.add(np.array([p]))
        assert grid.percentage >= last
        last = grid.percentage


def test_max_reward_per_area_is_running_max():
    log = [(1, 0.2, 0), (5, 0.1, 0), (7, 0.6, 1), (9, 0.5, 0)]
    out = max_reward_per_area(log, 2, [0, 5, 8, 10])
    assert np.allclose(out, [[0, 0], [0.2, 0], [0.2, 0.6], [0.5, 0.6]])


@given(st.integers(2, 50), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_pearson_matches_numpy(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n), rng.normal(size=n)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_pearson_edge_cases():
    assert pearson([1, 1, 1], [1, 2, 3]) is None
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pearson([1], [1])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


def _archive(n, learned):
    rng = np.random.default_rng(0)
    out = []
    for i in range(n):
        bd = rng.uniform(0, 10, 2)
        out.append(make_policy(i, bd=bd, learned=bd.copy() if learned else None))
    return out


def test_identical_spaces_give_unit_correlation():
    rep = distance_structure_report(_archive(40, learned=False), n_anchors=6, rng=np.random.default_rng(1))
    assert len(rep.summary) == 6
    assert all(abs(r - 1.0) <= 1e-9 for r in rep.summary.values())


def test_report_roundtrip(tmp_path):
    arch = _archive(20, learned=True)
    for p in arch:
        p.learned_bd = np.random.default_rng(p.id).normal(size=10)
    rep = distance_structure_report(arch, n_anchors=4, rng=np.random.default_rng(2))
    rep.summary[next(iter(rep.summary))] = None
    write_distance_report(rep, tmp_path / "rows.csv", tmp_path / "summary.csv")
    back = read_distance_report(tmp_path / "rows.csv", tmp_path / "summary.csv")
    assert back.rows == rep.rows and back.summary == rep.summary


def test_report_needs_three_members():
    with pytest.raises(ValueError):
        distance_structure_report(_archive(2, learned=False))


def test_median_iqr():
    vals = [3.0, 1.0, 4.0, 1.0, 5.0]
    med, iqr = median_iqr(vals)
    assert med == statistics.median(vals)
    q = statistics.quantiles(vals, n=4, method="inclusive")
    assert iqr == pytest.approx(q[2] - q[0])
