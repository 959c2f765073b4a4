import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_policy
from oracles import brute_front_index, exhaustive_knn, reference_crowding, reference_nsga2_truncate
from stax.core import Genome
from stax.evolution import (IdCounter, Population, alternating_select, crowding_distance, dominates,
                            fast_nondominated_sort, knn_novelty, mutate, novelty, nsga2_select,
                            select_next_population, select_top)


def test_dominates_truth_table():
    assert dominates((1, 1), (0, 1))
    assert not dominates((1, 1), (1, 1))
    assert not dominates((1, 0), (0, 1))


def test_front_example():
    obj = np.array([[3, 1], [1, 3], [2, 2], [1, 1], [0, 0]], dtype=float)
    fa = fast_nondominated_sort(obj)
    assert list(fa.front_index) == [0, 0, 0, 1, 2]


def test_crowding_boundaries_infinite():
    obj = np.array([[0.0, 4.0], [1.0, 3.0], [2.0, 1.0], [4.0, 0.0]])
    cd = crowding_distance(obj)
    assert np.isinf(cd[0]) and np.isinf(cd[3])
    assert cd[1] == pytest.approx(2 / 4 + 3 / 4)
    assert cd[2] == pytest.approx(3 / 4 + 3 / 4)


objectives = st.integers(1, 40).flatmap(
    lambda n: arrays(np.float64, (n, 2), elements=st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])))


@given(objectives)
@settings(max_examples=100, deadline=None)
def test_fronts_match_brute_force(obj):
    assert np.array_equal(fast_nondominated_sort(obj).front_index, brute_front_index(obj))


@given(objectives, st.integers(1, 40))
@settings(max_examples=100, deadline=None)
def test_truncation_matches_reference(obj, count):
    count = min(count, len(obj))
    ids = list(range(100, 100 + len(obj)))
    got = {ids[i] for i in nsga2_select(obj, ids, count)}
    assert len(got) == count
    assert got == reference_nsga2_truncate(obj, ids, count)


@given(objectives)
@settings(max_examples=50, deadline=None)
def test_crowding_matches_reference(obj):
    ids = np.arange(len(obj))
    assert np.allclose(crowding_distance(obj, ids), reference_crowding(obj, ids), equal_nan=False)


def test_nsga2_never_drops_a_better_front():
    rng = np.random.default_rng(0)
    for _ in range(50):
        obj = rng.integers(0, 5, size=(30, 2)).astype(float)
        count = int(rng.integers(1, 30))
        chosen = set(nsga2_select(obj, range(30), count))
        rank = brute_front_index(obj)
        worst_kept = max(rank[i] for i in chosen)
        assert all(rank[i] >= worst_kept for i in set(range(30)) - chosen)


@given(st.integers(1, 60), st.integers(1, 8), st.integers(1, 20), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_knn_matches_exhaustive(n, dim, k, seed):
    rng = np.random.default_rng(seed)
    refs = rng.normal(size=(n, dim))
    queries = refs[: min(n, 5)]
    exclude = np.arange(len(queries))
    got = knn_novelty(queries, refs, k, exclude)
    want = exhaustive_knn(queries, refs, k, exclude)
    assert np.allclose(got, want, atol=1e-9, rtol=0)


def test_novelty_fewer_refs_than_k_and_empty():
    assert novelty(np.zeros(2), np.array([[3.0, 4.0]]), 15) == pytest.approx(5.0)
    assert novelty(np.zeros(2), np.zeros((0, 2)), 15) == np.inf
    with pytest.raises(ValueError):
        knn_novelty(np.zeros((1, 2)), np.zeros((3, 3)), 2)


def test_mutate_clips_and_links_parent():
    rng = np.random.default_rng(0)
    parent = Genome(np.full(10, 4.9), 7)
    kids = mutate(parent, 2.0, 3, rng, IdCounter(100))
    assert [k.id for k in kids] == [100, 101, 102]
    assert all(k.parent_id == 7 for k in kids)
    assert all(np.all(np.abs(k.params) <= 5.0) for k in kids)
    with pytest.raises(ValueError):
        mutate(parent, 0.0, 1, rng, IdCounter())


def _pool(n, rng):
    return [make_policy(i, novelty=float(rng.random()), surprise=float(rng.random())) for i in range(n)]


def test_select_next_population_size_and_pool_membership():
    rng = np.random.default_rng(1)
    pool = _pool(30, rng)
    pop = select_next_population(Population(pool[:10]), Population(pool[10:]), 10)
    assert len(pop.members) == 10
    assert {p.id for p in pop.members} <= {p.id for p in pool}
    with pytest.raises(ValueError):
        select_next_population(Population(pool[:3]), Population(pool[3:5]), 10)


def test_select_top_and_alternating():
    rng = np.random.default_rng(2)
    pool = _pool(12, rng)
    top = select_top(Population(pool[:6]), Population(pool[6:]), 4, "surprise")
    best = sorted(pool, key=lambda p: -p.surprise)[:4]
    assert {p.id for p in top.members} == {p.id for p in best}
    alt = alternating_select(Population(pool[:6]), Population(pool[6:]), 4, 3, np.random.default_rng(0))
    assert alt.selected_by in ("novelty", "surprise") and alt.generation == 4
