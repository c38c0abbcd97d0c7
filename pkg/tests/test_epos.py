import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogplace.costmodel import utilization_variance
from fogplace.epos import (EposError, brute_force_best, build_tree, global_response_of, run_epos,
                           weighted_cost)


def P(vector, cost):
    return SimpleNamespace(vector=np.asarray(vector, dtype=float), cost=float(cost))


def random_plans(rng, agents, plans, length, cost_ties=False):
    out = {}
    for a in range(agents):
        costs = rng.integers(0, 3, plans) if cost_ties else rng.random(plans)
        out[a] = [P(rng.random(length), c) for c in costs]
    return out


# -- tree ------------------------------------------------------------------

def test_single_agent_tree():
    t = build_tree([5])
    assert t.root == 5 and t.children(5) == [] and t.parent(5) is None and t.depth() == 0


def test_seven_agents_complete_binary():
    t = build_tree(list(range(7)), 2, seed=1)
    assert t.depth() == 2
    assert sorted(t.order) == list(range(7))
    assert [len(t.children(a)) for a in t.order] == [2, 2, 2, 0, 0, 0, 0]
    for a in t.order[1:]:
        assert a in t.children(t.parent(a))


def test_seeds_change_mapping_not_shape():
    a, b = build_tree(range(200), 2, seed=1), build_tree(range(200), 2, seed=2)
    assert a.order != b.order
    assert sorted(a.order) == sorted(b.order) == list(range(200))
    shape = lambda t: [len(t.children_pos(p)) for p in range(len(t.order))]
    assert shape(a) == shape(b)
    assert a.depth() == b.depth() == 7


def test_tree_errors():
    with pytest.raises(EposError):
        build_tree([])
    with pytest.raises(EposError):
        build_tree([1, 2], fanout=0)


def test_fanout_three():
    t = build_tree(range(13), 3, seed=0)
    assert t.depth() == 2
    assert len(t.children(t.root)) == 3


# -- weighted cost ---------------------------------------------------------

def test_weighted_cost_examples():
    assert weighted_cost(0.2, 0.4, 0.0) == 0.2
    assert weighted_cost(0.2, 0.4, 1.0) == 0.4
    assert weighted_cost(0.2, 0.4, 0.5) == pytest.approx(0.3)


# -- selection -------------------------------------------------------------

def test_lambda_one_picks_cheapest():
    rng = np.random.default_rng(0)
    plans = random_plans(rng, 12, 5, 6)
    res = run_epos(plans, lam=1.0, iterations=10)
    for a, plist in plans.items():
        assert res.selections[a] == int(np.argmin([p.cost for p in plist]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), tree_seed=st.integers(0, 100))
def test_lambda_one_invariance_with_ties(seed, tree_seed):
    rng = np.random.default_rng(seed)
    plans = random_plans(rng, 6, 4, 5, cost_ties=True)
    res = run_epos(plans, lam=1.0, iterations=10, seed=tree_seed)
    for a, plist in plans.items():
        costs = [p.cost for p in plist]
        assert res.selections[a] == costs.index(min(costs))


def test_four_agents_three_plans_near_optimal():
    rng = np.random.default_rng(42)
    for trial in range(20):
        plans = random_plans(rng, 4, 3, 6)
        res = run_epos(plans, lam=0.0, iterations=40, seed=trial)
        allv = brute_force_best(plans)
        assert len(allv) == 81
        better = np.sum(allv < res.final.global_cost - 1e-12)
        assert better <= 0.05 * 81


def test_baseline_counts_in_variance():
    rng = np.random.default_rng(5)
    plans = random_plans(rng, 3, 3, 4)
    base = np.array([0.9, 0.0, 0.0, 0.9])
    res = run_epos(plans, lam=0.0, baseline=base)
    total = global_response_of(plans, res.selections) + base
    assert res.final.global_cost == pytest.approx(utilization_variance(total), abs=1e-12)
    assert res.final.global_cost <= np.sort(brute_force_best(plans, baseline=base))[1] + 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), agents=st.integers(1, 15), plans=st.integers(1, 6),
       lam=st.sampled_from([0.0, 0.3, 0.7]), metric=st.sampled_from(["cpu", "mem", "overall"]))
def test_learning_properties(seed, agents, plans, lam, metric):
    rng = np.random.default_rng(seed)
    pl = random_plans(rng, agents, plans, 8)
    res = run_epos(pl, lam=lam, iterations=15, metric=metric, seed=seed)
    again = run_epos(pl, lam=lam, iterations=15, metric=metric, seed=seed)
    assert res.selections == again.selections
    assert [h.global_cost for h in res.trace] == [h.global_cost for h in again.trace]
    for a, idx in res.selections.items():
        assert 0 <= idx < len(pl[a])
    total = global_response_of(pl, res.selections)
    np.testing.assert_allclose(res.final.vector, total, atol=1e-9)
    assert res.final.global_cost == pytest.approx(utilization_variance(total, metric), abs=1e-12)
    w = [h.weighted_cost for h in res.history]
    assert all(b <= a for a, b in zip(w, w[1:]))
    if lam == 0.0:
        g = [h.global_cost for h in res.history]
        assert all(b <= a for a, b in zip(g, g[1:]))
        for x, y in zip(res.trace, res.trace[1:]):
            if x.segment == y.segment:
                assert y.global_cost <= x.global_cost


def test_root_aggregate_matches_recomputed_sum_each_iteration():
    rng = np.random.default_rng(9)
    plans = random_plans(rng, 20, 5, 10)
    for t in range(0, 12):
        res = run_epos(plans, lam=0.0, iterations=t, reorganizations=0)
        np.testing.assert_allclose(res.final.vector, global_response_of(plans, res.selections), atol=1e-9)
        assert res.final.iteration <= t


def test_stops_when_global_cost_settles():
    rng = np.random.default_rng(3)
    plans = random_plans(rng, 5, 2, 4)
    res = run_epos(plans, lam=0.0, iterations=40, reorganizations=0)
    assert len(res.history) < 41
    g = [h.global_cost for h in res.trace]
    assert abs(g[-1] - g[-2]) <= 1e-12


def test_reorganisation_never_loses_the_best():
    rng = np.random.default_rng(11)
    for trial in range(10):
        plans = random_plans(rng, 5, 3, 8)
        plain = run_epos(plans, lam=0.0, reorganizations=0, seed=trial)
        reorg = run_epos(plans, lam=0.0, reorganizations=4, seed=trial)
        assert reorg.final.global_cost <= plain.final.global_cost + 1e-15


def test_parameter_errors():
    plans = {0: [P([0.1, 0.2], 0)]}
    for lam in (-0.1, 1.5):
        with pytest.raises(EposError):
            run_epos(plans, lam=lam)
    with pytest.raises(EposError):
        run_epos({})
    with pytest.raises(EposError):
        run_epos({0: []})
    with pytest.raises(EposError):
        run_epos(plans, init="random")


def test_cheapest_initialisation_option():
    rng = np.random.default_rng(2)
    plans = random_plans(rng, 7, 4, 6)
    res = run_epos(plans, lam=0.0, iterations=0, init="cheapest", reorganizations=0)
    for a, plist in plans.items():
        assert res.selections[a] == int(np.argmin([p.cost for p in plist]))
