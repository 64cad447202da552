import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from factorprune.bp import run_bp
from factorprune.divergence import GainTable, d1, score_candidates
from factorprune.exact import exact_estimate
from factorprune.ising import build_ising_graph, marginal_error
from factorprune.pruning import (ComparisonCounter, MinDivergence, MinJoint, MinSize, ignorant_inference,
                                 make_scheme, pick_min_divergence, pick_min_joint, pick_min_size, select)
from factorprune.random_graphs import random_graph

A, B, C = 10, 11, 12
ABC = GainTable([A, B, C], [0.1, 0.2, 0.5])

gain_lists = st.lists(st.floats(0, 1, allow_subnormal=False), min_size=0, max_size=10)


def table(values):
    return GainTable(np.arange(len(values)) * 2 + 1, values)


def all_subsets(ids):
    for r in range(len(ids) + 1):
        yield from (frozenset(c) for c in itertools.combinations(ids, r))


def test_min_size_examples():
    assert pick_min_size(ABC, 0.0) == {A, B, C}
    assert pick_min_size(ABC, 0.8) == frozenset()
    assert pick_min_size(ABC, 0.25) == {B, C}


def test_min_divergence_examples():
    assert pick_min_divergence(ABC, 5, 5) == frozenset()
    assert pick_min_divergence(ABC, 9, 5) == {A, B, C}
    assert pick_min_divergence(ABC, 2, 0) == {B, C}
    with pytest.raises(ValueError):
        pick_min_divergence(ABC, 1, 2)


def test_min_joint_examples():
    assert pick_min_joint(ABC, 0.0) == {A, B, C}
    assert pick_min_joint(ABC, 0.6) == frozenset()
    assert pick_min_joint(ABC, 0.2) == {B, C}


def test_ties_break_by_id():
    t = GainTable([4, 1, 7, 2], [0.3, 0.3, 0.3, 0.3])
    assert pick_min_divergence(t, 2, 0) == {1, 2}
    # discarding walks ascending ids among equal gains
    assert pick_min_size(t, 0.6) == {4, 7}


@settings(max_examples=100, deadline=None)
@given(gain_lists, st.floats(0, 3))
def test_min_size_is_minimum_cardinality(values, eps):
    t = table(values)
    got = pick_min_size(t, eps)
    assert d1(t, got) <= eps
    feasible = [s for s in all_subsets(t.ids.tolist()) if d1(t, s) <= eps]
    assert len(got) == min(len(s) for s in feasible)


@settings(max_examples=100, deadline=None)
@given(gain_lists, st.integers(0, 12))
def test_min_divergence_is_minimum_d1_at_its_size(values, m):
    t = table(values)
    got = pick_min_divergence(t, m, 0)
    assert len(got) == min(m, len(t))
    best = min(d1(t, s) for s in all_subsets(t.ids.tolist()) if len(s) == len(got))
    assert d1(t, got) == pytest.approx(best, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(gain_lists, st.floats(0, 1))
def test_min_joint_is_tie_inclusive_minimizer(values, gamma):
    t = table(values)
    got = pick_min_joint(t, gamma)
    objective = lambda s: sum(g - gamma for i, g in t.entries.items() if i not in s)
    scores = {s: objective(s) for s in all_subsets(t.ids.tolist())}
    best = min(scores.values())
    assert objective(got) == pytest.approx(best, abs=1e-12)
    # union of all exact minimizers
    assert got == frozenset().union(*(s for s, v in scores.items() if v == best))


@settings(max_examples=60, deadline=None)
@given(gain_lists, st.floats(0, 2), st.floats(0, 2))
def test_monotonicity(values, p, q):
    t = table(values)
    lo, hi = min(p, q), max(p, q)
    assert len(pick_min_size(t, hi)) <= len(pick_min_size(t, lo))
    assert pick_min_joint(t, hi) <= pick_min_joint(t, lo)
    m1, m2 = int(lo * 5), int(hi * 5)
    assert len(pick_min_divergence(t, m1, 0)) <= len(pick_min_divergence(t, m2, 0))


def test_counter_zero_for_min_joint_and_nlogn_for_sorting():
    rng = np.random.default_rng(0)
    n = 2000
    t = GainTable(np.arange(n), rng.random(n))
    c = ComparisonCounter()
    pick_min_joint(t, 0.5, c)
    assert c.count == 0
    for pick in (lambda c: pick_min_size(t, 10.0, c), lambda c: pick_min_divergence(t, 800, 0, c)):
        c = ComparisonCounter()
        pick(c)
        assert c.count >= 0.5 * n * np.log2(n)


def test_counted_and_fast_paths_agree():
    rng = np.random.default_rng(1)
    t = GainTable(np.arange(300), np.round(rng.random(300), 2))
    assert pick_min_size(t, 5.0) == pick_min_size(t, 5.0, ComparisonCounter())
    assert pick_min_divergence(t, 120, 0) == pick_min_divergence(t, 120, 0, ComparisonCounter())


@pytest.mark.parametrize("scheme", [MinSize(0.3), MinDivergence(10), MinJoint(0.05)])
def test_predicted_d1_self_consistent(scheme):
    g = random_graph(np.random.default_rng(3), 6, 15)
    t = score_candidates(g, run_bp(g, g.seed))
    sel = select(t, scheme, len(g.seed))
    assert sel.predicted_d1 == pytest.approx(d1(t, sel.selected), abs=1e-14)
    assert sel == select(t, scheme, len(g.seed))


def test_make_scheme():
    assert make_scheme("min-div", 7) == MinDivergence(7)
    assert make_scheme("min-joint", "0.1") == MinJoint(0.1)
    with pytest.raises(ValueError):
        make_scheme("min-foo", 1)
    with pytest.raises(ValueError):
        MinSize(-1.0)


def test_threshold_above_all_gains_reuses_seed_estimate():
    g = random_graph(np.random.default_rng(5), 6, 14)
    res = ignorant_inference(g, MinJoint(1e9))
    assert res.selection.selected == frozenset()
    assert res.final_estimate is res.seed_estimate
    assert res.size_fraction == 0.0


def test_zero_epsilon_recovers_full_graph():
    g = random_graph(np.random.default_rng(6), 6, 14, theta_scale=2.0)
    res = ignorant_inference(g, MinSize(0.0))
    assert res.pruned_subset == g.factor_ids
    full = run_bp(g, g.factor_ids)
    np.testing.assert_allclose(res.final_estimate.var_beliefs, full.var_beliefs, atol=1e-12)


def test_pruning_beats_seed_on_small_grid():
    rng = np.random.default_rng(2)
    clean = np.zeros((4, 4))
    clean[1:3, 1:3] = 1
    x = (2 * clean - 1) + rng.standard_normal((4, 4))
    g = build_ising_graph(x - x.mean(), alpha=5.0)
    res = ignorant_inference(g, MinJoint(0.01), engine="exact")
    full = exact_estimate(g, g.factor_ids)
    pruned_err, _ = marginal_error(res.final_estimate, full)
    seed_err, _ = marginal_error(res.seed_estimate, full)
    assert pruned_err < seed_err


def test_empty_seed_rejected():
    g = random_graph(np.random.default_rng(0), 3, 4, unary_first=False).with_seed([])
    with pytest.raises(ValueError):
        ignorant_inference(g, MinJoint(0.1))
