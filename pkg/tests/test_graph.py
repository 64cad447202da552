import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from factorprune.exact import exact_moments
from factorprune.graph import (Factor, FactorGraph, Feature, GraphFormatError, feature_value,
                               log_potential, parse_graph, serialize_graph, unnormalized_log_score)
from factorprune.random_graphs import random_graph

EQ = (1, 0, 0, 1)


@pytest.fixture
def pair_graph():
    return FactorGraph.from_factors(2, [(0.7, (0,), (0, 1)), (-1.2, (0, 1), EQ)])


def test_feature_value_identity_and_equality(pair_graph):
    assert feature_value(pair_graph, 0, (1, 0)) == 1
    assert feature_value(pair_graph, 1, (0, 1)) == 0
    assert feature_value(pair_graph, 1, (1, 1)) == 1


def test_log_potential(pair_graph):
    assert log_potential(pair_graph, 0, (1, 0)) == 0.7
    assert log_potential(pair_graph, 0, (0, 0)) == 0.0
    assert log_potential(pair_graph, 1, (1, 1)) == -1.2


def test_unnormalized_log_score():
    g = FactorGraph.from_factors(1, [(1.0, (0,), (0, 1)), (2.0, (0,), (0, 1))])
    assert unnormalized_log_score(g, [], (1,)) == 0.0
    assert unnormalized_log_score(g, [0], (1,)) == 1.0
    assert unnormalized_log_score(g, [0, 1], (1,)) == 3.0


def test_table_index_least_significant_first():
    # table "0100": index 1 = (y_a=1, y_b=0)
    g = FactorGraph.from_factors(3, [(1.0, (2, 0), (0, 1, 0, 0))])
    assert feature_value(g, 0, (0, 0, 1)) == 1
    assert feature_value(g, 0, (1, 0, 0)) == 0


def test_default_seed_is_unary_set():
    g = FactorGraph.from_factors(2, [(1.0, (0, 1), EQ), (0.5, (1,), (0, 1))])
    assert g.seed == frozenset({1})
    assert g.candidates == frozenset({0})


def test_feature_validation():
    with pytest.raises(ValueError):
        Feature((0, 1), (1, 0, 1))
    with pytest.raises(ValueError):
        Feature((0, 0), EQ)
    with pytest.raises(ValueError):
        Feature((0,), (0, 2))
    with pytest.raises(ValueError):
        Factor(0, math.inf, Feature((0,), (0, 1)))


def test_parse_minimal():
    g = parse_graph("fgv1\nvars 1\nfactor 0.5 1 0 01\nseed list 0\n")
    assert g.num_vars == 1 and g.num_factors == 1
    assert g.seed == frozenset({0})
    assert g.factors[0].weight == 0.5


def test_parse_comments_and_blank_lines():
    text = "# header\nfgv1\n\nvars 2  # two\nfactor 1 2 0 1 1001\n\n"
    g = parse_graph(text)
    assert g.num_factors == 1 and g.seed == frozenset()


@pytest.mark.parametrize("text, line", [
    ("fgv2\nvars 1\nfactor 1 1 0 01\n", 1),
    ("fgv1\nvars 2\nfactor 1 2 0 1 100\n", 3),
    ("fgv1\nvars 2\nfactor 1 1 0 01\nfactor 1 1 2 01\n", 4),
    ("fgv1\nvars 1\nfactor 1 1 0 01\nseed list 0 0\n", 4),
    ("fgv1\nvars 1\nfactor 1 1 0 01\nseed unary\nfactor 1 1 0 01\n", 5),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(GraphFormatError) as info:
        parse_graph(text)
    assert info.value.lineno == line
    assert f"line {line}" in str(info.value)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 12))
def test_round_trip(seed, n, m):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, m)
    g = g.with_seed(frozenset(rng.choice(m, size=int(rng.integers(0, m + 1)), replace=False).tolist()))
    assert parse_graph(serialize_graph(g)) == g


def test_score_additive_over_partition():
    rng = np.random.default_rng(3)
    g = random_graph(rng, 5, 10)
    part = frozenset(range(0, 10, 3))
    for _ in range(20):
        y = tuple(int(b) for b in rng.integers(0, 2, 5))
        total = unnormalized_log_score(g, g.factor_ids, y)
        split = unnormalized_log_score(g, part, y) + unnormalized_log_score(g, g.factor_ids - part, y)
        assert total == pytest.approx(split, abs=1e-12)


def test_potential_values_exact():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 4, 8)
    for f in g.factors:
        for a in range(16):
            y = tuple((a >> v) & 1 for v in range(4))
            assert math.exp(log_potential(g, f.id, y)) in (1.0, math.exp(f.weight))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normalization_preserves_distribution(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 5, 9)
    ng = g.normalized()
    assert all(f.weight >= 0 for f in ng.factors)
    a = exact_moments(g, g.factor_ids)
    b = exact_moments(ng, ng.factor_ids)
    np.testing.assert_allclose(a.var_marginals, b.var_marginals, atol=1e-12)
    # score shift is a constant in y
    shifts = set()
    for s in range(32):
        y = tuple((s >> v) & 1 for v in range(5))
        shifts.add(round(unnormalized_log_score(g, g.factor_ids, y)
                         - unnormalized_log_score(ng, ng.factor_ids, y), 9))
    assert len(shifts) == 1


def test_check_subset_rejects_unknown_ids(pair_graph):
    with pytest.raises(ValueError):
        pair_graph.check_subset([0, 5])
