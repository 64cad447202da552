"""Random factor graphs for property tests and the oracle suites."""
from __future__ import annotations

import numpy as np

from .graph import Factor, FactorGraph, Feature

__all__ = ["random_graph", "random_tree_graph", "random_nested_subsets", "random_table"]


def random_table(rng: np.random.Generator, k: int) -> tuple[int, ...]:
    return tuple(int(t) for t in rng.integers(0, 2, size=2**k))


def random_graph(rng: np.random.Generator, num_vars: int, num_factors: int, theta_scale: float = 3.0,
                 max_arity: int = 3, unary_first: bool = True) -> FactorGraph:
    """Unary factors on every variable (if ``unary_first``) plus random higher-arity factors.

    Weights are uniform on [-theta_scale, theta_scale]; tables are uniform
    random truth tables. The seed is the unary set.
    """
    factors = []
    if unary_first:
        for v in range(num_vars):
            if len(factors) >= num_factors:
                break
            factors.append(Factor(len(factors), float(rng.uniform(-theta_scale, theta_scale)),
                                  Feature((v,), (0, 1))))
    while len(factors) < num_factors:
        k = int(rng.integers(1, min(max_arity, num_vars) + 1))
        scope = tuple(int(v) for v in rng.choice(num_vars, size=k, replace=False))
        factors.append(Factor(len(factors), float(rng.uniform(-theta_scale, theta_scale)),
                              Feature(scope, random_table(rng, k))))
    return FactorGraph(num_vars, tuple(factors))


def random_tree_graph(rng: np.random.Generator, num_vars: int, theta_scale: float = 2.0,
                      extra_unary: int = 0) -> FactorGraph:
    """A random spanning tree of pairwise factors plus unary factors on every variable."""
    factors = [Factor(v, float(rng.uniform(-theta_scale, theta_scale)), Feature((v,), random_table(rng, 1)))
               for v in range(num_vars)]
    for _ in range(extra_unary):
        v = int(rng.integers(num_vars))
        factors.append(Factor(len(factors), float(rng.uniform(-theta_scale, theta_scale)),
                              Feature((v,), random_table(rng, 1))))
    for v in range(1, num_vars):
        u = int(rng.integers(v))
        scope = (u, v) if rng.random() < 0.5 else (v, u)
        factors.append(Factor(len(factors), float(rng.uniform(-theta_scale, theta_scale)),
                              Feature(scope, random_table(rng, 2))))
    return FactorGraph(num_vars, tuple(factors))


def random_nested_subsets(rng: np.random.Generator, graph: FactorGraph) -> tuple[frozenset, frozenset]:
    """Random G ⊂ H ⊂ F: each factor lands in G, H \\ G or F \\ H with equal odds."""
    level = rng.integers(0, 3, size=graph.num_factors)
    g = frozenset(np.flatnonzero(level == 0).tolist())
    h = frozenset(np.flatnonzero(level <= 1).tolist())
    return g, h
