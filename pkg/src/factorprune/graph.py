"""Binary Markov networks whose factors are exponentiated binary features.

A factor ``i`` carries a weight ``theta_i`` and a truth table ``phi_i`` over
its scope, so that ``Psi_i(y) = exp(theta_i * phi_i(y))``.  Table index for a
local assignment is ``sum_j y[scope[j]] * 2**j`` (first scope variable is the
least significant bit).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Feature",
    "Factor",
    "FactorGraph",
    "GraphFormatError",
    "feature_value",
    "log_potential",
    "unnormalized_log_score",
    "parse_graph",
    "serialize_graph",
    "read_graph",
    "write_graph",
]

FactorSubset = frozenset  # alias used in annotations: a set of factor ids


class GraphFormatError(ValueError):
    """Malformed ``fgv1`` text; ``lineno`` is 1-based (0 if unknown)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(frozen=True)
class Feature:
    scope: tuple[int, ...]
    table: tuple[int, ...]

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        table = tuple(int(t) for t in self.table)
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "table", table)
        if len(scope) < 1:
            raise ValueError("feature scope must contain at least one variable")
        if len(set(scope)) != len(scope):
            raise ValueError(f"duplicate variable in scope {scope}")
        if any(v < 0 for v in scope):
            raise ValueError(f"negative variable index in scope {scope}")
        if len(table) != 2 ** len(scope):
            raise ValueError(
                f"table length {len(table)} does not match arity {len(scope)} "
                f"(expected {2 ** len(scope)})"
            )
        if any(t not in (0, 1) for t in table):
            raise ValueError("feature table entries must be 0 or 1")

    @property
    def arity(self) -> int:
        return len(self.scope)

    def local_index(self, y: Sequence[int]) -> int:
        return sum(int(y[v]) << j for j, v in enumerate(self.scope))

    def flipped(self) -> "Feature":
        return Feature(self.scope, tuple(1 - t for t in self.table))


@dataclass(frozen=True)
class Factor:
    id: int
    weight: float
    feature: Feature

    def __post_init__(self):
        if int(self.id) < 0:
            raise ValueError("factor id must be non-negative")
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "weight", float(self.weight))
        if not math.isfinite(self.weight):
            raise ValueError(f"factor {self.id}: weight must be finite")

    @property
    def scope(self) -> tuple[int, ...]:
        return self.feature.scope


@dataclass(frozen=True)
class FactorGraph:
    """Immutable factor graph over ``num_vars`` binary variables.

    Factor ids are dense: ``factors[i].id == i``.  ``seed`` defaults to the
    set of all arity-1 factors.
    """

    num_vars: int
    factors: tuple[Factor, ...]
    seed: frozenset = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        n = int(self.num_vars)
        object.__setattr__(self, "num_vars", n)
        if n < 0:
            raise ValueError("num_vars must be non-negative")
        if not self.factors:
            raise ValueError("graph needs at least one factor")
        for pos, f in enumerate(self.factors):
            if f.id != pos:
                raise ValueError(f"factor at position {pos} has id {f.id}; ids must be dense")
            if max(f.scope) >= n:
                raise ValueError(f"factor {f.id} references variable {max(f.scope)} >= {n}")
        if self.seed is None:
            seed = frozenset(f.id for f in self.factors if f.feature.arity == 1)
        else:
            seed = frozenset(int(i) for i in self.seed)
        bad = [i for i in seed if not 0 <= i < len(self.factors)]
        if bad:
            raise ValueError(f"seed contains unknown factor ids {sorted(bad)}")
        object.__setattr__(self, "seed", seed)

    @classmethod
    def from_factors(cls, num_vars: int, rows: Iterable[tuple], seed=None) -> "FactorGraph":
        """Build from ``(weight, scope, table)`` triples, assigning ids in order."""
        factors = tuple(
            Factor(i, w, Feature(tuple(scope), tuple(table)))
            for i, (w, scope, table) in enumerate(rows)
        )
        return cls(num_vars, factors, seed)

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    @cached_property
    def factor_ids(self) -> frozenset:
        return frozenset(range(len(self.factors)))

    @cached_property
    def candidates(self) -> frozenset:
        """Factors outside the seed."""
        return self.factor_ids - self.seed

    @cached_property
    def candidate_array(self) -> np.ndarray:
        """Sorted candidate ids as an array."""
        return np.array(sorted(self.candidates), dtype=np.intp)

    @cached_property
    def thetas(self) -> np.ndarray:
        return np.array([f.weight for f in self.factors], dtype=float)

    @cached_property
    def arities(self) -> np.ndarray:
        return np.array([f.feature.arity for f in self.factors], dtype=int)

    @cached_property
    def arity_groups(self) -> dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """arity -> (factor ids, scopes (n, k), tables (n, 2**k)) as arrays."""
        groups = {}
        for k in np.unique(self.arities):
            ids = np.flatnonzero(self.arities == k)
            scopes = np.array([self.factors[i].scope for i in ids], dtype=np.intp).reshape(len(ids), k)
            tables = np.array([self.factors[i].feature.table for i in ids], dtype=np.int8)
            groups[int(k)] = (ids, scopes, tables.reshape(len(ids), 2**k))
        return groups

    def layout(self, factor_ids: np.ndarray) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Per-arity (positions in ``factor_ids``, scopes, float tables)."""
        if factor_ids is self.candidate_array:
            return self._candidate_layout
        return self._layout(factor_ids)

    @cached_property
    def _candidate_layout(self):
        return self._layout(self.candidate_array)

    def _layout(self, factor_ids):
        arity = self.arities[factor_ids]
        out = []
        for k, (ids, scopes, tables) in self.arity_groups.items():
            pos = np.flatnonzero(arity == k)
            if len(pos):
                row = np.searchsorted(ids, factor_ids[pos])
                out.append((pos, scopes[row], tables[row].astype(float)))
        return out

    def check_subset(self, ids: Iterable[int]) -> frozenset:
        subset = ids if isinstance(ids, frozenset) else frozenset(int(i) for i in ids)
        if subset and (min(subset) < 0 or max(subset) >= len(self.factors)):
            bad = [i for i in subset if not 0 <= i < len(self.factors)]
            raise ValueError(f"unknown factor ids {sorted(bad)}")
        return subset

    def normalized(self) -> "FactorGraph":
        """Equivalent graph with every weight >= 0.

        Negative-weight factors get their table flipped and weight negated:
        ``exp(-t * (1 - phi)) = exp(t * phi) * exp(-t)``, a constant rescaling.
        """
        factors = tuple(
            f if f.weight >= 0 else Factor(f.id, -f.weight, f.feature.flipped())
            for f in self.factors
        )
        return FactorGraph(self.num_vars, factors, self.seed)

    def with_seed(self, seed: Iterable[int]) -> "FactorGraph":
        return FactorGraph(self.num_vars, self.factors, frozenset(seed))


def _check_assignment(graph: FactorGraph, y) -> None:
    if len(y) != graph.num_vars:
        raise ValueError(f"assignment has length {len(y)}, graph has {graph.num_vars} variables")


def _factor(graph: FactorGraph, factor_id: int) -> Factor:
    if not 0 <= factor_id < graph.num_factors:
        raise KeyError(f"unknown factor id {factor_id}")
    return graph.factors[factor_id]


def feature_value(graph: FactorGraph, factor_id: int, y: Sequence[int]) -> int:
    """phi_i(y) for factor ``factor_id``."""
    f = _factor(graph, factor_id)
    _check_assignment(graph, y)
    return f.feature.table[f.feature.local_index(y)]


def log_potential(graph: FactorGraph, factor_id: int, y: Sequence[int]) -> float:
    f = _factor(graph, factor_id)
    return f.weight * feature_value(graph, factor_id, y)


def unnormalized_log_score(graph: FactorGraph, subset: Iterable[int], y: Sequence[int]) -> float:
    """sum over ``subset`` of theta_i * phi_i(y)."""
    subset = graph.check_subset(subset)
    _check_assignment(graph, y)
    return float(sum(log_potential(graph, i, y) for i in sorted(subset)))


# -- fgv1 text format -------------------------------------------------------


def parse_graph(text: str) -> FactorGraph:
    """Parse ``fgv1`` text.  Raises GraphFormatError with the offending line."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((lineno, body.split()))
    if not lines:
        raise GraphFormatError("empty input")

    lineno, toks = lines[0]
    if toks != ["fgv1"]:
        raise GraphFormatError("expected header 'fgv1'", lineno)
    if len(lines) < 2:
        raise GraphFormatError("missing 'vars' line", lineno)
    lineno, toks = lines[1]
    if len(toks) != 2 or toks[0] != "vars":
        raise GraphFormatError("expected 'vars <N>'", lineno)
    try:
        num_vars = int(toks[1])
    except ValueError:
        raise GraphFormatError(f"bad variable count {toks[1]!r}", lineno) from None
    if num_vars < 0:
        raise GraphFormatError("variable count must be non-negative", lineno)

    factors: list[Factor] = []
    seed, seen_seed = None, False
    for lineno, toks in lines[2:]:
        if seen_seed:
            raise GraphFormatError("'seed' must be the final line", lineno)
        if toks[0] == "factor":
            factors.append(_parse_factor(toks, len(factors), num_vars, lineno))
        elif toks[0] == "seed":
            seed, seen_seed = _parse_seed(toks, len(factors), lineno), True
        else:
            raise GraphFormatError(f"unknown directive {toks[0]!r}", lineno)
    if not factors:
        raise GraphFormatError("graph has no factors", lines[-1][0])
    return FactorGraph(num_vars, tuple(factors), seed)


def _parse_factor(toks: list[str], fid: int, num_vars: int, lineno: int) -> Factor:
    try:
        theta = float(toks[1])
        k = int(toks[2])
    except (IndexError, ValueError):
        raise GraphFormatError("expected 'factor <theta> <arity> <vars...> <table>'", lineno) from None
    if not math.isfinite(theta):
        raise GraphFormatError("weight must be finite", lineno)
    if k < 1:
        raise GraphFormatError("arity must be >= 1", lineno)
    if len(toks) != 4 + k:
        raise GraphFormatError(f"expected {k} variables and one table for arity {k}", lineno)
    try:
        scope = tuple(int(v) for v in toks[3 : 3 + k])
    except ValueError:
        raise GraphFormatError("variable indices must be integers", lineno) from None
    for v in scope:
        if not 0 <= v < num_vars:
            raise GraphFormatError(f"variable {v} out of range [0, {num_vars})", lineno)
    if len(set(scope)) != k:
        raise GraphFormatError("duplicate variable in scope", lineno)
    table = toks[-1]
    if len(table) != 2**k:
        raise GraphFormatError(f"table length {len(table)} != 2^{k}", lineno)
    if set(table) - {"0", "1"}:
        raise GraphFormatError("table must consist of 0/1 characters", lineno)
    return Factor(fid, theta, Feature(scope, tuple(int(c) for c in table)))


def _parse_seed(toks: list[str], n_factors: int, lineno: int):
    if toks[1:] == ["unary"]:
        return None
    if len(toks) < 2 or toks[1] != "list":
        raise GraphFormatError("expected 'seed unary' or 'seed list <ids...>'", lineno)
    ids = []
    for t in toks[2:]:
        try:
            i = int(t)
        except ValueError:
            raise GraphFormatError(f"bad seed id {t!r}", lineno) from None
        if not 0 <= i < n_factors:
            raise GraphFormatError(f"seed id {i} is not a factor", lineno)
        if i in ids:
            raise GraphFormatError(f"duplicate seed id {i}", lineno)
        ids.append(i)
    return frozenset(ids)


def serialize_graph(graph: FactorGraph) -> str:
    out = ["fgv1", f"vars {graph.num_vars}"]
    for f in graph.factors:
        scope = " ".join(str(v) for v in f.scope)
        table = "".join(str(t) for t in f.feature.table)
        out.append(f"factor {f.weight!r} {f.feature.arity} {scope} {table}")
    out.append(" ".join(["seed list", *(str(i) for i in sorted(graph.seed))]))
    return "\n".join(out) + "\n"


def read_graph(path) -> FactorGraph:
    with open(path) as fh:
        return parse_graph(fh.read())


def write_graph(graph: FactorGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_graph(graph))
