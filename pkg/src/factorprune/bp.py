"""Loopy sum-product belief propagation on a subset of a factor graph.

Messages are binary distributions kept normalised in linear space; they are
combined in log space at the variables. Factors of arity one send a constant message (their
normalised potential), so they enter as fixed evidence and only factors of
arity >= 2 take part in the flooding iterations.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .graph import FactorGraph

__all__ = ["BpConfig", "MarginalEstimate", "run_bp", "candidate_mu", "candidate_mus"]


@dataclass(frozen=True)
class BpConfig:
    max_iters: int = 50
    tol: float = 1e-6
    damping: float = 0.0
    schedule: str = "flooding"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.schedule != "flooding":
            raise ValueError("only the flooding schedule is supported")


@dataclass
class MarginalEstimate:
    """Node beliefs P(y_v = 1) and feature means of the inferred factors.

    ``mu_ids`` / ``mu_values`` hold the factor means as parallel arrays;
    ``factor_mu`` is the same data as a dict.
    """

    var_beliefs: np.ndarray
    mu_ids: np.ndarray
    mu_values: np.ndarray
    converged: bool
    iterations: int
    wall_time: float
    subset: frozenset = field(default_factory=frozenset)
    engine: str = "bp"

    @property
    def num_vars(self) -> int:
        return len(self.var_beliefs)

    @property
    def factor_mu(self) -> dict:
        return dict(zip(self.mu_ids.tolist(), self.mu_values.tolist()))


def _bits(k: int) -> np.ndarray:
    """(2**k, k) table of local assignments; bit j of row a is y_{scope[j]}."""
    a = np.arange(2**k)
    return ((a[:, None] >> np.arange(k)[None, :]) & 1).astype(np.intp)


def _normalize_log(m: np.ndarray) -> np.ndarray:
    """Normalise binary log-messages along the last axis."""
    hi = np.maximum(m[..., 0], m[..., 1])
    lse = hi + np.log(np.exp(m[..., 0] - hi) + np.exp(m[..., 1] - hi))
    return m - lse[..., None]


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class _Group:
    """Factors of one arity k >= 2 restricted to the inferred subset.

    The potential is held as a tensor of shape (n, 2, ..., 2) whose axis
    ``k - j`` indexes y_{scope[j]} (C-order reshape of the table index).
    Messages are linear and normalised, shape (n, k, 2).
    """

    def __init__(self, ids, scopes, tables, thetas):
        self.ids = ids
        self.scopes = scopes
        self.tables = tables
        n, self.k = scopes.shape
        logpot = thetas[:, None] * tables
        pot = np.exp(logpot - logpot.max(axis=1, keepdims=True))
        self.pot = pot.reshape((n,) + (2,) * self.k)
        self.msg = np.full((n, self.k, 2), 0.5)
        self.logm = np.log(self.msg)
        axes = _LETTERS[: self.k]
        # axis letter of slot j is axes[k - 1 - j]
        self._slot = [axes[self.k - 1 - j] for j in range(self.k)]
        self._full = "z" + axes
        self._contract = []
        for j in range(self.k):
            others = [l for l in range(self.k) if l != j]
            subs = ",".join("z" + self._slot[l] for l in others)
            self._contract.append((f"{self._full},{subs}->z{self._slot[j]}", others))

    def _incoming(self, log_belief: np.ndarray) -> np.ndarray:
        logq = _normalize_log(log_belief[self.scopes] - self.logm)
        return np.exp(logq)

    def update(self, log_belief: np.ndarray, damping: float) -> None:
        q = self._incoming(log_belief)
        new = np.empty_like(self.msg)
        for j, (expr, others) in enumerate(self._contract):
            new[:, j, :] = np.einsum(expr, self.pot, *(q[:, l, :] for l in others))
        new /= new.sum(axis=2, keepdims=True)
        if damping > 0.0:
            new = (1.0 - damping) * new + damping * self.msg
        self.msg = new
        self.logm = np.log(new)

    def factor_mu(self, log_belief: np.ndarray) -> np.ndarray:
        q = self._incoming(log_belief)
        expr = self._full + "," + ",".join("z" + self._slot[l] for l in range(self.k)) + "->" + self._full
        b = np.einsum(expr, self.pot, *(q[:, l, :] for l in range(self.k))).reshape(len(self.ids), -1)
        b /= b.sum(axis=1, keepdims=True)
        return (b * self.tables).sum(axis=1)


def _accumulate(num_vars: int, evidence: np.ndarray, groups: list[_Group]) -> np.ndarray:
    lb = evidence.copy()
    for g in groups:
        flat = g.scopes.ravel()
        logm = g.logm
        for c in (0, 1):
            lb[:, c] += np.bincount(flat, weights=logm[..., c].ravel(), minlength=num_vars)
    return lb


def _prob_one(log_belief: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(log_belief[:, 0] - log_belief[:, 1]))


def run_bp(graph: FactorGraph, subset: Iterable[int], config: BpConfig | None = None) -> MarginalEstimate:
    """Sum-product BP restricted to the factors in ``subset``.

    Non-convergence is reported through ``converged=False``; the last
    beliefs are returned either way.
    """
    t0 = time.perf_counter()
    config = config or BpConfig()
    subset = graph.check_subset(subset)
    n = graph.num_vars
    mask = np.zeros(graph.num_factors, dtype=bool)
    mask[np.fromiter(subset, dtype=np.intp, count=len(subset))] = True
    thetas = graph.thetas

    evidence = np.zeros((n, 2))
    unary = None
    groups: list[_Group] = []
    for k, (ids, scopes, tables) in graph.arity_groups.items():
        sel = mask[ids]
        if not sel.any():
            continue
        ids, scopes, tables = ids[sel], scopes[sel], tables[sel].astype(float)
        if k == 1:
            # constant unary message: normalised exp(theta * table)
            msg = _normalize_log(thetas[ids][:, None] * tables)
            np.add.at(evidence, scopes[:, 0], msg)
            unary = (ids, scopes[:, 0], tables)
        else:
            groups.append(_Group(ids, scopes, tables, thetas[ids]))

    log_belief = _normalize_log(_accumulate(n, evidence, groups))
    beliefs = _prob_one(log_belief)
    converged, iters = True, 0
    if groups:
        converged = False
        for iters in range(1, config.max_iters + 1):
            for g in groups:
                g.update(log_belief, config.damping)
            log_belief = _normalize_log(_accumulate(n, evidence, groups))
            new_beliefs = _prob_one(log_belief)
            delta = np.max(np.abs(new_beliefs - beliefs)) if n else 0.0
            beliefs = new_beliefs
            if delta < config.tol:
                converged = True
                break

    mu_ids, mu_values = [], []
    if unary is not None:
        ids, vs, tables = unary
        # factor belief of a unary factor is the variable belief itself
        mu_ids.append(ids)
        mu_values.append(tables[:, 0] * (1.0 - beliefs[vs]) + tables[:, 1] * beliefs[vs])
    for g in groups:
        mu_ids.append(g.ids)
        mu_values.append(np.clip(g.factor_mu(log_belief), 0.0, 1.0))

    return MarginalEstimate(
        var_beliefs=np.clip(beliefs, 0.0, 1.0),
        mu_ids=np.concatenate(mu_ids) if mu_ids else np.empty(0, dtype=np.intp),
        mu_values=np.concatenate(mu_values) if mu_values else np.empty(0),
        converged=converged,
        iterations=iters,
        wall_time=time.perf_counter() - t0,
        subset=subset,
        engine="bp",
    )


def candidate_mus(graph: FactorGraph, estimate: MarginalEstimate, factor_ids) -> np.ndarray:
    """Vectorised ``candidate_mu`` over many factors."""
    factor_ids = np.asarray(factor_ids if isinstance(factor_ids, np.ndarray) else list(factor_ids),
                            dtype=np.intp)
    if not (estimate.subset is graph.seed and factor_ids is graph.candidate_array):
        sub = np.fromiter(estimate.subset, dtype=np.intp, count=len(estimate.subset))
        inside = factor_ids[np.isin(factor_ids, sub)]
        if len(inside):
            raise ValueError(f"factors {inside[:5].tolist()} are in the inferred subset")
    out = np.empty(len(factor_ids))
    b = np.asarray(estimate.var_beliefs, dtype=float)
    for pos, scopes, tables in graph.layout(factor_ids):
        p1 = b[scopes]
        # contract the multilinear table one variable at a time, top bit first
        t = tables
        for j in range(scopes.shape[1] - 1, -1, -1):
            half = t.shape[1] // 2
            t = t[:, :half] + (t[:, half:] - t[:, :half]) * p1[:, j, None]
        out[pos] = t[:, 0]
    return np.clip(out, 0.0, 1.0)


def candidate_mu(graph: FactorGraph, estimate: MarginalEstimate, factor_id: int) -> float:
    """mu_i estimate for a factor outside the inferred subset.

    Treats the scope variables as independent with the estimate's node
    beliefs. Exact when the inferred subset is fully factorised.
    """
    return float(candidate_mus(graph, estimate, [factor_id])[0])
