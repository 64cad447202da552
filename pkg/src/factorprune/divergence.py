"""KL divergence between a pruned model and the full model.

The pruned model ``H = G | N`` is grown from a seed ``G`` by adding new
factors ``N``; ``R = F \\ H`` are the factors left out.  The factorised proxy
divergence ``D1`` sums isolated per-factor gains computed from seed means.
``decompose`` measures, by enumeration, the two correlation terms that make
``D1`` exact, and ``prop2_bound`` gives the tightest first-moment upper bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .bp import MarginalEstimate, candidate_mus
from .exact import DEFAULT_MAX_VARS, Enumerator, ExactMoments, exact_kl
from .graph import FactorGraph

__all__ = [
    "GainTable",
    "DecompositionReport",
    "BoundReport",
    "gain",
    "gains",
    "log_expect_factor",
    "score_candidates",
    "d1",
    "decompose",
    "prop2_bound",
    "nested_witness",
    "witness_divergence",
    "graph_bound",
]


class GainTable:
    """Gain of each candidate factor, held as parallel arrays sorted by id."""

    def __init__(self, ids, values, source_mu=None):
        ids = np.asarray(ids, dtype=np.intp).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        if ids.shape != values.shape:
            raise ValueError("ids and gains differ in length")
        if len(ids) > 1 and not np.all(ids[1:] > ids[:-1]):
            order = np.argsort(ids, kind="stable")
            ids, values = ids[order], values[order]
            if np.any(np.diff(ids) == 0):
                raise ValueError("duplicate candidate id")
        self.ids = ids
        self.gains = values
        if np.any(self.gains < 0) or np.any(np.isnan(self.gains)):
            raise ValueError("gains must be non-negative")
        self.source_mu = source_mu
        self._entries = None

    @classmethod
    def from_dict(cls, entries: dict, source_mu=None) -> "GainTable":
        return cls(list(entries.keys()), list(entries.values()), source_mu)

    @property
    def entries(self) -> dict:
        if self._entries is None:
            self._entries = dict(zip(self.ids.tolist(), self.gains.tolist()))
        return self._entries

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, factor_id):
        return self.entries[factor_id]

    def mask_of(self, selected) -> np.ndarray:
        """Boolean mask over ``ids`` for a set of selected candidate ids."""
        sel = np.fromiter(selected, dtype=np.intp, count=len(selected))
        mask = np.isin(self.ids, sel)
        if mask.sum() != len(sel):
            stray = np.setdiff1d(sel, self.ids)
            raise ValueError(f"selected ids {stray[:5].tolist()} are not candidates")
        return mask

    def total(self) -> float:
        return math.fsum(self.gains.tolist())


@dataclass(frozen=True)
class DecompositionReport:
    per_factor_sum: float
    s_term: float
    i_term: float
    exact_kl: float
    alpha: float
    beta: float
    eta: float

    @property
    def residual(self) -> float:
        return self.per_factor_sum + self.s_term + self.i_term - self.exact_kl


@dataclass(frozen=True)
class BoundReport:
    loose: float
    tight: float
    sorted_means: tuple
    L: int

    @property
    def correction(self) -> float:
        """Non-negative amount by which ``tight`` improves on ``loose``."""
        return self.loose - self.tight


def log_expect_factor(mu, theta):
    """log(1 - mu + mu * e^theta), stable for large |theta|."""
    mu = np.asarray(mu, dtype=float)
    theta = np.asarray(theta, dtype=float)
    pos = theta > 0
    with np.errstate(divide="ignore"):
        # theta > 0: theta + log(mu + (1 - mu) e^-theta)
        a = theta + np.log(mu + (1.0 - mu) * np.exp(-np.abs(theta)))
        b = np.log1p(mu * np.expm1(-np.abs(theta)))
    return np.where(pos, a, b)


def gains(mu, theta) -> np.ndarray:
    """Vectorised gain: D(p_G || p_{G+i}) from the seed mean and weight."""
    mu = np.asarray(mu, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any((mu < -1e-12) | (mu > 1 + 1e-12)) or np.any(np.isnan(mu)):
        raise ValueError("mean must lie in [0, 1]")
    mu = np.clip(mu, 0.0, 1.0)
    g = log_expect_factor(mu, theta) - mu * theta
    # Jensen makes the true value >= 0; clip round-off
    return np.maximum(g, 0.0)


def gain(mu: float, theta: float) -> float:
    """Divergence added by one factor to a model where its feature has mean ``mu``.

    >>> round(gain(0.5, math.log(2)), 5)
    0.05889
    """
    return float(gains(mu, theta))


def score_candidates(graph: FactorGraph, seed_estimate) -> GainTable:
    """Gain of every candidate factor (``F \\ G``) from seed means.

    ``seed_estimate`` is a MarginalEstimate over the seed (candidate means
    from independent node beliefs) or ExactMoments of the seed (exact
    candidate means).
    """
    cands = graph.candidate_array
    if isinstance(seed_estimate, ExactMoments):
        mu = np.array([seed_estimate.mu[i] for i in cands.tolist()], dtype=float)
    elif isinstance(seed_estimate, MarginalEstimate):
        mu = candidate_mus(graph, seed_estimate, cands)
    else:
        raise TypeError("seed_estimate must be a MarginalEstimate or ExactMoments")
    g = gains(mu, graph.thetas[cands])
    return GainTable(cands, g, seed_estimate)


def d1(gain_table: GainTable, selected: Iterable[int]) -> float:
    """Factorised proxy divergence: sum of gains of the excluded candidates."""
    mask = gain_table.mask_of(frozenset(selected))
    return float(np.sum(gain_table.gains[~mask]))


def decompose(graph: FactorGraph, seed: Iterable[int], pruned: Iterable[int],
              max_vars: int = DEFAULT_MAX_VARS) -> DecompositionReport:
    """Exact split of D(p_H || p_F) into the D1 sum and two correlation terms.

    With N = H \\ G and R = F \\ H, under p_G:

    * ``s_term = log(Cov(Psi_N, Psi_R) / (E[Psi_N] E[Psi_R]) + 1) - Cov(log Psi_R, Psi_N) / E[Psi_N]``
    * ``i_term = log(E[Psi_R] / prod_i E[Psi_i])``

    All Psi-expectations are taken in log space.
    """
    g = graph.check_subset(seed)
    h = graph.check_subset(pruned)
    if not g <= h:
        raise ValueError("seed must be a subset of the pruned graph")
    new = h - g
    rest = graph.factor_ids - h
    en = Enumerator(graph, max_vars)
    logp_g, _ = en.log_prob(g)

    log_en = en.log_expect_psi(logp_g, new)
    log_er = en.log_expect_psi(logp_g, rest)
    log_enr = en.log_expect_psi(logp_g, new | rest)
    if not np.isfinite(log_en):
        raise ArithmeticError("E_G[Psi_N] is not positive and finite")

    p_g = np.exp(logp_g)
    s_r = en.score(rest)
    mu_g = {i: float(p_g @ en.phi(i)) for i in rest}
    thetas = graph.thetas
    log_ei = {i: float(log_expect_factor(mu_g[i], thetas[i])) for i in rest}
    per_factor = math.fsum(float(gains(mu_g[i], thetas[i])) for i in rest)

    # Cov(log Psi_R, Psi_N) / E[Psi_N] = E_{G|N}[log Psi_R] - E_G[log Psi_R]
    p_h = np.exp(logp_g + en.score(new) - log_en)
    cov_ratio = float(p_h @ s_r - p_g @ s_r)
    log_alpha = log_enr - log_en - log_er
    s_term = log_alpha - cov_ratio
    log_eta = log_er - math.fsum(log_ei.values())

    kl = exact_kl(graph, h, graph.factor_ids, enum=en)

    return DecompositionReport(
        per_factor_sum=per_factor,
        s_term=s_term,
        i_term=log_eta,
        exact_kl=kl,
        alpha=math.exp(log_alpha),
        beta=cov_ratio * math.exp(log_en),
        eta=math.exp(log_eta),
    )


def _normalize_signs(means, thetas):
    means = np.asarray(means, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if means.shape != thetas.shape or means.ndim != 1:
        raise ValueError("means and thetas must be 1-D sequences of equal length")
    if np.any((means < 0) | (means > 1)) or np.any(np.isnan(means)):
        raise ValueError("means must lie in [0, 1]")
    neg = thetas < 0
    return np.where(neg, 1.0 - means, means), np.abs(thetas), neg


def prop2_bound(means: Sequence[float], thetas: Sequence[float]) -> BoundReport:
    """Upper bound on D(p_H || p_F) given only the H-means of the left-out factors.

    ``loose = ||theta||_1 - <mu, theta>``; ``tight`` adds
    ``log sum_j (mu'_{j+1} - mu'_j) exp(-sum_{k<=j} theta_k)`` (a value <= 0)
    over means sorted ascending with ``mu'_0 = 0`` and ``mu'_{L+1} = 1``.
    Negative weights are first flipped onto the complementary feature.
    """
    mu, th, _ = _normalize_signs(means, thetas)
    L = len(mu)
    loose = float(th.sum() - mu @ th)
    if L == 0:
        return BoundReport(0.0, 0.0, (), 0)
    order = np.lexsort((np.arange(L), mu))
    ms, ts = mu[order], th[order]
    steps = np.diff(np.concatenate(([0.0], ms, [1.0])))
    cum = np.concatenate(([0.0], np.cumsum(ts)))
    pos = steps > 0
    log_term = min(float(logsumexp(np.log(steps[pos]) - cum[pos])), 0.0)
    tight = loose + log_term
    # Jensen: tight >= 0; clamp round-off only
    if -1e-12 < tight < 0.0:
        tight = 0.0
    return BoundReport(loose, tight, tuple(ms.tolist()), L)


def nested_witness(means: Sequence[float], thetas: Sequence[float]) -> dict:
    """Joint over feature patterns with the given means that attains ``tight``.

    Features are nested: sorted by ascending mean, pattern j switches on the
    features from position j+1 to L and has probability ``mu'_{j+1} - mu'_j``.
    Returns ``{pattern: probability}`` with patterns indexed like the input
    (for negative weights the complementary feature is nested, so the
    returned bit is the original feature's value).  Zero-mass atoms are omitted.
    """
    mu, _, neg = _normalize_signs(means, thetas)
    L = len(mu)
    order = np.lexsort((np.arange(L), mu))
    ms = mu[order]
    atoms: dict = {}
    prev = 0.0
    for j in range(L + 1):
        nxt = ms[j] if j < L else 1.0
        p = float(nxt - prev)
        prev = nxt
        if p <= 0.0:
            continue
        bits = np.zeros(L, dtype=int)
        bits[order[j:]] = 1
        bits = np.where(neg, 1 - bits, bits)
        atoms[tuple(bits.tolist())] = atoms.get(tuple(bits.tolist()), 0.0) + p
    return atoms


def witness_divergence(atoms: dict, thetas: Sequence[float]) -> float:
    """log E[Psi] - E[log Psi] for a distribution over feature patterns."""
    th = np.asarray(thetas, dtype=float)
    pats = np.array(list(atoms.keys()), dtype=float).reshape(len(atoms), len(th))
    probs = np.array(list(atoms.values()), dtype=float)
    s = pats @ th
    pos = probs > 0
    return float(logsumexp(s[pos] + np.log(probs[pos])) - probs @ s)


def graph_bound(graph: FactorGraph, pruned: Iterable[int], estimate) -> BoundReport:
    """``prop2_bound`` for the factors outside ``pruned``.

    ``estimate`` supplies the means of the left-out factors under p_H:
    ExactMoments (exact) or a MarginalEstimate (independent-belief means).
    """
    h = graph.check_subset(pruned)
    rest = sorted(graph.factor_ids - h)
    if isinstance(estimate, ExactMoments):
        mu = [estimate.mu[i] for i in rest]
    else:
        mu = candidate_mus(graph, estimate, rest).tolist()
    return prop2_bound(mu, graph.thetas[rest])
