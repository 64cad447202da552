"""Factor selection from seed gains and the seed -> select -> infer driver.

Three selection rules, each over the gain table of the candidates:

* ``MinSize(epsilon)``: fewest added factors with excluded-gain sum <= epsilon.
* ``MinDivergence(budget)``: at most ``budget - |seed|`` factors, highest gains.
* ``MinJoint(gamma)``: every factor with gain >= gamma; a single scan, no sort.

The MinSize walk is phrased as discarding from the low-gain end; picking
from the high-gain end until the remaining sum fits under epsilon yields
the same set.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .bp import BpConfig, MarginalEstimate, run_bp
from .divergence import GainTable, score_candidates
from .exact import DEFAULT_MAX_VARS, exact_estimate
from .graph import FactorGraph

__all__ = [
    "MinSize",
    "MinDivergence",
    "MinJoint",
    "Scheme",
    "ComparisonCounter",
    "PruneSelection",
    "PrunedInferenceResult",
    "pick_min_size",
    "pick_min_divergence",
    "pick_min_joint",
    "select",
    "infer",
    "ignorant_inference",
    "make_scheme",
]


@dataclass(frozen=True)
class MinSize:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")

    name = "min-size"

    @property
    def param(self) -> float:
        return self.epsilon


@dataclass(frozen=True)
class MinDivergence:
    budget: int

    def __post_init__(self):
        if int(self.budget) != self.budget or self.budget < 0:
            raise ValueError("budget must be a non-negative integer")

    name = "min-div"

    @property
    def param(self) -> int:
        return self.budget


@dataclass(frozen=True)
class MinJoint:
    gamma: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")

    name = "min-joint"

    @property
    def param(self) -> float:
        return self.gamma


Scheme = Union[MinSize, MinDivergence, MinJoint]

_SCHEMES = {"min-size": MinSize, "min-div": MinDivergence, "min-joint": MinJoint}


def make_scheme(name: str, param) -> Scheme:
    try:
        cls = _SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; expected one of {sorted(_SCHEMES)}") from None
    return cls(int(param)) if cls is MinDivergence else cls(float(param))


class ComparisonCounter:
    """Counts ordering comparisons between candidates during selection."""

    def __init__(self):
        self.count = 0


class _Counted:
    __slots__ = ("key", "counter")

    def __init__(self, key, counter):
        self.key = key
        self.counter = counter

    def __lt__(self, other):
        self.counter.count += 1
        return self.key < other.key


def _sorted_ids(gains: GainTable, descending: bool, counter: ComparisonCounter | None) -> np.ndarray:
    """Candidate ids by gain (ties: ascending id)."""
    key = -gains.gains if descending else gains.gains
    if counter is None:
        return gains.ids[np.lexsort((gains.ids, key))]
    keyed = sorted(_Counted((k, i), counter) for k, i in zip(key.tolist(), gains.ids.tolist()))
    return np.array([c.key[1] for c in keyed], dtype=np.intp)


def _min_size_mask(gains: GainTable, epsilon: float, counter) -> np.ndarray:
    if not epsilon >= 0:
        raise ValueError("epsilon must be >= 0")
    order = _sorted_ids(gains, descending=False, counter=counter)
    pos = np.searchsorted(gains.ids, order)
    # running discarded sum, accumulated in walk order
    running = np.cumsum(gains.gains[pos])
    cut = int(np.searchsorted(running > epsilon, True))
    mask = np.zeros(len(gains), dtype=bool)
    mask[pos[cut:]] = True
    return mask


def _min_div_mask(gains: GainTable, m: int, seed_size: int, counter) -> np.ndarray:
    if m < seed_size:
        raise ValueError(f"budget {m} is smaller than the seed size {seed_size}")
    order = _sorted_ids(gains, descending=True, counter=counter)
    mask = np.zeros(len(gains), dtype=bool)
    mask[np.searchsorted(gains.ids, order[: m - seed_size])] = True
    return mask


def _min_joint_mask(gains: GainTable, gamma: float) -> np.ndarray:
    if not gamma >= 0:
        raise ValueError("gamma must be >= 0")
    return gains.gains >= gamma


def _as_set(gains: GainTable, mask: np.ndarray) -> frozenset:
    return frozenset(gains.ids[mask].tolist())


def pick_min_size(gains: GainTable, epsilon: float, counter: ComparisonCounter | None = None) -> frozenset:
    """Discard lowest-gain candidates while the discarded sum stays <= epsilon.

    The first candidate whose discard would push the sum past epsilon is kept,
    along with everything above it.
    """
    return _as_set(gains, _min_size_mask(gains, epsilon, counter))


def pick_min_divergence(gains: GainTable, m: int, seed_size: int,
                        counter: ComparisonCounter | None = None) -> frozenset:
    """The ``m - seed_size`` highest-gain candidates (``m`` counts seed factors)."""
    return _as_set(gains, _min_div_mask(gains, m, seed_size, counter))


def pick_min_joint(gains: GainTable, gamma: float, counter: ComparisonCounter | None = None) -> frozenset:
    """All candidates with gain >= gamma.

    Each gain is compared with the threshold only, never with another
    candidate, so ``counter`` stays at zero.
    """
    return _as_set(gains, _min_joint_mask(gains, gamma))


@dataclass(frozen=True)
class PruneSelection:
    selected: frozenset
    predicted_d1: float
    gains_used: GainTable
    scheme: Scheme


def select(gains: GainTable, scheme: Scheme, seed_size: int,
           counter: ComparisonCounter | None = None) -> PruneSelection:
    if isinstance(scheme, MinSize):
        mask = _min_size_mask(gains, scheme.epsilon, counter)
    elif isinstance(scheme, MinDivergence):
        mask = _min_div_mask(gains, scheme.budget, seed_size, counter)
    elif isinstance(scheme, MinJoint):
        mask = _min_joint_mask(gains, scheme.gamma)
    else:
        raise TypeError(f"unknown scheme {scheme!r}")
    return PruneSelection(_as_set(gains, mask), float(np.sum(gains.gains[~mask])), gains, scheme)


@dataclass
class PrunedInferenceResult:
    selection: PruneSelection
    seed_estimate: MarginalEstimate
    final_estimate: MarginalEstimate
    timings: dict = field(default_factory=dict)
    size_fraction: float = 0.0

    @property
    def total_time(self) -> float:
        return self.timings["seed"] + self.timings["score"] + self.timings["final"]

    @property
    def pruned_subset(self) -> frozenset:
        return self.final_estimate.subset


def infer(graph: FactorGraph, subset, engine: str = "bp", bp_config: BpConfig | None = None,
          max_vars: int = DEFAULT_MAX_VARS) -> MarginalEstimate:
    """Black-box marginal inference on ``subset``."""
    if engine == "bp":
        return run_bp(graph, subset, bp_config)
    if engine == "exact":
        return exact_estimate(graph, subset, max_vars)
    raise ValueError(f"unknown engine {engine!r}")


def ignorant_inference(graph: FactorGraph, scheme: Scheme, bp_config: BpConfig | None = None,
                       engine: str = "bp", max_vars: int = DEFAULT_MAX_VARS) -> PrunedInferenceResult:
    """Infer on the seed, score candidates, add the selected ones, infer again.

    The second inference is skipped (the seed estimate is reused) when no
    candidate is selected.
    """
    if not graph.seed:
        raise ValueError("graph has an empty seed; candidate gains need a proxy graph")
    t0 = time.perf_counter()
    seed_est = infer(graph, graph.seed, engine, bp_config, max_vars)
    t1 = time.perf_counter()
    gains = score_candidates(graph, seed_est)
    selection = select(gains, scheme, len(graph.seed))
    t2 = time.perf_counter()
    if selection.selected:
        final = infer(graph, graph.seed | selection.selected, engine, bp_config, max_vars)
    else:
        final = seed_est
    t3 = time.perf_counter()
    n_cand = len(gains)
    return PrunedInferenceResult(
        selection=selection,
        seed_estimate=seed_est,
        final_estimate=final,
        timings={"seed": t1 - t0, "score": t2 - t1, "final": t3 - t2},
        size_fraction=len(selection.selected) / n_cand if n_cand else 1.0,
    )
