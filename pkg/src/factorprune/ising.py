"""Synthetic binary-image denoising on a grid Ising model.

Model: ``p(y | x) ∝ exp(sum_{(i,j) in E} w [y_i = y_j] + alpha sum_i x_i y_i)``
over a 4-connected grid. The unary factors form the seed; every edge is a
candidate. ``run_sweep`` calibrates a scheme parameter at one confidence
level and then tracks size, error and speed over a range of ``alpha``.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .bp import BpConfig, MarginalEstimate, run_bp
from .divergence import score_candidates
from .graph import Factor, FactorGraph, Feature
from .pruning import (MinDivergence, MinJoint, MinSize, Scheme, ignorant_inference, infer,
                      make_scheme, select)

__all__ = [
    "PATTERNS",
    "IsingConfig",
    "NoisyImage",
    "ExperimentRecord",
    "clean_pattern",
    "generate_instance",
    "build_ising_graph",
    "marginal_error",
    "posterior_decode",
    "pixel_accuracy",
    "calibrate",
    "run_instance",
    "run_sweep",
]

logger = logging.getLogger(__name__)

PATTERNS = ("halves", "square", "stripes")
_EQUALITY = (1, 0, 0, 1)


@dataclass(frozen=True)
class IsingConfig:
    grid_side: int = 32
    alpha: float = 5.0
    edge_weight: float = 1.0
    noise_sigma: float = 1.0
    pattern: str = "square"
    rng_seed: int = 42
    instances: int = 10

    def __post_init__(self):
        if self.grid_side < 2:
            raise ValueError("grid_side must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.pattern not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}")
        if self.instances < 1:
            raise ValueError("instances must be >= 1")


@dataclass(frozen=True)
class NoisyImage:
    clean: np.ndarray
    observed: np.ndarray


@dataclass
class ExperimentRecord:
    alpha: float
    scheme: str
    param: float
    n_candidates: int
    n_added: float
    size_fraction: float
    seed_time: float
    score_time: float
    final_time: float
    full_time: float
    speedup: float
    max_marg_err: float
    mean_marg_err: float
    pixel_acc_pruned: float
    pixel_acc_full: float
    predicted_d1: float
    converged_pruned: bool
    converged_full: bool

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def clean_pattern(pattern: str, side: int) -> np.ndarray:
    img = np.zeros((side, side), dtype=int)
    if pattern == "halves":
        img[:, side // 2:] = 1
    elif pattern == "square":
        lo = side // 4
        hi = lo + max(1, side // 2)
        img[lo:hi, lo:hi] = 1
    elif pattern == "stripes":
        width = max(1, side // 8)
        img[:, :] = (np.arange(side) // width) % 2
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    return img


def generate_instance(config: IsingConfig, instance_index: int) -> NoisyImage:
    """Pattern image with Gaussian noise on the +-1 encoding, mean-centred."""
    rng = np.random.default_rng([config.rng_seed, instance_index])
    clean = clean_pattern(config.pattern, config.grid_side)
    x = (2.0 * clean - 1.0) + config.noise_sigma * rng.standard_normal(clean.shape)
    return NoisyImage(clean, x - x.mean())


def build_ising_graph(image, alpha: float, w: float = 1.0) -> FactorGraph:
    """Unary factor ``alpha * x_i`` on each pixel (the seed), equality factor on each edge.

    Pixel (r, c) is variable ``r * cols + c``; unary factors come first, then
    edges in row-major order (right neighbour, then down neighbour).
    """
    x = np.asarray(image.observed if isinstance(image, NoisyImage) else image, dtype=float)
    if x.ndim != 2 or x.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    rows, cols = x.shape
    factors = []
    for v, xv in enumerate(x.ravel()):
        factors.append(Factor(v, alpha * xv, Feature((v,), (0, 1))))
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            for u in ((v + 1) if c + 1 < cols else None, (v + cols) if r + 1 < rows else None):
                if u is None:
                    continue
                factors.append(Factor(len(factors), w, Feature((v, u), _EQUALITY)))
    return FactorGraph(rows * cols, tuple(factors), frozenset(range(rows * cols)))


def marginal_error(pruned: MarginalEstimate, reference: MarginalEstimate) -> tuple[float, float]:
    a = np.asarray(pruned.var_beliefs, dtype=float)
    b = np.asarray(reference.var_beliefs, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"variable count mismatch: {a.shape} vs {b.shape}")
    if not a.size:
        return 0.0, 0.0
    err = np.abs(a - b)
    return float(err.max()), float(err.mean())


def posterior_decode(estimate, shape=None) -> np.ndarray:
    """1 where the belief is >= 0.5 (ties decode to 1)."""
    b = np.asarray(getattr(estimate, "var_beliefs", estimate), dtype=float)
    y = (b >= 0.5).astype(int)
    return y.reshape(shape) if shape is not None else y


def pixel_accuracy(decoded, clean) -> float:
    decoded = np.asarray(decoded)
    clean = np.asarray(clean)
    if decoded.size != clean.size:
        raise ValueError("decoded and clean images differ in size")
    return float(np.mean(decoded.ravel() == clean.ravel()))


# -- calibration --------------------------------------------------------------


def _bisect(frac_of, lo: float, hi: float, target: float, tol: float, max_steps: int = 200):
    """Find p in [lo, hi] with |frac_of(p) - target| <= tol; frac_of is non-increasing."""
    best = None
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        f = frac_of(mid)
        if best is None or abs(f - target) < abs(best[1] - target):
            best = (mid, f)
        if abs(f - target) <= tol:
            return mid, f, True
        if f > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    return best[0], best[1], False


def calibrate(graphs: Sequence[FactorGraph], scheme: str, target_fraction: float,
              engine: str = "bp", bp_config: BpConfig | None = None, tol: float = 0.02) -> Scheme:
    """Choose the scheme parameter giving mean size fraction ~ ``target_fraction``.

    Bisection on epsilon / gamma over the seed gains of ``graphs``. The budget
    of MinDivergence is set exactly from the target count. A miss beyond ``tol``
    is logged and the closest parameter found is returned.
    """
    if not 0.0 <= target_fraction <= 1.0:
        raise ValueError("target_fraction must lie in [0, 1]")
    tables = [score_candidates(g, infer(g, g.seed, engine, bp_config)) for g in graphs]
    seed_sizes = [len(g.seed) for g in graphs]
    if scheme == "min-div":
        n_cand = max(len(t) for t in tables)
        return MinDivergence(max(seed_sizes) + int(round(target_fraction * n_cand)))

    def frac_of(p):
        sch = MinJoint(p) if scheme == "min-joint" else MinSize(p)
        fr = [len(select(t, sch, s).selected) / len(t) if len(t) else 1.0
              for t, s in zip(tables, seed_sizes)]
        return float(np.mean(fr))

    if scheme == "min-joint":
        hi = max((float(t.gains.max()) for t in tables if len(t)), default=0.0)
        hi = hi * (1 + 1e-9) + 1e-300
    elif scheme == "min-size":
        hi = max(t.total() for t in tables) * (1 + 1e-9) + 1e-300
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    p, f, ok = _bisect(frac_of, 0.0, hi, target_fraction, tol)
    if not ok:
        logger.warning("calibration of %s missed target %.3f: best fraction %.4f at %g",
                       scheme, target_fraction, f, p)
    return MinJoint(p) if scheme == "min-joint" else MinSize(p)


# -- sweep -----------------------------------------------------------------------


def run_instance(config: IsingConfig, instance_index: int, alpha: float, scheme: Scheme,
                 bp_config: BpConfig | None = None, engine: str = "bp") -> ExperimentRecord:
    """One (instance, alpha) row: pruned inference against full-graph inference."""
    img = generate_instance(config, instance_index)
    graph = build_ising_graph(img, alpha, config.edge_weight)
    graph.arity_groups  # build cached arrays outside the timed region
    t0 = time.perf_counter()
    full = infer(graph, graph.factor_ids, engine, bp_config)
    full_time = time.perf_counter() - t0
    res = ignorant_inference(graph, scheme, bp_config, engine)
    max_err, mean_err = marginal_error(res.final_estimate, full)
    n_cand = len(res.selection.gains_used)
    return ExperimentRecord(
        alpha=float(alpha),
        scheme=scheme.name,
        param=float(scheme.param),
        n_candidates=n_cand,
        n_added=len(res.selection.selected),
        size_fraction=res.size_fraction,
        seed_time=res.timings["seed"],
        score_time=res.timings["score"],
        final_time=res.timings["final"],
        full_time=full_time,
        speedup=full_time / max(res.total_time, 1e-12),
        max_marg_err=max_err,
        mean_marg_err=mean_err,
        pixel_acc_pruned=pixel_accuracy(posterior_decode(res.final_estimate), img.clean),
        pixel_acc_full=pixel_accuracy(posterior_decode(full), img.clean),
        predicted_d1=res.selection.predicted_d1,
        converged_pruned=bool(res.final_estimate.converged),
        converged_full=bool(full.converged),
    )


def aggregate(records: Sequence[ExperimentRecord]) -> ExperimentRecord:
    """Average over instances; speedup is the ratio of mean times, flags are all()."""
    first = records[0]
    mean = {k: float(np.mean([getattr(r, k) for r in records]))
            for k in ("n_added", "size_fraction", "seed_time", "score_time", "final_time",
                      "full_time", "max_marg_err", "mean_marg_err", "pixel_acc_pruned",
                      "pixel_acc_full", "predicted_d1")}
    pruned_time = mean["seed_time"] + mean["score_time"] + mean["final_time"]
    return ExperimentRecord(
        alpha=first.alpha,
        scheme=first.scheme,
        param=first.param,
        n_candidates=first.n_candidates,
        speedup=mean["full_time"] / max(pruned_time, 1e-12),
        converged_pruned=all(r.converged_pruned for r in records),
        converged_full=all(r.converged_full for r in records),
        **mean,
    )


def _instance_job(args):
    return run_instance(*args)


def run_sweep(config: IsingConfig, alphas: Sequence[float], scheme: str,
              calibration: tuple[float, float] = (5.0, 0.5), bp_config: BpConfig | None = None,
              engine: str = "bp", jobs: int = 1, param: float | None = None) -> list[ExperimentRecord]:
    """Calibrate at ``calibration = (alpha, target_fraction)``, then sweep ``alphas``.

    Pass ``param`` to skip calibration and use a fixed scheme parameter.
    Records are averaged over ``config.instances`` and ordered like ``alphas``.
    """
    at_alpha, target = calibration
    if param is None:
        graphs = [build_ising_graph(generate_instance(config, k), at_alpha, config.edge_weight)
                  for k in range(config.instances)]
        sch = calibrate(graphs, scheme, target, engine, bp_config)
    else:
        sch = make_scheme(scheme, param)
    logger.info("%s parameter: %g", scheme, sch.param)

    out = []
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for a in alphas:
            args = [(config, k, a, sch, bp_config, engine) for k in range(config.instances)]
            recs = list(pool.map(_instance_job, args)) if pool else [_instance_job(x) for x in args]
            out.append(aggregate(recs))
    finally:
        if pool:
            pool.shutdown()
    return out


def records_as_rows(records: Sequence[ExperimentRecord]) -> list[dict]:
    return [asdict(r) for r in records]
