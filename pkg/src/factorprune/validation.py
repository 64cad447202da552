"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

from typing import Iterable

import numpy as np
from sklearn.utils.validation import check_array

from .graph import FactorGraph

__all__ = ["check_graph", "check_images", "check_probabilities", "check_subset_of", "check_fraction"]


def check_graph(graph) -> FactorGraph:
    if not isinstance(graph, FactorGraph):
        raise TypeError(f"expected a FactorGraph, got {type(graph).__name__}")
    return graph


def check_images(X) -> np.ndarray:
    """One image (2-D) or a stack of images (3-D) as a float array of shape (n, rows, cols)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or min(X.shape) == 0:
        raise ValueError(f"expected an image or a stack of images, got shape {X.shape}")
    # finiteness / dtype checks on the flattened view
    check_array(X.reshape(len(X), -1), ensure_all_finite=True)
    return X


def check_probabilities(p, name: str = "probabilities") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return p


def check_subset_of(graph: FactorGraph, ids: Iterable[int], container: Iterable[int] | None = None) -> frozenset:
    subset = graph.check_subset(ids)
    if container is not None and not subset <= frozenset(container):
        raise ValueError("subset is not contained in the enclosing factor set")
    return subset


def check_fraction(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
