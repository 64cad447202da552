"""scikit-learn style wrappers around pruned inference.

``IgnorantInference`` runs seed -> score -> select -> infer on a factor graph.
``IsingDenoiser`` does the same for noisy images on a grid, calibrating the
scheme parameter on the training images when none is given.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bp import BpConfig
from .exact import DEFAULT_MAX_VARS
from .ising import build_ising_graph, calibrate, pixel_accuracy
from .pruning import ignorant_inference, make_scheme
from .validation import check_fraction, check_graph, check_images

__all__ = ["IgnorantInference", "IsingDenoiser"]

_ENGINES = ("bp", "exact")


def _check_common(est) -> None:
    if est.engine not in _ENGINES:
        raise ValueError(f"engine must be one of {_ENGINES}, got {est.engine!r}")
    make_scheme(est.scheme, 0)  # rejects unknown scheme names


class IgnorantInference(BaseEstimator):
    """Marginals of a factor graph from inference on a pruned subgraph.

    Parameters
    ----------
    scheme : {"min-size", "min-div", "min-joint"}
    param : float or int
        epsilon, budget (counts seed factors) or gamma, depending on ``scheme``.
    engine : {"bp", "exact"}
    max_iters, tol, damping : BP settings.
    max_vars : enumeration cap for the exact engine.

    Attributes
    ----------
    result_ : PrunedInferenceResult
    selection_ : frozenset of added candidate ids
    marginals_ : ndarray of P(y_v = 1)
    """

    def __init__(self, scheme="min-joint", param=0.0, engine="bp", max_iters=50, tol=1e-6,
                 damping=0.0, max_vars=DEFAULT_MAX_VARS):
        self.scheme = scheme
        self.param = param
        self.engine = engine
        self.max_iters = max_iters
        self.tol = tol
        self.damping = damping
        self.max_vars = max_vars

    def _bp_config(self) -> BpConfig:
        return BpConfig(max_iters=self.max_iters, tol=self.tol, damping=self.damping)

    def fit(self, graph, y=None):
        graph = check_graph(graph)
        _check_common(self)
        scheme = make_scheme(self.scheme, self.param)
        self.result_ = ignorant_inference(graph, scheme, self._bp_config(), self.engine, self.max_vars)
        self.graph_ = graph
        self.selection_ = self.result_.selection.selected
        self.marginals_ = self.result_.final_estimate.var_beliefs
        return self

    def _marginals(self, graph):
        check_is_fitted(self, "result_")
        if graph is None or graph is self.graph_:
            return self.marginals_
        return ignorant_inference(check_graph(graph), make_scheme(self.scheme, self.param),
                                  self._bp_config(), self.engine, self.max_vars).final_estimate.var_beliefs

    def predict_proba(self, graph=None) -> np.ndarray:
        """(num_vars, 2) array of [P(y=0), P(y=1)]; defaults to the fitted graph."""
        p1 = self._marginals(graph)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, graph=None) -> np.ndarray:
        """Posterior decode: 1 where P(y=1) >= 0.5."""
        return (self._marginals(graph) >= 0.5).astype(int)


class IsingDenoiser(TransformerMixin, BaseEstimator):
    """Denoise binary images with pruned inference on a grid Ising model.

    ``fit`` calibrates the scheme parameter at ``alpha`` so that the mean
    size fraction over the training images is ``target_fraction``, unless
    ``param`` is given. ``transform`` / ``predict_proba`` return pixel
    beliefs, ``predict`` the decoded images.
    """

    def __init__(self, alpha=5.0, edge_weight=1.0, scheme="min-joint", param=None,
                 target_fraction=0.5, engine="bp", max_iters=50, tol=1e-6, damping=0.0):
        self.alpha = alpha
        self.edge_weight = edge_weight
        self.scheme = scheme
        self.param = param
        self.target_fraction = target_fraction
        self.engine = engine
        self.max_iters = max_iters
        self.tol = tol
        self.damping = damping

    def _bp_config(self) -> BpConfig:
        return BpConfig(max_iters=self.max_iters, tol=self.tol, damping=self.damping)

    def fit(self, X, y=None):
        X = check_images(X)
        _check_common(self)
        if self.param is None:
            check_fraction(self.target_fraction, "target_fraction")
            graphs = [build_ising_graph(x, self.alpha, self.edge_weight) for x in X]
            self.scheme_ = calibrate(graphs, self.scheme, self.target_fraction, self.engine, self._bp_config())
        else:
            self.scheme_ = make_scheme(self.scheme, self.param)
        self.param_ = self.scheme_.param
        self.image_shape_ = X.shape[1:]
        return self

    def _run(self, X):
        check_is_fitted(self, "scheme_")
        X = check_images(X)
        if X.shape[1:] != self.image_shape_:
            raise ValueError(f"images have shape {X.shape[1:]}, fitted on {self.image_shape_}")
        results = [ignorant_inference(build_ising_graph(x, self.alpha, self.edge_weight), self.scheme_,
                                      self._bp_config(), self.engine) for x in X]
        self.last_results_ = results
        return np.stack([r.final_estimate.var_beliefs.reshape(self.image_shape_) for r in results])

    def predict_proba(self, X) -> np.ndarray:
        """Pixel beliefs P(y=1), shape (n, rows, cols)."""
        return self._run(X)

    def transform(self, X) -> np.ndarray:
        return self._run(X)

    def predict(self, X) -> np.ndarray:
        return (self._run(X) >= 0.5).astype(int)

    def score(self, X, y) -> float:
        """Mean pixel accuracy of the decoded images against clean images ``y``."""
        pred = self.predict(X)
        y = np.asarray(y)
        if y.ndim == 2:
            y = y[None]
        return float(np.mean([pixel_accuracy(p, c) for p, c in zip(pred, y)]))
