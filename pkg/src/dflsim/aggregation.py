"""Aggregation rules over flat parameter vectors.

The functional kernels (:func:`fedavg`, :func:`krum`, :func:`geomed`) are what
the simulator calls. :class:`MeanAggregator`, :class:`KrumAggregator` and
:class:`GeometricMedianAggregator` wrap them as scikit-learn estimators where
each row of ``X`` is one received update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DimensionMismatch, EmptyInput, InvalidParams, TooFewUpdates, WeightMismatch

__all__ = [
    "AggregatorConfig",
    "fedavg",
    "krum_scores",
    "krum_select",
    "krum",
    "geomed",
    "geomed_objective",
    "aggregate",
    "MeanAggregator",
    "KrumAggregator",
    "GeometricMedianAggregator",
]

KINDS = ("fedavg", "krum", "geomed")
DISTANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class AggregatorConfig:
    kind: str = "geomed"
    f_assumed: int = 1
    geomed_weights: Optional[tuple] = None
    geomed_tol: float = 1e-10
    geomed_max_iter: int = 1000
    include_self: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParams(f"aggregator kind must be one of {KINDS}, got {self.kind!r}")
        if self.f_assumed < 0:
            raise InvalidParams("f_assumed must be non-negative")
        if self.geomed_tol <= 0:
            raise InvalidParams("geomed_tol must be positive")
        if self.geomed_max_iter < 1:
            raise InvalidParams("geomed_max_iter must be at least 1")
        if self.geomed_weights is not None:
            w = tuple(float(x) for x in self.geomed_weights)
            if any(not x > 0 for x in w):
                raise InvalidParams("geomed weights must be positive")
            object.__setattr__(self, "geomed_weights", w)


def _stack(updates) -> np.ndarray:
    if len(updates) == 0:
        raise EmptyInput("no updates to aggregate")
    rows = [np.asarray(u, dtype=np.float64).reshape(-1) for u in updates]
    d = rows[0].shape[0]
    for idx, r in enumerate(rows):
        if r.shape[0] != d:
            raise DimensionMismatch(f"update {idx} has length {r.shape[0]}, expected {d}")
    return np.vstack(rows)


def _canonical_order(X: np.ndarray) -> np.ndarray:
    # summing rows in a content-defined order makes results bitwise independent of input order
    return np.array(sorted(range(X.shape[0]), key=lambda i: X[i].tobytes()), dtype=np.int64)


def fedavg(updates: Sequence) -> np.ndarray:
    """Coordinate-wise mean."""
    X = _stack(updates)
    return X[_canonical_order(X)].mean(axis=0)


def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    # explicit differences, not the Gram expansion, so that exact ties survive
    out = np.empty((X.shape[0], X.shape[0]))
    for j in range(X.shape[0]):
        diff = X - X[j]
        out[j] = np.einsum("ij,ij->i", diff, diff)
    return out


def krum_scores(updates: Sequence, f_assumed: int) -> np.ndarray:
    """Sum of squared distances from each update to its ``m - f - 2`` nearest peers."""
    X = _stack(updates)
    m = X.shape[0]
    if f_assumed < 0:
        raise InvalidParams("f_assumed must be non-negative")
    if m < f_assumed + 3:
        raise TooFewUpdates(f"krum needs at least f+3={f_assumed + 3} updates, got {m}")
    nearest = m - f_assumed - 2
    dists = _pairwise_sq_dists(X)
    scores = np.empty(m)
    for j in range(m):
        others = np.delete(dists[j], j)
        scores[j] = np.sort(others)[:nearest].sum()
    return scores


def krum_select(updates: Sequence, f_assumed: int) -> int:
    """Index of the Krum winner; the lowest index wins a tie."""
    return int(np.argmin(krum_scores(updates, f_assumed)))


def krum(updates: Sequence, f_assumed: int) -> np.ndarray:
    idx = krum_select(updates, f_assumed)
    return np.asarray(updates[idx], dtype=np.float64).reshape(-1).copy()


def _weights(m, weights):
    if weights is None:
        return np.full(m, 1.0 / m)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != m:
        raise WeightMismatch(f"{w.shape[0]} weights for {m} updates")
    if np.any(w <= 0):
        raise InvalidParams("geomed weights must be positive")
    return w


def geomed_objective(point, updates, weights=None) -> float:
    X = _stack(updates)
    w = _weights(X.shape[0], weights)
    return float(np.sum(w * np.linalg.norm(X - np.asarray(point, dtype=np.float64), axis=1)))


def geomed(
    updates: Sequence,
    weights=None,
    tol: float = 1e-10,
    max_iter: int = 1000,
    return_iterations: bool = False,
):
    """Weighted geometric median by Weiszfeld iteration.

    Starts from the weighted mean and iterates
    ``y <- sum(a_j w_j / d_j) / sum(a_j / d_j)`` with ``d_j = max(|w_j - y|, 1e-12)``
    until the step is shorter than ``tol`` or ``max_iter`` steps were taken.
    """
    X = _stack(updates)
    w = _weights(X.shape[0], weights)
    order = _canonical_order(X)
    X, w = X[order], w[order]
    y = (w[:, None] * X).sum(axis=0) / w.sum()
    it = 0
    for it in range(1, max_iter + 1):
        d = np.maximum(np.linalg.norm(X - y, axis=1), DISTANCE_FLOOR)
        coef = w / d
        y_next = (coef[:, None] * X).sum(axis=0) / coef.sum()
        step = np.linalg.norm(y_next - y)
        y = y_next
        if step < tol:
            break
    if return_iterations:
        return y, it
    return y


def aggregate(own, received: Sequence, cfg: AggregatorConfig) -> np.ndarray:
    """Aggregate a node's own update with those received from its neighbors.

    With ``include_self`` the node's own update is placed first, ahead of the
    received ones, which makes it the winner of any Krum tie it takes part in.
    """
    own = np.asarray(own, dtype=np.float64).reshape(-1)
    inputs = ([own] if cfg.include_self else []) + list(received)
    if not inputs:
        raise EmptyInput("include_self is off and no updates were received")
    if cfg.kind == "fedavg":
        return fedavg(inputs)
    if cfg.kind == "krum":
        return krum(inputs, cfg.f_assumed)
    return geomed(inputs, cfg.geomed_weights, cfg.geomed_tol, cfg.geomed_max_iter)


class MeanAggregator(BaseEstimator):
    """Coordinate-wise mean of the rows of ``X``.

    Attributes
    ----------
    center_ : ndarray of shape (n_features,)
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.center_ = fedavg(X)
        self.n_features_in_ = X.shape[1]
        return self


class KrumAggregator(BaseEstimator):
    """Selects the row of ``X`` with the smallest Krum score.

    Parameters
    ----------
    f_assumed : int, default=1
        Number of Byzantine rows the rule is asked to tolerate.

    Attributes
    ----------
    scores_ : ndarray of shape (n_updates,)
    selected_index_ : int
    center_ : ndarray of shape (n_features,)
    """

    def __init__(self, f_assumed=1):
        self.f_assumed = f_assumed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.scores_ = krum_scores(X, self.f_assumed)
        self.selected_index_ = int(np.argmin(self.scores_))
        self.center_ = X[self.selected_index_].copy()
        self.n_features_in_ = X.shape[1]
        return self


class GeometricMedianAggregator(BaseEstimator):
    """Weighted geometric median of the rows of ``X`` (Weiszfeld iteration).

    Parameters
    ----------
    tol : float, default=1e-10
    max_iter : int, default=1000

    Attributes
    ----------
    center_ : ndarray of shape (n_features,)
    n_iter_ : int
    """

    def __init__(self, tol=1e-10, max_iter=1000):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, dtype=np.float64)
        self.center_, self.n_iter_ = geomed(
            X, sample_weight, self.tol, self.max_iter, return_iterations=True
        )
        self.n_features_in_ = X.shape[1]
        return self

    def objective(self, X, sample_weight=None):
        check_is_fitted(self, "center_")
        return geomed_objective(self.center_, check_array(X, dtype=np.float64), sample_weight)
