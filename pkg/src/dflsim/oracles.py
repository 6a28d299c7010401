"""Brute-force reference computations used to cross-check the fast kernels.

Nothing here reuses the code paths it checks: Krum is scored by enumerating
every candidate subset, the geometric median is located by grid scan plus
pattern-search refinement, and gradients are taken by central differences of
a separately written loss.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import aggregation, learner

__all__ = [
    "OracleReport",
    "krum_bruteforce_index",
    "geomed_reference",
    "reference_loss",
    "finite_difference_gradient",
    "relative_error",
    "check_krum",
    "check_geomed",
    "check_gradient",
    "ORACLES",
]


@dataclass
class OracleReport:
    name: str
    total: int = 0
    passed: int = 0
    worst: float = 0.0
    worst_label: str = ""
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def summary(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        line = f"{status} {self.passed}/{self.total}"
        if self.worst_label:
            line += f" ({self.worst_label} {self.worst:.3e})"
        return line


def krum_bruteforce_index(updates, f_assumed: int) -> int:
    """Krum winner by exhaustive enumeration of each candidate's neighbor subsets."""
    pts = [list(map(float, u)) for u in updates]
    m = len(pts)
    size = m - f_assumed - 2
    if size < 1:
        raise ValueError("too few updates for krum")

    def sqdist(a, b):
        return sum((x - y) ** 2 for x, y in zip(a, b))

    best_idx, best_score = None, math.inf
    for j in range(m):
        others = [sqdist(pts[j], pts[i]) for i in range(m) if i != j]
        score = min(sum(c) for c in itertools.combinations(others, size))
        if score < best_score:
            best_idx, best_score = j, score
    return best_idx


def _objective(points, weights, y):
    return float(np.sum(weights * np.sqrt(np.sum((points - y) ** 2, axis=1))))


def geomed_reference(updates, weights=None, grid=41, tol=1e-13):
    """Weighted geometric median in low dimension by grid scan and pattern search.

    Returns ``(point, objective)``.
    """
    X = np.asarray(updates, dtype=np.float64)
    w = np.full(X.shape[0], 1.0) if weights is None else np.asarray(weights, dtype=np.float64)
    d = X.shape[1]
    lo, hi = X.min(axis=0), X.max(axis=0)
    axes = [np.linspace(lo[k], hi[k], grid) for k in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    # the inputs themselves are candidates: the median often sits on one
    candidates = np.vstack([mesh, X])
    dists = np.sqrt(((candidates[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    values = dists @ w
    best = candidates[int(np.argmin(values))].copy()
    best_val = float(values.min())

    step = max(float(np.max(hi - lo)), 1.0) / (grid - 1)
    directions = np.vstack([np.eye(d), -np.eye(d)])
    for combo in itertools.product((-1.0, 0.0, 1.0), repeat=d):
        v = np.array(combo)
        if np.count_nonzero(v) > 1:
            directions = np.vstack([directions, v / np.linalg.norm(v)])
    while step > tol:
        improved = False
        for u in directions:
            trial = best + step * u
            val = _objective(X, w, trial)
            if val < best_val:
                best, best_val, improved = trial, val, True
                break
        if not improved:
            step *= 0.5
    return best, best_val


def reference_loss(weights, bias, X, labels):
    """Mean cross-entropy, written out sample by sample."""
    total = 0.0
    for x, y in zip(X, labels):
        z = weights @ x + bias
        top = max(z)
        lse = top + math.log(sum(math.exp(v - top) for v in z))
        total += lse - z[y]
    return total / len(labels)


def finite_difference_gradient(params, num_classes, input_dim, X, labels, h=1e-5):
    params = np.asarray(params, dtype=np.float64)
    split = num_classes * input_dim

    def loss(p):
        return reference_loss(p[:split].reshape(num_classes, input_dim), p[split:], X, labels)

    grad = np.empty_like(params)
    for i in range(params.size):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (loss(up) - loss(down)) / (2 * h)
    return grad


def relative_error(a, b, floor=1e-6) -> float:
    """Largest coordinate-wise ``|a-b| / max(|a|, |b|, floor)``.

    The floor keeps coordinates whose true value is essentially zero from
    turning finite-difference round-off into a huge ratio.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def check_krum(seed: int = 0, count: int = 200) -> OracleReport:
    rng = np.random.default_rng(seed)
    report = OracleReport("krum")
    for case in range(count):
        m = int(rng.integers(4, 7))
        d = int(rng.integers(1, 4))
        f = int(rng.integers(0, m - 2))
        updates = rng.normal(size=(m, d))
        if rng.random() < 0.25:
            updates[int(rng.integers(m))] += rng.normal(scale=20.0, size=d)
        got = aggregation.krum_select(updates, f)
        want = krum_bruteforce_index(updates, f)
        report.total += 1
        if got == want:
            report.passed += 1
        else:
            report.failures.append({"case": case, "f": f, "updates": updates.tolist(), "got": got, "want": want})
    return report


def check_geomed(seed: int = 0, count: int = 50, max_gap: float = 1e-6) -> OracleReport:
    rng = np.random.default_rng(seed)
    report = OracleReport("geomed", worst_label="max objective gap")
    report.worst = -math.inf
    for case in range(count):
        m = int(rng.integers(1, 8))
        d = int(rng.integers(1, 4))
        updates = rng.normal(size=(m, d)) * rng.uniform(0.5, 5.0)
        weights = None if case % 2 == 0 else rng.uniform(0.2, 2.0, size=m)
        y = aggregation.geomed(updates, weights)
        w = np.full(m, 1.0 / m) if weights is None else weights
        got = _objective(updates, w, y)
        _, ref = geomed_reference(updates, w)
        gap = got - ref
        report.total += 1
        report.worst = max(report.worst, gap)
        if gap <= max_gap:
            report.passed += 1
        else:
            report.failures.append(
                {"case": case, "updates": updates.tolist(), "weights": None if weights is None else weights.tolist(), "gap": gap}
            )
    return report


def check_gradient(seed: int = 0, count: int = 50, max_rel: float = 1e-4) -> OracleReport:
    rng = np.random.default_rng(seed)
    report = OracleReport("grad", worst_label="max relative error")
    for case in range(count):
        C = int(rng.integers(2, 6))
        D = int(rng.integers(1, 100 // C))
        B = int(rng.integers(1, 9))
        params = rng.normal(scale=0.5, size=learner.param_dim(C, D))
        X = rng.normal(size=(B, D))
        labels = rng.integers(0, C, size=B)
        got = learner.gradient(learner.unflatten(params, C, D), X, labels)
        want = finite_difference_gradient(params, C, D, X, labels)
        err = relative_error(got, want)
        report.total += 1
        report.worst = max(report.worst, err)
        if err <= max_rel:
            report.passed += 1
        else:
            report.failures.append(
                {"case": case, "classes": C, "params": params.tolist(), "X": X.tolist(), "labels": labels.tolist(), "error": err}
            )
    return report


ORACLES = {"krum": check_krum, "geomed": check_geomed, "grad": check_gradient}
