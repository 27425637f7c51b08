"""K-means with k-means++ seeding, Lloyd iterations and best-of-n restarts."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Partition:
    """Hard cluster assignment. Ids are 0-based; ``one_based()`` for display."""

    assignments: np.ndarray
    k: int
    inertia: float = 0.0

    def __post_init__(self) -> None:
        a = np.asarray(self.assignments, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assignments must be a vector")
        if len(a) and (a.min() < 0 or a.max() >= self.k):
            raise ValueError(f"cluster id outside [0, {self.k})")
        if self.inertia < 0:
            raise ValueError("inertia must be non-negative")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def __len__(self) -> int:
        return len(self.assignments)

    def one_based(self) -> np.ndarray:
        return self.assignments + 1

    def to_text(self) -> str:
        return "".join(f"{c}\n" for c in self.one_based())

    def summary_json(self, seed: int | None = None) -> str:
        return json.dumps({"k": self.k, "inertia": self.inertia, "seed": seed})


def squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeanspp_init(X: np.ndarray, k: int, sub_seed) -> np.ndarray:
    """k-means++ seeding: D² sampling after a uniform first pick."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(sub_seed)
    chosen = [int(rng.integers(n))]
    closest = squared_distances(X, X[chosen]).min(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, squared_distances(X, X[idx:idx + 1])[:, 0])
    return X[chosen].copy()


def lloyd_step(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Assign to nearest centroid (ties -> lowest id), then recompute means.

    The returned inertia is measured against the input centroids. A cluster
    left empty is re-seeded with the point farthest from its own centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    k = len(centroids)
    dist = squared_distances(X, centroids)
    assign = np.argmin(dist, axis=1)
    point_cost = dist[np.arange(len(X)), assign]
    inertia = float(point_cost.sum())
    counts = np.bincount(assign, minlength=k)
    sums = np.zeros_like(centroids, dtype=np.float64)
    np.add.at(sums, assign, X)
    new = np.array(centroids, dtype=np.float64, copy=True)
    nonempty = counts > 0
    new[nonempty] = sums[nonempty] / counts[nonempty, None]
    empty = np.flatnonzero(~nonempty)
    if len(empty):
        order = np.argsort(-point_cost, kind="stable")
        for c, idx in zip(empty, order):
            new[c] = X[idx]
    return assign, new, inertia


def _single_run(X: np.ndarray, k: int, max_iter: int, tol: float, sub_seed):
    centroids = kmeanspp_init(X, k, sub_seed)
    history = []
    assign, inertia = None, np.inf
    for _ in range(max_iter):
        assign, centroids, step_inertia = lloyd_step(X, centroids)
        history.append(step_inertia)
        improved = inertia - step_inertia
        inertia = step_inertia
        if improved < tol:
            break
    # cost of the final assignment against its own cluster means
    resid = X - centroids[assign]
    inertia = float(np.einsum("nd,nd->", resid, resid))
    return assign, inertia, history


def kmeans(X, k: int, n_init: int = 20, max_iter: int = 300, tol: float = 1e-6,
           seed: int = 0) -> Partition:
    """Best-of-``n_init`` k-means by final inertia, deterministic in ``seed``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    n = len(X)
    if k <= 0 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    best = None
    for sub in np.random.SeedSequence(seed).spawn(n_init):
        assign, inertia, _ = _single_run(X, k, max_iter, tol, sub)
        if best is None or inertia < best[1]:
            best = (assign, inertia)
    return Partition(best[0], k, max(0.0, best[1]))
