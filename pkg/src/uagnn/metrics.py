"""Clustering quality: macro-F1 after optimal alignment, NMI, conductance."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from uagnn.graph import Graph
from uagnn.kmeans import Partition


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    """counts[i, j] = nodes in predicted cluster ``pred_ids[i]`` with label ``true_ids[j]``."""

    counts: np.ndarray
    pred_ids: np.ndarray
    true_ids: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def _labels(x) -> np.ndarray:
    if isinstance(x, Partition):
        return x.assignments
    return np.asarray(x, dtype=np.int64)


def contingency(pred, truth) -> ContingencyTable:
    p, t = _labels(pred), _labels(truth)
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} labels")
    pred_ids, p_idx = np.unique(p, return_inverse=True)
    true_ids, t_idx = np.unique(t, return_inverse=True)
    counts = np.zeros((len(pred_ids), len(true_ids)), dtype=np.int64)
    np.add.at(counts, (p_idx, t_idx), 1)
    return ContingencyTable(counts, pred_ids, true_ids)


def hungarian(cost) -> np.ndarray:
    """Minimum-cost assignment of rows to distinct columns.

    Returns ``assign`` with ``assign[i]`` the column of row ``i``; when there
    are more rows than columns the surplus rows get ``-1``.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = c.shape
    if rows == 0:
        return np.zeros(0, dtype=np.int64)
    if rows > cols:
        # pad with zero-cost dummy columns; rows landing there are unassigned
        c = np.hstack([c, np.zeros((rows, rows - cols))])
    n, m = c.shape

    # shortest augmenting path with row/column potentials, 1-based with a
    # virtual column 0
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            cols_free = np.flatnonzero(free)
            cur = c[i0 - 1, cols_free - 1] - u[i0] - v[cols_free]
            better = cur < minv[cols_free]
            minv[cols_free[better]] = cur[better]
            way[cols_free[better]] = j0
            j1 = int(cols_free[np.argmin(minv[cols_free])])
            delta = minv[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    assign = np.full(rows, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if owner[j] and j <= cols:
            assign[owner[j] - 1] = j - 1
    return assign


def align_clusters(pred, truth) -> dict[int, int]:
    """Maximum-overlap one-to-one map from predicted cluster id to label.

    Overlap ties are broken toward the larger F1 sum, which makes the result
    independent of how cluster ids are numbered. Under a one-to-one map the
    F1 of a matched pair is ``2 n_pt / (|p| + |t|)``, so the secondary term is
    additive and fits in the same assignment problem; its weight keeps the
    whole term below one count.
    """
    table = contingency(pred, truth)
    counts = table.counts.astype(np.float64)
    f1 = 2.0 * counts / np.add.outer(table.row_totals, table.col_totals)
    weight = 1.0 / (2.0 * (min(counts.shape) + 1))
    match = hungarian(-(counts + weight * f1))
    return {int(table.pred_ids[i]): int(table.true_ids[j])
            for i, j in enumerate(match) if j >= 0}


def f1_under_mapping(pred, truth, mapping: dict[int, int]) -> float:
    p, t = _labels(pred), _labels(truth)
    relabeled = np.array([mapping.get(int(c), -1) for c in p], dtype=np.int64)
    scores = []
    for cls in np.unique(t):
        tp = np.sum((relabeled == cls) & (t == cls))
        fp = np.sum((relabeled == cls) & (t != cls))
        fn = np.sum((relabeled != cls) & (t == cls))
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores))


def macro_f1(pred, truth) -> float:
    p, t = _labels(pred), _labels(truth)
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} labels")
    if len(t) == 0:
        raise ValueError("macro-F1 of an empty labelling")
    return f1_under_mapping(p, t, align_clusters(p, t))


def _entropy(counts: np.ndarray, n: int) -> float:
    prob = counts[counts > 0] / n
    return float(-np.sum(prob * np.log(prob)))


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies (nats)."""
    table = contingency(pred, truth)
    n = table.n
    if n == 0:
        raise ValueError("NMI of an empty labelling")
    h_pred = _entropy(table.row_totals, n)
    h_true = _entropy(table.col_totals, n)
    if h_pred == 0.0 or h_true == 0.0:
        # a one-cluster side: identical only if both are single clusters
        return 1.0 if h_pred == h_true else 0.0
    c = table.counts.astype(np.float64)
    nz = c > 0
    outer = np.outer(table.row_totals, table.col_totals).astype(np.float64)
    mi = float(np.sum(c[nz] / n * np.log(c[nz] * n / outer[nz])))
    mi = max(mi, 0.0)
    return float(min(1.0, mi / ((h_pred + h_true) / 2.0)))


def conductance(pred, g: Graph, edges=None) -> float:
    """Mean over clusters of cut(S) / min(vol(S), 2m - vol(S)); lower is better."""
    p = _labels(pred)
    if len(p) != g.n:
        raise ValueError(f"partition has {len(p)} nodes, graph has {g.n}")
    e = g.edges if edges is None else np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m = len(e)
    if m == 0:
        raise ValueError("conductance is undefined on an empty edge set")
    deg = np.bincount(e.ravel(), minlength=g.n)
    cu, cv = p[e[:, 0]], p[e[:, 1]]
    scores = []
    for c in np.unique(p):
        vol = deg[p == c].sum()
        denom = min(vol, 2 * m - vol)
        if denom == 0:
            continue
        cut = np.sum((cu == c) != (cv == c))
        scores.append(cut / denom)
    return float(np.mean(scores)) if scores else 0.0


METRICS = {"f1": macro_f1, "nmi": nmi}
HIGHER_IS_BETTER = {"f1": True, "nmi": True, "conductance": False}


def evaluate_all(pred, g: Graph, edges=None) -> dict[str, float]:
    if g.labels is None:
        raise ValueError("label-based metrics need ground-truth labels")
    return {
        "f1": macro_f1(pred, g.labels),
        "nmi": nmi(pred, g.labels),
        "conductance": conductance(pred, g, edges),
    }


def metric_report(metric: str, value: float, seed: int, split: str, k: int) -> str:
    return json.dumps({"metric": metric, "value": value, "seed": seed, "split": split, "k": k})
