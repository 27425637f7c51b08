"""Graph container, dataset I/O, homophily, edge splits and SBM generation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from uagnn.sparse import SparseMatrix

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.txt"


class GraphFormatError(ValueError):
    """Raised when a dataset directory or graph definition is malformed."""


class SelfLoopWarning(UserWarning):
    def __init__(self, count: int):
        super().__init__(f"dropped {count} self-loop(s)")
        self.count = count


def canonical_edges(pairs, n: int | None = None) -> tuple[np.ndarray, int]:
    """Return (sorted unique (u<v) pairs, number of self-loops dropped)."""
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if n is not None and len(arr) and (arr.min() < 0 or arr.max() >= n):
        raise GraphFormatError(f"edge endpoint out of range [0, {n})")
    loops = arr[:, 0] == arr[:, 1]
    arr = np.sort(arr[~loops], axis=1)
    if len(arr):
        arr = np.unique(arr, axis=0)
    return arr.reshape(-1, 2), int(loops.sum())


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph.

    ``edges`` holds every unordered pair once as a row ``(u, v)`` with
    ``u < v``, rows sorted lexicographically.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = "graph"

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(edges):
            if edges.min() < 0 or edges.max() >= self.n:
                raise GraphFormatError(f"edge endpoint out of range [0, {self.n})")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphFormatError("self-loops are not allowed in the stored edge set")
        canon, _ = canonical_edges(edges)
        if len(canon) != len(edges):
            raise GraphFormatError("duplicate edges in the stored edge set")
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != self.n:
            raise GraphFormatError(f"features must be {self.n}×d, got shape {features.shape}")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (self.n,):
                raise GraphFormatError(f"expected {self.n} labels, got {labels.shape[0]}")
            if len(labels) and labels.min() < 0:
                raise GraphFormatError("labels must be non-negative class ids")
            labels.setflags(write=False)
        canon.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "edges", canon)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            raise GraphFormatError("graph has no labels")
        return int(len(np.unique(self.labels)))

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def with_edges(self, edges) -> Graph:
        return Graph(self.n, edges, self.features, self.labels, self.name)


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    fractions: tuple[float, float, float] = field(default=(0.64, 0.16, 0.20))

    def cumulative(self, stage: str) -> np.ndarray:
        """Edges visible at a stage: train, train+val, or everything."""
        if stage == "train":
            return self.train
        if stage == "val":
            return np.concatenate([self.train, self.val])
        if stage == "test":
            return np.concatenate([self.train, self.val, self.test])
        raise ValueError(f"unknown stage {stage!r}")


def load_graph(path, name: str | None = None) -> Graph:
    """Read a dataset directory (edges.tsv, features.csv, optional labels.txt)."""
    root = Path(path)
    edges_path = root / EDGES_FILE
    feats_path = root / FEATURES_FILE
    for p in (edges_path, feats_path):
        if not p.is_file():
            raise GraphFormatError(f"missing dataset file: {p}")

    rows = []
    width = None
    for lineno, line in enumerate(feats_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            values = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise GraphFormatError(f"{feats_path}:{lineno}: {exc}") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise GraphFormatError(
                f"{feats_path}:{lineno}: expected {width} values, got {len(values)}")
        rows.append(values)
    features = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    n = features.shape[0]

    pairs = []
    for lineno, line in enumerate(edges_path.read_text().splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 2:
            raise GraphFormatError(f"{edges_path}:{lineno}: expected two node ids")
        try:
            pairs.append((int(toks[0]), int(toks[1])))
        except ValueError:
            raise GraphFormatError(f"{edges_path}:{lineno}: non-integer node id") from None
    edges, loops = canonical_edges(pairs, n)
    if loops:
        warnings.warn(SelfLoopWarning(loops), stacklevel=2)

    labels = None
    labels_path = root / LABELS_FILE
    if labels_path.is_file():
        toks = labels_path.read_text().split()
        try:
            labels = np.array([int(t) for t in toks], dtype=np.int64)
        except ValueError:
            raise GraphFormatError(f"{labels_path}: non-integer label") from None
        if len(labels) != n:
            raise GraphFormatError(f"{labels_path}: {len(labels)} labels for {n} nodes")

    return Graph(n, edges, features, labels, name or root.name)


def save_graph(g: Graph, path) -> Path:
    """Write ``g`` in the dataset directory format; output is byte-stable."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    (root / EDGES_FILE).write_text("".join(f"{u}\t{v}\n" for u, v in g.edges))
    (root / FEATURES_FILE).write_text(
        "".join(",".join(repr(float(x)) for x in row) + "\n" for row in g.features))
    if g.labels is not None:
        (root / LABELS_FILE).write_text("".join(f"{int(y)}\n" for y in g.labels))
    return root


def homophily(g: Graph) -> float:
    """Fraction of edges whose endpoints share a label."""
    if g.labels is None:
        raise GraphFormatError("homophily needs labels")
    if g.num_edges == 0:
        raise GraphFormatError("homophily is undefined on an empty edge set")
    y = g.labels
    same = y[g.edges[:, 0]] == y[g.edges[:, 1]]
    return float(same.sum() / len(same))


def split_edges(g: Graph, fractions=(0.64, 0.16, 0.20), seed: int = 0) -> EdgeSplit:
    """Shuffle edges with ``seed`` and slice into train/val/test.

    Validation and test sizes are ``floor(f * |E|)``; train takes the rest.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 or not math.isfinite(f) for f in fr):
        raise ValueError(f"fractions must be three non-negative reals, got {fractions}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fr)}")
    m = g.num_edges
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    # small slack so that e.g. 0.29 * 100 counts as 29
    n_val = int(math.floor(fr[1] * m + 1e-9))
    n_test = int(math.floor(fr[2] * m + 1e-9))
    n_train = m - n_val - n_test
    shuffled = g.edges[perm]
    train = shuffled[:n_train]
    val = shuffled[n_train:n_train + n_val]
    test = shuffled[n_train + n_val:]
    return EdgeSplit(train, val, test, seed, fr)


def to_adjacency(g: Graph, subset=None) -> SparseMatrix:
    """Symmetric 0/1 adjacency over ``subset`` (default: all edges)."""
    if subset is None:
        edges = g.edges
    else:
        edges, _ = canonical_edges(subset, g.n)
        if len(edges):
            known = g.edges[:, 0] * g.n + g.edges[:, 1]
            keys = edges[:, 0] * g.n + edges[:, 1]
            if not np.all(np.isin(keys, known)):
                raise GraphFormatError("subset contains an edge that is not in the graph")
    u, v = edges[:, 0], edges[:, 1]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    return SparseMatrix.from_coo(rows, cols, np.ones(len(rows)), (g.n, g.n))


def dense_adjacency(g: Graph, subset=None) -> np.ndarray:
    return to_adjacency(g, subset).to_dense()


def edges_from_adjacency(adj: SparseMatrix) -> np.ndarray:
    rows = adj.row_ids()
    upper = rows < adj.indices
    return np.stack([rows[upper], adj.indices[upper]], axis=1)


def normalize_sym(adj: SparseMatrix) -> SparseMatrix:
    """D̂^{-1/2} (A + I) D̂^{-1/2}, with D̂ the degree matrix of A + I."""
    n, m = adj.shape
    if n != m:
        raise ValueError(f"adjacency must be square, got {adj.shape}")
    rows = np.concatenate([adj.row_ids(), np.arange(n)])
    cols = np.concatenate([adj.indices, np.arange(n)])
    vals = np.concatenate([adj.data, np.ones(n)])
    a_hat = SparseMatrix.from_coo(rows, cols, vals, (n, n))
    inv_sqrt = 1.0 / np.sqrt(a_hat.row_sums())
    data = inv_sqrt[a_hat.row_ids()] * a_hat.data * inv_sqrt[a_hat.indices]
    return SparseMatrix(a_hat.shape, a_hat.indptr, a_hat.indices, data)


def generate_sbm(n: int, k: int, p_in: float, p_out: float, feature_dim: int,
                 feature_shift: float = 1.0, seed: int = 0, name: str | None = None) -> Graph:
    """Stochastic block model with Gaussian block features.

    Nodes are split into ``k`` consecutive equal blocks. Features are unit
    variance noise around ``feature_shift * e_block``.
    """
    if k <= 0 or n <= 0 or n % k:
        raise GraphFormatError(f"n={n} must be a positive multiple of k={k}")
    for p in (p_in, p_out):
        if not 0.0 <= p <= 1.0:
            raise GraphFormatError(f"probability {p} outside [0, 1]")
    if feature_dim < k:
        raise GraphFormatError(f"feature_dim={feature_dim} must be at least k={k}")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), n // k)
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    features = rng.standard_normal((n, feature_dim))
    features[np.arange(n), labels] += feature_shift
    return Graph(n, edges, features, labels, name or f"sbm-n{n}-k{k}-s{seed}")


def path_graph(n: int, feature_dim: int = 1, seed: int = 0, feature_scale: float = 1.0) -> Graph:
    """Path 0-1-...-(n-1); ``feature_scale=0`` gives all-zero features."""
    rng = np.random.default_rng(seed)
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    features = feature_scale * rng.standard_normal((n, feature_dim))
    return Graph(n, edges, features, None, f"path-{n}")


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Hop distance from ``source``; unreachable nodes get -1."""
    if not 0 <= source < g.n:
        raise IndexError(f"source node {source} out of range [0, {g.n})")
    adj = to_adjacency(g)
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            nbrs, _ = adj.row(u)
            for v in nbrs:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    return dist
