"""Spectral and sensitivity diagnostics for the antisymmetric Euler encoder."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from uagnn.autodiff import Tape, op_matmul
from uagnn.graph import Graph, bfs_distances
from uagnn.model import HyperParams, ModelParams, bind, propagate, propagation_operator


class Regime(str, enum.Enum):
    UNSTABLE = "unstable"
    DISSIPATIVE = "dissipative"
    NON_DISSIPATIVE = "non_dissipative"


@dataclass
class SpectrumReport:
    singular_values: np.ndarray  # of W - W^T, descending
    gamma: float
    real_parts: np.ndarray  # of the eigenvalues of W - W^T - gamma I
    skew_residual: float  # ||M + M^T||_F

    @property
    def max_real_part(self) -> float:
        return float(self.real_parts.max()) if len(self.real_parts) else -self.gamma

    @property
    def real_part_deviation(self) -> float:
        """max |Re(lambda) + gamma|."""
        return float(np.abs(self.real_parts + self.gamma).max()) if len(self.real_parts) else 0.0

    @property
    def imaginary_parts(self) -> np.ndarray:
        return self.singular_values

    def to_dict(self) -> dict:
        return {
            "singular_values": self.singular_values.tolist(),
            "gamma": self.gamma,
            "max_real_part": self.max_real_part,
            "real_part_deviation": self.real_part_deviation,
            "skew_residual": self.skew_residual,
            "pairing_error": pairing_error(self.singular_values),
        }


def effective_spectrum(W, gamma: float = 0.0) -> SpectrumReport:
    """Spectrum of ``W - W^T - gamma I`` through symmetric eigenproblems only.

    ``M = W - W^T`` is normal with eigenvalues ``±i σ_j``; shifting by
    ``-gamma I`` moves every real part to ``-gamma``. Because the shifted
    matrix is normal, its eigenvalue real parts are the eigenvalues of its
    symmetric part, which is what ``real_parts`` reports.

    ``i M`` is Hermitian with eigenvalues ``±σ_j``, so the singular values
    come from ``eigvalsh`` at full precision; going through ``M^T M`` would
    square them and lose half the digits of the small ones.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"W must be square, got shape {W.shape}")
    M = W - W.T
    residual = float(np.linalg.norm(M + M.T))
    sv = np.sort(np.abs(np.linalg.eigvalsh(1j * M)))[::-1]
    S = M - gamma * np.eye(len(M))
    real_parts = np.linalg.eigvalsh((S + S.T) / 2.0)
    return SpectrumReport(sv, float(gamma), real_parts, residual)


def pairing_error(singular_values) -> float:
    """Largest gap inside consecutive pairs of a skew matrix's singular values.

    Odd dimension leaves one unpaired value, which should be zero.
    """
    sv = np.sort(np.asarray(singular_values, dtype=np.float64))[::-1]
    err = 0.0
    pairs = len(sv) // 2
    if pairs:
        err = float(np.max(np.abs(sv[0:2 * pairs:2] - sv[1:2 * pairs:2])))
    if len(sv) % 2:
        err = max(err, abs(float(sv[-1])))
    return err


def classify_regime(report: SpectrumReport, tol: float = 1e-6) -> Regime:
    top = report.max_real_part
    if top > tol:
        return Regime.UNSTABLE
    if top < -tol:
        return Regime.DISSIPATIVE
    return Regime.NON_DISSIPATIVE


@dataclass
class SensitivityProfile:
    source: int
    distances: np.ndarray  # distinct reachable hop distances, ascending
    influence: np.ndarray  # mean Frobenius norm of d x_v^L / d x_u^0 per distance
    counts: np.ndarray  # nodes per distance
    tag: str
    jacobian: np.ndarray  # (n, h, h): [v, i, j] = d X^L[v, i] / d X^0[u, j]

    def at(self, distance: int) -> float:
        hit = np.flatnonzero(self.distances == distance)
        if not len(hit):
            raise KeyError(f"no node at distance {distance}")
        return float(self.influence[hit[0]])

    def to_dict(self) -> dict:
        return {"source": self.source, "tag": self.tag,
                "distances": self.distances.tolist(), "influence": self.influence.tolist(),
                "counts": self.counts.tolist()}

    def to_csv(self) -> str:
        rows = ["distance,nodes,influence"]
        rows += [f"{d},{c},{repr(float(v))}"
                 for d, c, v in zip(self.distances, self.counts, self.influence)]
        return "\n".join(rows) + "\n"


def _embedded_state(params: ModelParams, X) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) @ params.W_in + params.b_in


def _final_state(params: ModelParams, op, X0: np.ndarray, hp: HyperParams,
                 activation: str) -> np.ndarray:
    tape = Tape()
    leaves = bind(params, tape, requires_grad=False)
    XL, _ = propagate(leaves, op, tape.constant(X0), hp, activation)
    return XL.value


def jacobian_autodiff(params: ModelParams, op, X0: np.ndarray, hp: HyperParams, u: int,
                      activation: str = "tanh") -> np.ndarray:
    """d X^L / d x^0_u by one reverse pass per output entry (n*h passes)."""
    n, h = X0.shape
    J = np.zeros((n, h, h))
    for v in range(n):
        for i in range(h):
            tape = Tape()
            leaves = bind(params, tape, requires_grad=False)
            start = tape.leaf(X0)
            XL, _ = propagate(leaves, op, start, hp, activation)
            pick_row = np.zeros((1, n))
            pick_row[0, v] = 1.0
            pick_col = np.zeros((h, 1))
            pick_col[i, 0] = 1.0
            entry = op_matmul(op_matmul(tape.constant(pick_row), XL), tape.constant(pick_col))
            grads = tape.backward(entry)
            J[v, i] = grads[start.index][u]
    return J


def jacobian_fd(params: ModelParams, op, X0: np.ndarray, hp: HyperParams, u: int,
                step: float = 1e-6, activation: str = "tanh") -> np.ndarray:
    """Central-difference counterpart of ``jacobian_autodiff``."""
    n, h = X0.shape
    J = np.zeros((n, h, h))
    for j in range(h):
        plus, minus = X0.copy(), X0.copy()
        plus[u, j] += step
        minus[u, j] -= step
        diff = _final_state(params, op, plus, hp, activation) - _final_state(params, op, minus, hp, activation)
        J[:, :, j] = diff / (2.0 * step)
    return J


def sensitivity_profile(params: ModelParams, g: Graph, hp: HyperParams, u: int,
                        method: str = "autodiff", tag: str | None = None,
                        edges=None) -> SensitivityProfile:
    """Influence of node ``u``'s embedded state on every final state, by hop distance.

    Nodes unreachable from ``u`` are left out.
    """
    if not 0 <= u < g.n:
        raise IndexError(f"source node {u} out of range [0, {g.n})")
    op = propagation_operator(g, g.edges if edges is None else edges, hp.aggregation)
    X0 = _embedded_state(params, g.features)
    if method == "autodiff":
        J = jacobian_autodiff(params, op, X0, hp, u)
    elif method == "fd":
        J = jacobian_fd(params, op, X0, hp, u)
    else:
        raise ValueError(f"unknown method {method!r}")
    dist = bfs_distances(g, u)
    block_norms = np.sqrt(np.einsum("vij,vij->v", J, J))
    reachable = dist >= 0
    distances = np.unique(dist[reachable])
    influence = np.array([block_norms[dist == d].mean() for d in distances])
    counts = np.array([int(np.sum(dist == d)) for d in distances])
    if tag is None:
        regime = classify_regime(effective_spectrum(params.W, hp.gamma))
        tag = "antisymmetric" if regime is Regime.NON_DISSIPATIVE else "dissipative-baseline"
    return SensitivityProfile(u, distances, influence, counts, tag, J)
