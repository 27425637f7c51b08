"""Antisymmetric Euler-step graph encoder with linear reconstruction decoders."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from uagnn.autodiff import (
    NonFiniteError,
    Tape,
    Variable,
    op_add,
    op_add_row_bias,
    op_matmul,
    op_mse,
    op_scale,
    op_sigmoid,
    op_spmm,
    op_sub,
    op_tanh,
    op_transpose,
)
from uagnn.graph import Graph, normalize_sym, to_adjacency
from uagnn.sparse import SparseMatrix

PARAM_NAMES = ("W_in", "b_in", "W", "V", "b", "W_X", "b_X", "W_A", "b_A")


class Aggregation(str, enum.Enum):
    PHI1 = "phi1"  # raw adjacency
    PHI2 = "phi2"  # D^-1/2 (A+I) D^-1/2


class DivergenceError(FloatingPointError):
    """Encoder state or loss went non-finite."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class HyperParams:
    layers: int = 10
    hidden_dim: int = 32
    gamma: float = 0.1
    epsilon: float = 0.1
    aggregation: Aggregation = Aggregation.PHI2
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    max_epochs: int = 5000
    patience: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        if self.layers < 0 or self.hidden_dim < 1:
            raise ValueError("layers must be >= 0 and hidden_dim >= 1")
        if self.epsilon < 0 or self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("epsilon, learning_rate and weight_decay must be non-negative")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aggregation"] = self.aggregation.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> HyperParams:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ModelParams:
    W_in: np.ndarray
    b_in: np.ndarray
    W: np.ndarray
    V: np.ndarray
    b: np.ndarray
    W_X: np.ndarray
    b_X: np.ndarray
    W_A: np.ndarray
    b_A: np.ndarray

    def __post_init__(self) -> None:
        d, h = np.shape(self.W_in)
        n = np.shape(self.W_A)[1]
        expected = {"W_in": (d, h), "b_in": (1, h), "W": (h, h), "V": (h, h), "b": (1, h),
                    "W_X": (h, d), "b_X": (1, d), "W_A": (h, n), "b_A": (1, n)}
        for name in PARAM_NAMES:
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != expected[name]:
                raise ValueError(f"{name}: expected shape {expected[name]}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"{name}: non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        """(d, h, n)."""
        return self.W_in.shape[0], self.W_in.shape[1], self.W_A.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def replace(self, **arrays) -> ModelParams:
        return ModelParams(**{**self.as_dict(), **arrays})

    def to_json(self) -> str:
        d, h, n = self.dims
        doc = {"d": d, "h": h, "n": n}
        # float repr is the shortest string that round-trips exactly
        doc.update({name: getattr(self, name).tolist() for name in PARAM_NAMES})
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> ModelParams:
        doc = json.loads(text)
        try:
            params = cls(**{name: np.array(doc[name], dtype=np.float64) for name in PARAM_NAMES})
        except KeyError as exc:
            raise ValueError(f"parameters document lacks {exc.args[0]!r}") from None
        if params.dims != (doc.get("d"), doc.get("h"), doc.get("n")):
            raise ValueError("declared dimensions disagree with matrix shapes")
        return params

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> ModelParams:
        return cls.from_json(Path(path).read_text())


@dataclass
class EncoderOutput:
    XL: Variable
    norms: np.ndarray
    X0: Variable
    leaves: dict[str, Variable]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(d: int, h: int, n: int, seed: int = 0) -> ModelParams:
    """Glorot-uniform matrices and zero biases, deterministic in ``seed``."""
    if min(d, h, n) < 1:
        raise ValueError(f"dimensions must be positive, got d={d} h={h} n={n}")
    rng = np.random.default_rng(seed)
    return ModelParams(
        W_in=_glorot(rng, d, h), b_in=np.zeros((1, h)),
        W=_glorot(rng, h, h), V=_glorot(rng, h, h), b=np.zeros((1, h)),
        W_X=_glorot(rng, h, d), b_X=np.zeros((1, d)),
        W_A=_glorot(rng, h, n), b_A=np.zeros((1, n)),
    )


def bind(params: ModelParams, tape: Tape, requires_grad: bool = True) -> dict[str, Variable]:
    """Place every parameter on ``tape`` as a leaf."""
    return {name: tape.leaf(getattr(params, name), requires_grad) for name in PARAM_NAMES}


def propagation_operator(g: Graph, edges, aggregation: Aggregation | str) -> SparseMatrix:
    adj = to_adjacency(g, edges)
    if Aggregation(aggregation) is Aggregation.PHI2:
        return normalize_sym(adj)
    return adj


def aggregate(op: SparseMatrix, Xprev: Variable, V: Variable) -> Variable:
    """Neighbourhood term ``op @ Xprev @ V``."""
    return op_matmul(op_spmm(op, Xprev), V)


def embed(leaves: dict[str, Variable], X) -> Variable:
    tape = leaves["W_in"].tape
    return op_add_row_bias(op_matmul(tape.constant(X), leaves["W_in"]), leaves["b_in"])


def propagate(leaves: dict[str, Variable], op: SparseMatrix, X0: Variable, hp: HyperParams,
              activation: str = "tanh") -> tuple[Variable, np.ndarray]:
    """Run ``hp.layers`` weight-tied Euler steps from ``X0``.

    Each row is a node state x, updated as
    ``x + eps * act((W - W^T - gamma I) x + (op X V)_row + b)``; in row
    convention the recurrent term is ``X (W - W^T - gamma I)^T``.
    """
    if activation not in ("tanh", "identity"):
        raise ValueError(f"unknown activation {activation!r}")
    if op.shape != (X0.shape[0], X0.shape[0]):
        raise ValueError(f"operator {op.shape} does not match {X0.shape[0]} nodes")
    tape = X0.tape
    W, V, b = leaves["W"], leaves["V"], leaves["b"]
    h = W.shape[0]
    skew = op_sub(W, op_transpose(W))
    if hp.gamma:
        skew = op_sub(skew, tape.constant(hp.gamma * np.eye(h)))
    recurrent = op_transpose(skew)
    X = X0
    norms = np.zeros(hp.layers)
    for layer in range(1, hp.layers + 1):
        try:
            pre = op_add_row_bias(op_add(op_matmul(X, recurrent), aggregate(op, X, V)), b)
            step = op_tanh(pre) if activation == "tanh" else pre
            X = op_add(X, op_scale(step, hp.epsilon))
        except NonFiniteError as exc:
            raise DivergenceError(f"encoder diverged at layer {layer}: {exc}", layer) from exc
        norms[layer - 1] = np.linalg.norm(X.value)
    return X, norms


def encode(params: ModelParams | dict[str, Variable], op: SparseMatrix, X, hp: HyperParams,
           tape: Tape | None = None, activation: str = "tanh") -> EncoderOutput:
    """Embed features and propagate; returns the final node states on the tape."""
    if isinstance(params, ModelParams):
        tape = tape or Tape()
        leaves = bind(params, tape)
    else:
        leaves = params
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != leaves["W_in"].shape[0]:
        raise ValueError(f"features {X.shape} do not match input dim {leaves['W_in'].shape[0]}")
    X0 = embed(leaves, X)
    XL, norms = propagate(leaves, op, X0, hp, activation)
    return EncoderOutput(XL, norms, X0, leaves)


def decode(leaves: dict[str, Variable], XL: Variable) -> tuple[Variable, Variable]:
    """Feature reconstruction (affine) and adjacency reconstruction (sigmoid)."""
    if XL.shape[1] != leaves["W_X"].shape[0]:
        raise ValueError(f"representation width {XL.shape[1]} != {leaves['W_X'].shape[0]}")
    if XL.shape[0] != leaves["W_A"].shape[1]:
        raise ValueError(f"{XL.shape[0]} nodes but adjacency decoder expects {leaves['W_A'].shape[1]}")
    Xrec = op_add_row_bias(op_matmul(XL, leaves["W_X"]), leaves["b_X"])
    Arec = op_sigmoid(op_add_row_bias(op_matmul(XL, leaves["W_A"]), leaves["b_A"]))
    return Xrec, Arec


def reconstruction_loss(A_target, X_target, Arec: Variable, Xrec: Variable) -> Variable:
    """MSE(A, Ã) + MSE(X, X̃), each averaged over its own entries."""
    return op_add(op_mse(Arec, A_target), op_mse(Xrec, X_target))


def loss_and_grads(params: ModelParams, op: SparseMatrix, X, A_target,
                   hp: HyperParams) -> tuple[float, dict[str, np.ndarray]]:
    tape = Tape()
    out = encode(params, op, X, hp, tape)
    Xrec, Arec = decode(out.leaves, out.XL)
    loss = reconstruction_loss(A_target, X, Arec, Xrec)
    grads = tape.backward(loss)
    return float(loss.value[0, 0]), {k: grads[v.index] for k, v in out.leaves.items()}


def embeddings(params: ModelParams, op: SparseMatrix, X, hp: HyperParams) -> np.ndarray:
    """Final node representations as a plain array (no gradients kept)."""
    tape = Tape()
    leaves = bind(params, tape, requires_grad=False)
    return encode(leaves, op, X, hp, tape).XL.value
