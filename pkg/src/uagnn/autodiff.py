"""Tape-based reverse-mode differentiation over dense float64 matrices.

The vocabulary is deliberately small: exactly the primitives the encoder,
decoders and reconstruction loss are built from. Sparse operators enter
only as constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from uagnn.sparse import SparseMatrix

Grads = dict[int, np.ndarray]


class NonFiniteError(FloatingPointError):
    """A value on the tape became NaN or infinite."""


class TapeError(RuntimeError):
    pass


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got {arr.ndim}-d array")
    return arr


def _check_finite(value: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite value in {what}")


@dataclass
class _Node:
    value: np.ndarray
    parents: tuple[int, ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None
    requires_grad: bool
    op: str


class Variable:
    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def requires_grad(self) -> bool:
        return self.tape.nodes[self.index].requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Variable(#{self.index} {node.op} {self.shape})"


class Tape:
    """Append-only record of operations; supports one backward pass."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._consumed = False

    def leaf(self, value, requires_grad: bool = True) -> Variable:
        arr = _as_matrix(value)
        _check_finite(arr, "leaf")
        arr.setflags(write=False)
        return self._push(_Node(arr, (), None, requires_grad, "leaf"))

    def constant(self, value) -> Variable:
        return self.leaf(value, requires_grad=False)

    def record(self, op: str, value: np.ndarray, parents: Sequence[Variable], vjp) -> Variable:
        for p in parents:
            if p.tape is not self:
                raise TapeError("operands belong to a different tape")
        if self._consumed:
            raise TapeError("tape already differentiated")
        _check_finite(value, op)
        value.setflags(write=False)
        req = any(p.requires_grad for p in parents)
        return self._push(_Node(value, tuple(p.index for p in parents), vjp if req else None, req, op))

    def _push(self, node: _Node) -> Variable:
        self.nodes.append(node)
        return Variable(self, len(self.nodes) - 1)

    def backward(self, loss: Variable) -> Grads:
        """Accumulate adjoints from a 1×1 ``loss``.

        Returns a map node index -> gradient for every node that requires a
        gradient. Nodes the loss does not depend on get zero matrices.
        """
        if self._consumed:
            raise TapeError("backward already called on this tape")
        if loss.tape is not self:
            raise TapeError("loss belongs to a different tape")
        if loss.shape != (1, 1):
            raise TapeError(f"loss must be 1×1, got {loss.shape}")
        self._consumed = True
        adj: dict[int, np.ndarray] = {loss.index: np.ones((1, 1))}
        for i in range(loss.index, -1, -1):
            g = adj.get(i)
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not self.nodes[parent].requires_grad:
                    continue
                if parent in adj:
                    adj[parent] = adj[parent] + pg
                else:
                    adj[parent] = pg
        return {i: adj.get(i, np.zeros_like(node.value))
                for i, node in enumerate(self.nodes) if node.requires_grad}


def _same_shape(a: Variable, b: Variable, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def op_matmul(a: Variable, b: Variable) -> Variable:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return a.tape.record("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def op_spmm(s: SparseMatrix, b: Variable) -> Variable:
    if s.shape[1] != b.shape[0]:
        raise ValueError(f"spmm: cannot multiply {s.shape} by {b.shape}")
    st = s.transpose()
    return b.tape.record("spmm", s.matmul(b.value), (b,), lambda g: (st.matmul(g),))


def op_add(a: Variable, b: Variable) -> Variable:
    _same_shape(a, b, "add")
    return a.tape.record("add", a.value + b.value, (a, b), lambda g: (g, g))


def op_sub(a: Variable, b: Variable) -> Variable:
    _same_shape(a, b, "sub")
    return a.tape.record("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def op_scale(a: Variable, c: float) -> Variable:
    c = float(c)
    return a.tape.record("scale", a.value * c, (a,), lambda g: (g * c,))


def op_transpose(a: Variable) -> Variable:
    return a.tape.record("transpose", a.value.T.copy(), (a,), lambda g: (g.T.copy(),))


def op_add_row_bias(a: Variable, bias: Variable) -> Variable:
    if bias.shape != (1, a.shape[1]):
        raise ValueError(f"add_row_bias: bias must be 1×{a.shape[1]}, got {bias.shape}")
    return a.tape.record("add_row_bias", a.value + bias.value, (a, bias),
                         lambda g: (g, g.sum(axis=0, keepdims=True)))


def op_tanh(a: Variable) -> Variable:
    y = np.tanh(a.value)
    return a.tape.record("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def op_sigmoid(a: Variable) -> Variable:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-a.value))
    return a.tape.record("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def op_mse(pred: Variable, target) -> Variable:
    """Mean squared error against a constant target, as a 1×1 Variable."""
    t = _as_matrix(target)
    if pred.shape != t.shape:
        raise ValueError(f"mse: shape mismatch {pred.shape} vs {t.shape}")
    diff = pred.value - t
    count = diff.size
    value = np.array([[np.sum(diff * diff) / count]])
    return pred.tape.record("mse", value, (pred,), lambda g: (g[0, 0] * 2.0 * diff / count,))


def grad_check(build: Callable[[list[Variable]], Variable], params: Sequence[np.ndarray],
               h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``build`` receives one leaf Variable per parameter (on a fresh tape) and
    must return the scalar loss.
    """
    params = [_as_matrix(p) for p in params]

    def evaluate(values):
        tape = Tape()
        loss = build([tape.leaf(v) for v in values])
        return tape, loss

    tape, loss = evaluate(params)
    leaves = [Variable(tape, i) for i in range(len(params))]
    grads = tape.backward(loss)
    worst = 0.0
    for k, p in enumerate(params):
        analytic = grads[leaves[k].index]
        for idx in np.ndindex(p.shape):
            probes = []
            for sign in (1.0, -1.0):
                shifted = [q.copy() for q in params]
                shifted[k][idx] += sign * h
                _, val = evaluate(shifted)
                f = float(val.value[0, 0])
                if not np.isfinite(f):
                    raise NonFiniteError(f"non-finite loss probing parameter {k} at {idx}")
                probes.append(f)
            numeric = (probes[0] - probes[1]) / (2.0 * h)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
