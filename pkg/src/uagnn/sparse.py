"""Compressed-sparse-row matrices used as constant graph operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix of 64-bit reals.

    Column indices are strictly increasing inside each row, so a given
    (row, col) position is stored at most once.
    """

    shape: tuple[int, int]
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self) -> None:
        rows, cols = self.shape
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if rows < 0 or cols < 0:
            raise ValueError(f"negative shape {self.shape}")
        if indptr.shape != (rows + 1,) or indptr[0] != 0:
            raise ValueError("row offsets must have length rows+1 and start at 0")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("row offsets must be non-decreasing")
        if indptr[-1] != len(indices) or len(indices) != len(data):
            raise ValueError("value count must equal the final row offset")
        if len(indices) and (indices.min() < 0 or indices.max() >= cols):
            raise ValueError("column index out of bounds")
        if len(indices) > 1:
            row_of = np.repeat(np.arange(rows), np.diff(indptr))
            same_row = row_of[1:] == row_of[:-1]
            bad = same_row & (np.diff(indices) <= 0)
            if np.any(bad):
                r = int(row_of[1:][bad][0])
                raise ValueError(f"column indices not strictly increasing in row {r}")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        object.__setattr__(self, "shape", (int(rows), int(cols)))
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_coo(cls, rows, cols, values, shape: tuple[int, int]) -> SparseMatrix:
        """Build from coordinate triplets; duplicate positions are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        n_rows, n_cols = shape
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of bounds")
        if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("column index out of bounds")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if len(rows):
            first = np.ones(len(rows), dtype=bool)
            first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(first)
            values = np.add.reduceat(values, starts)
            rows, cols = rows[starts], cols[starts]
        counts = np.bincount(rows, minlength=n_rows)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return cls((n_rows, n_cols), indptr, cols, values)

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> SparseMatrix:
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls.from_coo(r, c, dense[r, c], dense.shape)

    @classmethod
    def identity(cls, n: int) -> SparseMatrix:
        idx = np.arange(n)
        return cls((n, n), np.arange(n + 1), idx, np.ones(n))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> SparseMatrix:
        return cls((rows, cols), np.zeros(rows + 1, dtype=np.int64), [], [])

    @property
    def nnz(self) -> int:
        return len(self.data)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored value."""
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def row(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[r], self.indptr[r + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def transpose(self) -> SparseMatrix:
        cached = self.__dict__.get("_transpose")
        if cached is None:
            cached = SparseMatrix.from_coo(self.indices, self.row_ids(), self.data,
                                           (self.shape[1], self.shape[0]))
            object.__setattr__(self, "_transpose", cached)
        return cached

    @property
    def T(self) -> SparseMatrix:
        return self.transpose()

    def diagonal(self) -> np.ndarray:
        n = min(self.shape)
        out = np.zeros(n)
        rows = self.row_ids()
        mask = rows == self.indices
        out[rows[mask]] = self.data[mask]
        return out

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_ids(), weights=self.data, minlength=self.shape[0])

    def is_symmetric(self, atol: float = 0.0) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        t = self.transpose()
        if not (np.array_equal(self.indptr, t.indptr) and np.array_equal(self.indices, t.indices)):
            return False
        return bool(np.all(np.abs(self.data - t.data) <= atol))

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """Sparse times dense, summing each row's products in stored order."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != self.shape[1]:
            raise ValueError(f"cannot multiply {self.shape} by {dense.shape}")
        out = np.zeros((self.shape[0], dense.shape[1]))
        if self.nnz == 0:
            return out
        products = self.data[:, None] * dense[self.indices]
        nonempty = np.flatnonzero(np.diff(self.indptr))
        out[nonempty] = np.add.reduceat(products, self.indptr[nonempty], axis=0)
        return out

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        return self.matmul(other)
