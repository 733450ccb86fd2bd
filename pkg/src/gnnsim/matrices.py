"""Dense and COO sparse matrix types with explicit storage layout.

All numeric payloads use 32-bit IEEE float semantics (the precision the
modeled accelerator computes in). Matrices are immutable after
construction and safe to share across workers.

`dense_matmul_oracle` is the ground-truth multiplier every execution
primitive is checked against: it accumulates strictly in ascending
inner-dimension order, so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Union

import numpy as np

from .errors import FormatError, ShapeError


class Layout(Enum):
    """Storage order of matrix elements."""

    ROW_MAJOR = "row_major"
    COL_MAJOR = "col_major"


class ActivationKind(Enum):
    RELU = "relu"
    PRELU = "prelu"


@dataclass(frozen=True)
class DenseMatrix:
    """Dense matrix stored as a flat float32 buffer.

    Element (i, j) lives at i*cols + j for ROW_MAJOR storage and at
    j*rows + i for COL_MAJOR.
    """

    rows: int
    cols: int
    layout: Layout
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32).ravel()
        if vals.size != self.rows * self.cols:
            raise ShapeError(
                f"dense buffer has {vals.size} values, expected {self.rows}x{self.cols}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_2d(cls, array, layout: Layout = Layout.ROW_MAJOR) -> "DenseMatrix":
        a = np.asarray(array, dtype=np.float32)
        if a.ndim != 2:
            raise ShapeError(f"expected a 2-D array, got ndim={a.ndim}")
        order = "C" if layout is Layout.ROW_MAJOR else "F"
        return cls(a.shape[0], a.shape[1], layout, a.flatten(order=order))

    @classmethod
    def zeros(cls, rows: int, cols: int, layout: Layout = Layout.ROW_MAJOR) -> "DenseMatrix":
        return cls(rows, cols, layout, np.zeros(rows * cols, dtype=np.float32))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def to_2d(self) -> np.ndarray:
        """Logical matrix as a read-only 2-D array (row-index first)."""
        order = "C" if self.layout is Layout.ROW_MAJOR else "F"
        out = self.values.reshape((self.rows, self.cols), order=order)
        out.setflags(write=False)
        return out

    def at(self, i: int, j: int) -> float:
        if self.layout is Layout.ROW_MAJOR:
            return float(self.values[i * self.cols + j])
        return float(self.values[j * self.rows + i])


@dataclass(frozen=True)
class CooMatrix:
    """Coordinate-format sparse matrix in canonical form.

    Canonical means: duplicate coordinates coalesced by summation,
    exact-zero values dropped, and entries sorted by (row, col) for
    ROW_MAJOR layout or (col, row) for COL_MAJOR.
    """

    rows: int
    cols: int
    layout: Layout
    row_idx: np.ndarray = field(repr=False)
    col_idx: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)

    def __post_init__(self):
        ri = np.asarray(self.row_idx, dtype=np.int64).ravel()
        ci = np.asarray(self.col_idx, dtype=np.int64).ravel()
        vv = np.asarray(self.vals, dtype=np.float32).ravel()
        if not (ri.size == ci.size == vv.size):
            raise FormatError("row/col/value arrays must have equal length")
        if ri.size:
            if ri.min() < 0 or ri.max() >= self.rows or ci.min() < 0 or ci.max() >= self.cols:
                raise ShapeError(
                    f"entry index out of range for {self.rows}x{self.cols} matrix"
                )
            # Coalesce duplicates by summation, then drop exact zeros.
            flat = ri * self.cols + ci
            order = np.argsort(flat, kind="stable")
            flat = flat[order]
            vv = vv[order]
            uniq, start = np.unique(flat, return_index=True)
            if uniq.size != flat.size:
                vv = np.add.reduceat(vv.astype(np.float32), start)
                flat = uniq
            keep = vv != 0.0
            flat, vv = flat[keep], vv[keep]
            ri = flat // self.cols
            ci = flat % self.cols
            if self.layout is Layout.COL_MAJOR:
                order = np.lexsort((ri, ci))
                ri, ci, vv = ri[order], ci[order], vv[order]
        for a in (ri, ci, vv):
            a.setflags(write=False)
        object.__setattr__(self, "row_idx", ri)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "vals", vv.astype(np.float32))

    @classmethod
    def from_entries(
        cls, rows: int, cols: int, entries, layout: Layout = Layout.ROW_MAJOR
    ) -> "CooMatrix":
        """Build from an iterable of (row, col, value) triples."""
        entries = list(entries)
        if not entries:
            return cls.empty(rows, cols, layout)
        ri, ci, vv = zip(*entries)
        return cls(rows, cols, layout, np.array(ri), np.array(ci), np.array(vv))

    @classmethod
    def empty(cls, rows: int, cols: int, layout: Layout = Layout.ROW_MAJOR) -> "CooMatrix":
        return cls(
            rows,
            cols,
            layout,
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.float32),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def entries(self) -> Iterator[tuple[int, int, float]]:
        yield from zip(self.row_idx.tolist(), self.col_idx.tolist(), self.vals.tolist())

    def to_2d(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.float32)
        out[self.row_idx, self.col_idx] = self.vals
        out.setflags(write=False)
        return out


MatrixRef = Union[DenseMatrix, CooMatrix]


def shape_of(m: MatrixRef) -> tuple[int, int]:
    return m.shape


def is_dense(m: MatrixRef) -> bool:
    return isinstance(m, DenseMatrix)


def dense_matmul_oracle(x: DenseMatrix, y: DenseMatrix) -> DenseMatrix:
    """Reference product Z[i][j] = sum_k x[i][k] * y[k][j].

    Accumulates in ascending k order with one float32 rank-1 update per
    k, which performs the exact operation sequence of the naive triple
    loop (and is bit-identical to it). Output is ROW_MAJOR.
    """
    if x.cols != y.rows:
        raise ShapeError(f"cannot multiply {x.shape} by {y.shape}")
    xa = x.to_2d()
    ya = y.to_2d()
    acc = np.zeros((x.rows, y.cols), dtype=np.float32)
    for k in range(x.cols):
        acc += xa[:, k, None] * ya[None, k, :]
    return DenseMatrix.from_2d(acc)


def transpose(m: MatrixRef) -> MatrixRef:
    """Logical transpose, returned in the same layout family as the input."""
    if isinstance(m, DenseMatrix):
        return DenseMatrix.from_2d(m.to_2d().T, m.layout)
    return CooMatrix(m.cols, m.rows, m.layout, m.col_idx, m.row_idx, m.vals)


def _check_range(lo: int, hi: int, extent: int, what: str) -> None:
    if not (0 <= lo <= hi <= extent):
        raise ShapeError(f"{what} range [{lo}, {hi}) out of bounds for extent {extent}")


def slice_block(m: MatrixRef, row_range: tuple[int, int], col_range: tuple[int, int]) -> MatrixRef:
    """Sub-matrix over half-open index ranges, same format and layout.

    COO entry indices are re-based to the block origin. Ranges may be
    ragged at the matrix edge (the caller clips them).
    """
    r0, r1 = row_range
    c0, c1 = col_range
    _check_range(r0, r1, m.rows, "row")
    _check_range(c0, c1, m.cols, "col")
    if isinstance(m, DenseMatrix):
        sub = m.to_2d()[r0:r1, c0:c1]
        return DenseMatrix.from_2d(sub, m.layout)
    keep = (m.row_idx >= r0) & (m.row_idx < r1) & (m.col_idx >= c0) & (m.col_idx < c1)
    return CooMatrix(
        r1 - r0, c1 - c0, m.layout, m.row_idx[keep] - r0, m.col_idx[keep] - c0, m.vals[keep]
    )


def elementwise_activation(
    m: DenseMatrix, kind: ActivationKind, slope: float = 0.0
) -> DenseMatrix:
    """Apply ReLU or PReLU per element, preserving shape and layout."""
    v = m.values
    if kind is ActivationKind.RELU:
        out = np.maximum(v, np.float32(0.0))
    elif kind is ActivationKind.PRELU:
        out = np.where(v >= 0.0, v, np.float32(slope) * v)
    else:
        raise ValueError(f"unknown activation kind: {kind!r}")
    return DenseMatrix(m.rows, m.cols, m.layout, out.astype(np.float32))
