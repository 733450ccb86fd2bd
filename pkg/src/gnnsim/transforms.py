"""Density profiling, format conversion, and layout transposition.

These mirror the accelerator's auxiliary hardware units: a comparator
profiler, dense<->sparse converters, and a layout transformation unit.
Each is a pure function over immutable matrices; `transform_cycle_cost`
reports what the streaming hardware would charge (hidden from the
makespan by double buffering unless visible-overhead mode is on).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FormatError
from .matrices import CooMatrix, DenseMatrix, Layout, MatrixRef


@dataclass(frozen=True)
class DensityRecord:
    """Nonzero census of a matrix: density == nnz / total."""

    nnz: int
    total: int

    @property
    def density(self) -> float:
        return self.nnz / self.total if self.total else 0.0


class TransformKind(Enum):
    D2S = "d2s"
    S2D = "s2d"
    LAYOUT_FLIP = "layout_flip"
    PROFILE = "profile"


def profile_density(m: MatrixRef) -> DensityRecord:
    """Exact nonzero count; an element is nonzero iff value != 0.0.

    Negative zero compares equal to zero, matching the comparator-array
    semantics of the hardware profiler.
    """
    total = m.rows * m.cols
    if isinstance(m, DenseMatrix):
        return DensityRecord(int(np.count_nonzero(m.values)), total)
    # Canonical COO stores no explicit zeros.
    return DensityRecord(m.nnz, total)


def dense_to_sparse(m: DenseMatrix) -> CooMatrix:
    """Dense to canonical COO, keeping the input's layout order."""
    a = m.to_2d()
    ri, ci = np.nonzero(a)
    return CooMatrix(m.rows, m.cols, m.layout, ri.astype(np.int64), ci.astype(np.int64), a[ri, ci])


def sparse_to_dense(m: CooMatrix) -> DenseMatrix:
    """Canonical COO to dense with zeros at absent coordinates."""
    flat = m.row_idx * m.cols + m.col_idx
    if flat.size and np.unique(flat).size != flat.size:
        raise FormatError("COO matrix carries duplicate coordinates")
    a = np.zeros((m.rows, m.cols), dtype=np.float32)
    a[m.row_idx, m.col_idx] = m.vals
    return DenseMatrix.from_2d(a, m.layout)


def transform_layout(m: MatrixRef, target: Layout) -> MatrixRef:
    """Re-store the same logical matrix under the target layout order."""
    if m.layout is target:
        return m
    if isinstance(m, DenseMatrix):
        order = "C" if target is Layout.ROW_MAJOR else "F"
        return DenseMatrix(m.rows, m.cols, target, m.to_2d().flatten(order=order))
    return CooMatrix(m.rows, m.cols, target, m.row_idx, m.col_idx, m.vals)


def transform_cycle_cost(kind: TransformKind, elements: int, lane_width: int = 16) -> int:
    """Cycles a streaming transform unit spends on `elements` items.

    The hardware units process `lane_width` elements per cycle (16
    matches one DDR channel word per cycle), so the cost is a plain
    ceiling division regardless of kind.
    """
    if lane_width < 1:
        raise ValueError(f"lane_width must be >= 1, got {lane_width}")
    if elements < 0:
        raise ValueError(f"element count must be >= 0, got {elements}")
    del kind  # all units share the same throughput model
    return math.ceil(elements / lane_width)
