"""The three execution modes of a simulated computation core.

Each kernel computes Z = acc + X*Y and reports the cycles the core's
p_sys x p_sys ALU array would take:

  GEMM   dense x dense, blind to zeros, p_sys^2 MACs/cycle
  SpDMM  sparse x dense scatter-gather, skips zeros of the sparse
         operand, p_sys^2/2 MACs/cycle
  SPMM   sparse x sparse row-wise product, skips zeros of both
         operands, p_sys MACs/cycle

All kernels accumulate each output element in ascending inner-dimension
order, so on identical inputs they agree bit-for-bit with
`dense_matmul_oracle` (skipped terms are exact zeros).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .matrices import CooMatrix, DenseMatrix, Layout


class PrimitiveKind(Enum):
    GEMM = "gemm"
    SPDMM = "spdmm"
    SPMM = "spmm"


@dataclass(frozen=True)
class CoreConfig:
    """Shape parameters of one computation core.

    p_sys is the ALU array dimension (>= 8); lane_width is the width of
    the streaming transform units.
    """

    p_sys: int = 16
    lane_width: int = 16

    def __post_init__(self):
        if self.p_sys < 8:
            raise ConfigError(f"p_sys must be >= 8, got {self.p_sys}")
        if self.lane_width < 1:
            raise ConfigError(f"lane_width must be >= 1, got {self.lane_width}")


@dataclass(frozen=True)
class ExecResult:
    output: DenseMatrix
    compute_cycles: int
    macs_executed: int


def _check_product_shapes(xshape, yshape, acc: DenseMatrix) -> None:
    m, n = xshape
    n2, d = yshape
    if n != n2:
        raise ShapeError(f"cannot multiply {xshape} by {yshape}")
    if acc.shape != (m, d):
        raise ShapeError(f"accumulator shape {acc.shape} != output shape {(m, d)}")
    if acc.layout is not Layout.ROW_MAJOR:
        raise FormatError("result buffer holds dense row-major data")


def exec_gemm(x: DenseMatrix, y: DenseMatrix, acc: DenseMatrix, cfg: CoreConfig) -> ExecResult:
    """Systolic-array GEMM: blind dense product added onto acc.

    The core expects X row-major and Y column-major (the runtime flips
    layouts before loading). Cycles cover every p x p tile of the
    iteration space whether or not it holds nonzeros.
    """
    if x.layout is not Layout.ROW_MAJOR or y.layout is not Layout.COL_MAJOR:
        raise FormatError("GEMM mode needs X row-major and Y column-major")
    _check_product_shapes(x.shape, y.shape, acc)
    m, n, d = x.rows, x.cols, y.cols
    p = cfg.p_sys
    xa, ya = x.to_2d(), y.to_2d()
    out = np.array(acc.to_2d(), dtype=np.float32)
    for k in range(n):
        out += xa[:, k, None] * ya[None, k, :]
    cycles = math.ceil(m / p) * math.ceil(n / p) * math.ceil(d / p) * p
    return ExecResult(DenseMatrix.from_2d(out), cycles, m * n * d)


def exec_spdmm(sparse_x: CooMatrix, dense_y: DenseMatrix, acc: DenseMatrix, cfg: CoreConfig) -> ExecResult:
    """Scatter-gather sparse x dense product added onto acc.

    For each nonzero X[r][c] = v the core fetches row Y[c] and updates
    Z[r] += v * Y[c]; only the sparse operand's nonzeros cost cycles.
    """
    if dense_y.layout is not Layout.ROW_MAJOR:
        raise FormatError("SpDMM mode needs the dense operand row-major")
    _check_product_shapes(sparse_x.shape, dense_y.shape, acc)
    if sparse_x.nnz == 0:
        return ExecResult(acc, 0, 0)
    d = dense_y.cols
    ya = dense_y.to_2d()
    out = np.array(acc.to_2d(), dtype=np.float32)
    rows = sparse_x.row_idx
    cols = sparse_x.col_idx
    vals = sparse_x.vals
    if sparse_x.layout is Layout.COL_MAJOR:
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
    for r, c, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
        out[r] += np.float32(v) * ya[c]
    nnz = sparse_x.nnz
    cycles = math.ceil(nnz * d * 2 / cfg.p_sys**2)
    return ExecResult(DenseMatrix.from_2d(out), cycles, nnz * d)


def exec_spmm(sparse_x: CooMatrix, sparse_y: CooMatrix, acc: DenseMatrix, cfg: CoreConfig) -> ExecResult:
    """Row-wise sparse x sparse product added onto acc.

    Output row j accumulates v * Y[c] over the nonzeros X[j][c], and
    each update touches only the nonzeros of row Y[c]. Cycles charge
    the exact number of nonzero pairs, one pipeline lane per cycle.
    """
    if sparse_x.layout is not Layout.ROW_MAJOR or sparse_y.layout is not Layout.ROW_MAJOR:
        raise FormatError("SPMM mode needs both operands row-major")
    _check_product_shapes(sparse_x.shape, sparse_y.shape, acc)
    if sparse_x.nnz == 0 or sparse_y.nnz == 0:
        return ExecResult(acc, 0, 0)
    out = np.array(acc.to_2d(), dtype=np.float32)
    # Row start offsets of Y (canonical row-major COO is sorted by row).
    y_start = np.searchsorted(sparse_y.row_idx, np.arange(sparse_y.rows + 1))
    y_cols = sparse_y.col_idx
    y_vals = sparse_y.vals
    pairs = 0
    for r, c, v in zip(
        sparse_x.row_idx.tolist(), sparse_x.col_idx.tolist(), sparse_x.vals.tolist()
    ):
        lo, hi = y_start[c], y_start[c + 1]
        if lo == hi:
            continue
        out[r, y_cols[lo:hi]] += np.float32(v) * y_vals[lo:hi]
        pairs += int(hi - lo)
    cycles = math.ceil(pairs / cfg.p_sys)
    if cycles == 0:
        return ExecResult(acc, 0, 0)
    return ExecResult(DenseMatrix.from_2d(out), cycles, pairs)


def mode_switch_cost() -> int:
    """Cycles to reconfigure a core between two different modes."""
    return 1
