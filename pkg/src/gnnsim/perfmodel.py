"""Analytical cost model and the closed-form primitive selector.

The model predicts execution cycles for a pair multiplication
Z = X (m x n) * Y (n x d) from the operand densities alone:

  GEMM   mnd / p^2
  SpDMM  min(ax, ay) * 2mnd / p^2
  SPMM   ax * ay * mnd / p

which partitions the density domain into three non-overlapping regions:
GEMM wins at a_min >= 1/2, SpDMM at a_min < 1/2 and a_max >= 2/p, SPMM
otherwise; empty operands are skipped outright.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ModelInconsistencyError
from .primitives import PrimitiveKind


class SparseSide(Enum):
    LEFT = "left"
    RIGHT = "right"
    NONE = "none"


@dataclass(frozen=True)
class PairDecision:
    """Outcome of analyzing one pair multiplication.

    choice is None when the pair is skipped (an empty operand).
    predicted_cycles is filled when the pair's shape is known.
    """

    choice: PrimitiveKind | None
    sparse_operand: SparseSide
    predicted_cycles: int | None = None

    @property
    def skipped(self) -> bool:
        return self.choice is None


def _check_density(a: float, name: str) -> None:
    if not (0.0 <= a <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {a}")


def predict_cycles(
    kind: PrimitiveKind, m: int, n: int, d: int, ax: float, ay: float, p_sys: int
) -> int:
    """Modeled cycles for one primitive on an (m, n, d) pair."""
    _check_density(ax, "ax")
    _check_density(ay, "ay")
    if min(m, n, d) < 1:
        raise ValueError(f"dimensions must be >= 1, got {(m, n, d)}")
    work = m * n * d
    if kind is PrimitiveKind.GEMM:
        return math.ceil(work / p_sys**2)
    if kind is PrimitiveKind.SPDMM:
        return math.ceil(min(ax, ay) * 2 * work / p_sys**2)
    return math.ceil(ax * ay * work / p_sys)


def select_primitive(
    ax: float, ay: float, p_sys: int, shape: tuple[int, int, int] | None = None
) -> PairDecision:
    """Pick the cheapest primitive for the given operand densities.

    Boundary ties resolve toward the denser mode: GEMM claims
    a_min == 1/2 and SpDMM claims a_max == 2/p_sys. For SpDMM the
    sparse operand is the lower-density side (left on an exact tie).
    When `shape` is supplied the decision carries its predicted cycles.
    """
    _check_density(ax, "ax")
    _check_density(ay, "ay")
    a_min = min(ax, ay)
    a_max = max(ax, ay)
    if a_min == 0.0:
        return PairDecision(None, SparseSide.NONE, 0)
    if a_min >= 0.5:
        choice, side = PrimitiveKind.GEMM, SparseSide.NONE
    elif a_max >= 2 / p_sys:
        choice = PrimitiveKind.SPDMM
        side = SparseSide.LEFT if ax <= ay else SparseSide.RIGHT
    else:
        choice, side = PrimitiveKind.SPMM, SparseSide.NONE
    cycles = None
    if shape is not None:
        cycles = predict_cycles(choice, *shape, ax, ay, p_sys)
    return PairDecision(choice, side, cycles)


@dataclass(frozen=True)
class RegionReport:
    """Result of the exhaustive density-grid consistency check."""

    p_sys: int
    step: float
    points_checked: int
    region_counts: dict[str, int]


def region_partition_check(p_sys: int, step: float = 0.01) -> RegionReport:
    """Verify the three regions tile the density domain consistently.

    Sweeps (a_min, a_max) with 0 <= a_min <= a_max <= 1 on the given
    grid and asserts that exactly one region claims each point and that
    the selector's choice attains the minimum predicted cycles there
    (ties land on the selector's pick). Raises ModelInconsistencyError
    on any violation.
    """
    if p_sys < 8:
        raise ValueError(f"p_sys must be >= 8, got {p_sys}")
    # Divisible shape so ceilings do not distort the comparison.
    shape = (4 * p_sys, 4 * p_sys, 4 * p_sys)
    steps = round(1.0 / step)
    counts = {"gemm": 0, "spdmm": 0, "spmm": 0, "skip": 0}
    checked = 0
    for i in range(steps + 1):
        a_min = i / steps
        for j in range(i, steps + 1):
            a_max = j / steps
            in_gemm = a_min >= 0.5
            in_spdmm = a_min < 0.5 and a_max >= 2 / p_sys
            in_spmm = a_min < 0.5 and a_max < 2 / p_sys
            if in_gemm + in_spdmm + in_spmm != 1:
                raise ModelInconsistencyError(
                    f"point ({a_min}, {a_max}) claimed by {in_gemm + in_spdmm + in_spmm} regions"
                )
            decision = select_primitive(a_min, a_max, p_sys, shape=shape)
            best = min(
                predict_cycles(kind, *shape, a_min, a_max, p_sys) for kind in PrimitiveKind
            )
            if decision.skipped:
                if best != 0:
                    raise ModelInconsistencyError(
                        f"skip at ({a_min}, {a_max}) but cheapest primitive costs {best}"
                    )
                counts["skip"] += 1
            else:
                if decision.predicted_cycles != best:
                    raise ModelInconsistencyError(
                        f"selector chose {decision.choice.value} at ({a_min}, {a_max}) "
                        f"costing {decision.predicted_cycles}, argmin costs {best}"
                    )
                region = (
                    "gemm" if in_gemm else "spdmm" if in_spdmm else "spmm"
                )
                expected = {
                    "gemm": PrimitiveKind.GEMM,
                    "spdmm": PrimitiveKind.SPDMM,
                    "spmm": PrimitiveKind.SPMM,
                }[region]
                if decision.choice is not expected:
                    raise ModelInconsistencyError(
                        f"selector chose {decision.choice.value} inside the {region} region "
                        f"at ({a_min}, {a_max})"
                    )
                counts[region] += 1
            checked += 1
    return RegionReport(p_sys, step, checked, counts)
