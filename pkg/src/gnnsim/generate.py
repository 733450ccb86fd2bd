"""Synthetic graphs, feature matrices, and prunable weights.

Generators draw from a caller-supplied numpy Generator so every
artifact is a pure function of (parameters, seed). Nonzero supports
are sampled with exact counts, so a requested density is hit up to
rounding. Values default to the strictly positive range (0.1, 1.0);
pass signed=True for symmetric values.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .matrices import CooMatrix, DenseMatrix, Layout
from .model import ModelSpec, ModelKind


def _check_density(density: float) -> None:
    if not (0.0 <= density <= 1.0):
        raise ConfigError(f"density must lie in [0, 1], got {density}")


def _sample_support(total: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """`count` distinct flat indices in [0, total), uniformly."""
    if count == 0:
        return np.empty(0, dtype=np.int64)
    chosen = np.empty(0, dtype=np.int64)
    while chosen.size < count:
        extra = rng.integers(0, total, size=2 * (count - chosen.size) + 16)
        chosen = np.unique(np.concatenate([chosen, extra]))
    return rng.permutation(chosen)[:count]


def _values(count: int, rng: np.random.Generator, signed: bool) -> np.ndarray:
    v = rng.uniform(0.1, 1.0, size=count).astype(np.float32)
    if signed:
        v *= rng.choice(np.array([-1.0, 1.0], dtype=np.float32), size=count)
    return v


def erdos_renyi_graph(
    num_vertices: int, density: float, rng: np.random.Generator
) -> CooMatrix:
    """Adjacency with round(density * V^2) uniformly placed unit edges."""
    _check_density(density)
    total = num_vertices * num_vertices
    count = round(density * total)
    flat = _sample_support(total, count, rng)
    return CooMatrix(
        num_vertices,
        num_vertices,
        Layout.ROW_MAJOR,
        flat // num_vertices,
        flat % num_vertices,
        np.ones(count, dtype=np.float32),
    )


def powerlaw_graph(
    num_vertices: int, density: float, rng: np.random.Generator, exponent: float = 2.5
) -> CooMatrix:
    """Skewed-degree adjacency with roughly the requested density.

    Out-degrees follow a clipped zipf draw rescaled to the target edge
    count; duplicate endpoints coalesce, so the realized density can
    land slightly under the request.
    """
    _check_density(density)
    target_edges = round(density * num_vertices * num_vertices)
    raw = rng.zipf(exponent, size=num_vertices).astype(np.float64)
    raw = np.minimum(raw, num_vertices - 1) if num_vertices > 1 else raw
    scale = target_edges / raw.sum() if raw.sum() > 0 else 0.0
    degrees = np.floor(raw * scale).astype(np.int64)
    deficit = target_edges - int(degrees.sum())
    if deficit > 0:
        bump = rng.choice(num_vertices, size=deficit, replace=True)
        np.add.at(degrees, bump, 1)
    src = np.repeat(np.arange(num_vertices, dtype=np.int64), degrees)
    dst = rng.integers(0, num_vertices, size=src.size)
    return CooMatrix(
        num_vertices, num_vertices, Layout.ROW_MAJOR,
        src, dst, np.ones(src.size, dtype=np.float32),
    )


def random_graph(
    num_vertices: int,
    density: float | None = None,
    avg_degree: float | None = None,
    kind: str = "er",
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> CooMatrix:
    if (density is None) == (avg_degree is None):
        raise ConfigError("specify exactly one of density / avg_degree")
    if density is None:
        density = avg_degree / num_vertices
    rng = rng if rng is not None else np.random.default_rng(seed)
    if kind == "er":
        return erdos_renyi_graph(num_vertices, density, rng)
    if kind == "powerlaw":
        return powerlaw_graph(num_vertices, density, rng)
    raise ConfigError(f"unknown graph kind {kind!r} (expected er or powerlaw)")


def random_features(
    num_vertices: int,
    dim: int,
    density: float,
    rng: np.random.Generator,
    signed: bool = False,
) -> DenseMatrix:
    """Feature matrix with an exact-count random support."""
    _check_density(density)
    total = num_vertices * dim
    count = round(density * total)
    flat = _sample_support(total, count, rng)
    a = np.zeros(total, dtype=np.float32)
    a[flat] = _values(count, rng, signed)
    return DenseMatrix(num_vertices, dim, Layout.ROW_MAJOR, a)


def random_weights(
    f_in: int, f_out: int, rng: np.random.Generator, signed: bool = False
) -> DenseMatrix:
    """Fully dense weight matrix, scaled by 1/sqrt(f_in) to keep
    activations O(1) through a layer."""
    v = _values(f_in * f_out, rng, signed) / np.float32(math.sqrt(f_in))
    return DenseMatrix(f_in, f_out, Layout.ROW_MAJOR, v)


def prune_by_magnitude(w: DenseMatrix, density: float) -> DenseMatrix:
    """Keep the round(density * size) largest-magnitude entries.

    Ties break toward earlier storage positions, so pruning is
    deterministic. The realized density differs from the request by at
    most one entry's worth (1 / size).
    """
    if density > 1.0 or density < 0.0:
        raise ConfigError(f"pruning density must lie in [0, 1], got {density}")
    size = w.values.size
    keep = round(density * size)
    if keep >= size:
        return w
    order = np.argsort(-np.abs(w.values), kind="stable")
    out = np.zeros(size, dtype=np.float32)
    sel = order[:keep]
    out[sel] = w.values[sel]
    return DenseMatrix(w.rows, w.cols, w.layout, out)


def model_weights(
    spec: ModelSpec, rng: np.random.Generator, signed: bool = False
) -> dict[str, DenseMatrix]:
    """Fresh full-density weights for every slot of a model."""
    return {
        wid: random_weights(shape[0], shape[1], rng, signed)
        for wid, shape in spec.weight_slots()
    }


def prune_weights(
    weights: dict[str, DenseMatrix], density: float
) -> dict[str, DenseMatrix]:
    return {wid: prune_by_magnitude(w, density) for wid, w in weights.items()}
