"""Compilation: kernel graph construction, partition sizing, and data
partitioning.

The compiler lowers a model description to an ordered DAG of matmul
kernels (plus elementwise merges), picks block sizes (N1, N2) with a
two-step minimax so every kernel yields enough tasks to keep the cores
busy, tiles all matrices, and profiles the densities that are known
before execution (adjacency, weights, input features). Densities of
intermediate feature matrices stay unknown until the runtime profiles
them at write-back.

Partition geometry: adjacency blocks are N1 x N1; feature matrices are
cut into N2 x N2 tiles, grouped into N1 x N2 fibers for aggregation;
weight blocks are N2 x N2. Edge blocks may be ragged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import CompileError, ConfigError, RuntimeOrderError
from .matrices import CooMatrix, DenseMatrix, Layout, MatrixRef, slice_block
from .model import (
    ActivationSpec,
    AdjacencyNorm,
    AggregationOp,
    LayerSpec,
    ModelKind,
    ModelSpec,
    weight_id,
)
from .transforms import DensityRecord, dense_to_sparse

logger = logging.getLogger(__name__)

MIN_BLOCK = 16
DEFAULT_MEM_BUDGET = 6 * 2**20  # bytes of on-chip buffer per core


class KernelType(Enum):
    AGGREGATE = "aggregate"
    UPDATE = "update"
    ELEMENTWISE_ADD = "elementwise_add"


@dataclass(frozen=True)
class GraphMeta:
    num_vertices: int
    num_edges: int


@dataclass(frozen=True)
class BlockKey:
    """Addresses one operand partition.

    kind "block" indexes the matrix's native grid; kind "fiber" indexes
    N1-row groups of a feature matrix (used by aggregate chains).
    """

    matrix_id: str
    kind: str
    i: int
    j: int


@dataclass(frozen=True)
class TaskDescriptor:
    """One output-partition computation: an accumulation chain of K
    partition-pair multiplications."""

    kernel_id: str
    kernel_type: KernelType
    out_block: tuple[int, int]
    out_rows: tuple[int, int]
    out_cols: tuple[int, int]
    chain: tuple[tuple[BlockKey, BlockKey], ...]

    @property
    def chain_length(self) -> int:
        return len(self.chain)


@dataclass(frozen=True)
class ExecutionScheme:
    n1: int
    n2: int
    tasks: tuple[TaskDescriptor, ...]


@dataclass
class KernelIR:
    """One node of the computation graph (meta data plus execution plan)."""

    kernel_id: str
    kernel_type: KernelType
    layer_id: int
    f_in: int
    f_out: int
    num_vertices: int
    num_edges: int
    aggregation: AggregationOp | None
    activation: ActivationSpec
    x_id: str
    y_id: str
    out_id: str
    deps: tuple[str, ...] = ()
    scheme: ExecutionScheme | None = None


INPUT_FEATURES_ID = "H:0"


def _adjacency_id(layer: LayerSpec) -> str:
    if layer.kind is ModelKind.GIN:
        return f"A:gin:{layer.gin_epsilon!r}"
    return f"A:{layer.resolved_norm().value}"


def build_computation_graph(spec: ModelSpec, graph_meta: GraphMeta) -> list[KernelIR]:
    """Lower a model description to an ordered kernel DAG.

    gcn layers emit [update, aggregate] (features are transformed
    before neighborhood aggregation); sage emits an aggregate, two
    updates, and an elementwise merge; gin pre-folds (1+eps)I into the
    adjacency and runs its two-layer MLP as two updates; sgc emits
    `hops` aggregates followed by a single update.
    """
    kernels: list[KernelIR] = []
    v, e = graph_meta.num_vertices, graph_meta.num_edges
    h_cur = INPUT_FEATURES_ID
    h_deps: tuple[str, ...] = ()

    def emit(ktype, layer_id, f_in, f_out, agg, act, x_id, y_id, deps):
        kid = f"k{len(kernels)}"
        kernels.append(
            KernelIR(
                kernel_id=kid,
                kernel_type=ktype,
                layer_id=layer_id,
                f_in=f_in,
                f_out=f_out,
                num_vertices=v,
                num_edges=e,
                aggregation=agg,
                activation=act,
                x_id=x_id,
                y_id=y_id,
                out_id=f"H:{kid}",
                deps=tuple(deps),
            )
        )
        return kernels[-1]

    for idx, layer in enumerate(spec.layers):
        if layer.aggregation in (AggregationOp.MAX, AggregationOp.MIN):
            raise CompileError(
                f"layer {idx}: {layer.aggregation.value} aggregation cannot be "
                "lowered to the matrix-multiply execution schemes; use sum or mean"
            )
        off = ActivationSpec.none()
        if layer.kind is ModelKind.GCN:
            upd = emit(
                KernelType.UPDATE, idx, layer.f_in, layer.f_out, None, off,
                h_cur, weight_id(idx, "w"), h_deps,
            )
            agg = emit(
                KernelType.AGGREGATE, idx, layer.f_out, layer.f_out,
                layer.aggregation, layer.activation,
                _adjacency_id(layer), upd.out_id, (upd.kernel_id,),
            )
            h_cur, h_deps = agg.out_id, (agg.kernel_id,)
        elif layer.kind is ModelKind.SAGE:
            agg = emit(
                KernelType.AGGREGATE, idx, layer.f_in, layer.f_in,
                layer.aggregation, off, _adjacency_id(layer), h_cur, h_deps,
            )
            upd_n = emit(
                KernelType.UPDATE, idx, layer.f_in, layer.f_out, None, off,
                agg.out_id, weight_id(idx, "w_neigh"), (agg.kernel_id,),
            )
            upd_s = emit(
                KernelType.UPDATE, idx, layer.f_in, layer.f_out, None, off,
                h_cur, weight_id(idx, "w_self"), h_deps,
            )
            add = emit(
                KernelType.ELEMENTWISE_ADD, idx, layer.f_out, layer.f_out, None,
                layer.activation, upd_n.out_id, upd_s.out_id,
                (upd_n.kernel_id, upd_s.kernel_id),
            )
            h_cur, h_deps = add.out_id, (add.kernel_id,)
        elif layer.kind is ModelKind.GIN:
            agg = emit(
                KernelType.AGGREGATE, idx, layer.f_in, layer.f_in,
                layer.aggregation, off, _adjacency_id(layer), h_cur, h_deps,
            )
            mlp_hidden = emit(
                KernelType.UPDATE, idx, layer.f_in, layer.f_out, None,
                ActivationSpec.relu(), agg.out_id, weight_id(idx, "w1"),
                (agg.kernel_id,),
            )
            mlp_out = emit(
                KernelType.UPDATE, idx, layer.f_out, layer.f_out, None,
                layer.activation, mlp_hidden.out_id, weight_id(idx, "w2"),
                (mlp_hidden.kernel_id,),
            )
            h_cur, h_deps = mlp_out.out_id, (mlp_out.kernel_id,)
        elif layer.kind is ModelKind.SGC:
            for _ in range(layer.sgc_hops):
                agg = emit(
                    KernelType.AGGREGATE, idx, layer.f_in, layer.f_in,
                    layer.aggregation, off, _adjacency_id(layer), h_cur, h_deps,
                )
                h_cur, h_deps = agg.out_id, (agg.kernel_id,)
            upd = emit(
                KernelType.UPDATE, idx, layer.f_in, layer.f_out, None,
                layer.activation, h_cur, weight_id(idx, "w"), h_deps,
            )
            h_cur, h_deps = upd.out_id, (upd.kernel_id,)
        else:
            raise CompileError(f"layer {idx}: unsupported layer kind {layer.kind!r}")
    return kernels


def normalize_adjacency(
    adjacency: MatrixRef, norm: AdjacencyNorm, gin_epsilon: float | None = None
) -> CooMatrix:
    """Apply the compile-time adjacency rewrite for one kernel family.

    sym scales entry (i, j) by 1/sqrt(d_i * d_j), row by 1/d_i, with
    d = row sum (isolated rows fall back to degree 1). A gin epsilon
    folds self loops in as A + (1 + eps) I before summation.
    """
    a = adjacency if isinstance(adjacency, CooMatrix) else dense_to_sparse(adjacency)
    if gin_epsilon is not None:
        if a.rows != a.cols:
            raise CompileError("adjacency matrix must be square")
        diag = np.arange(a.rows, dtype=np.int64)
        return CooMatrix(
            a.rows,
            a.cols,
            a.layout,
            np.concatenate([a.row_idx, diag]),
            np.concatenate([a.col_idx, diag]),
            np.concatenate(
                [a.vals, np.full(a.rows, 1.0 + gin_epsilon, dtype=np.float32)]
            ),
        )
    if norm is AdjacencyNorm.NONE:
        return a
    deg = np.zeros(a.rows, dtype=np.float32)
    np.add.at(deg, a.row_idx, a.vals)
    deg = np.where(deg > 0.0, deg, np.float32(1.0))
    if norm is AdjacencyNorm.ROW:
        scaled = a.vals / deg[a.row_idx]
    else:
        inv_sqrt = 1.0 / np.sqrt(deg)
        scaled = a.vals * inv_sqrt[a.row_idx] * inv_sqrt[a.col_idx]
    return CooMatrix(a.rows, a.cols, a.layout, a.row_idx, a.col_idx, scaled)


# ---------------------------------------------------------------------------
# Partition sizing (two-step minimax)
# ---------------------------------------------------------------------------


def max_partition_size(mem_budget: int) -> int:
    """Largest power-of-two N with three N x N float32 buffers (two
    operands plus the result block) fitting the per-core budget."""
    if 3 * MIN_BLOCK * MIN_BLOCK * 4 > mem_budget:
        raise ConfigError(
            f"memory budget {mem_budget} B cannot hold even {MIN_BLOCK}x{MIN_BLOCK} blocks"
        )
    n = MIN_BLOCK
    while 3 * (2 * n) ** 2 * 4 <= mem_budget:
        n *= 2
    return n


def _largest_feasible(pred, n_max: int, what: str) -> int:
    best = None
    n = MIN_BLOCK
    while n <= n_max:
        if pred(n):
            best = n
        n *= 2
    if best is None:
        logger.warning(
            "%s: no partition size in [%d, %d] meets the task-count target; "
            "falling back to %d (fewer tasks than cores want)",
            what, MIN_BLOCK, n_max, MIN_BLOCK,
        )
        return MIN_BLOCK
    return best


def choose_partition_sizes(
    workloads: list[tuple[KernelType, int]],
    mem_budget: int,
    n_cc: int,
    eta: int = 4,
) -> tuple[int, int]:
    """Pick (N1, N2) so each kernel yields >= eta * N_CC tasks.

    Step 1 fixes N2 from update kernels (T_u = Q / N2^2), step 2 fixes
    N1 from aggregate kernels (T_a = Q / (N1 * N2)); both maximize the
    block size subject to the task-count and memory constraints and
    take the minimum over kernels. Guarantees N2 <= N1 <= N_max.
    """
    if eta < 1:
        raise ConfigError(f"eta must be >= 1, got {eta}")
    if n_cc < 1:
        raise ConfigError(f"core count must be >= 1, got {n_cc}")
    n_max = max_partition_size(mem_budget)
    target = eta * n_cc
    n2 = n_max
    for ktype, q in workloads:
        if ktype is KernelType.UPDATE:
            n = _largest_feasible(lambda b: q / b**2 >= target, n_max, f"update Q={q}")
            n2 = min(n2, n)
    n1 = n_max
    for ktype, q in workloads:
        if ktype is KernelType.AGGREGATE:
            n = _largest_feasible(
                lambda b: q / (b * n2) >= target, n_max, f"aggregate Q={q}"
            )
            n1 = min(n1, n)
    return max(n1, n2), n2


def kernel_workloads(kernels: list[KernelIR]) -> list[tuple[KernelType, int]]:
    """Per-kernel Q values feeding the partition-size search."""
    out = []
    for k in kernels:
        if k.kernel_type is KernelType.AGGREGATE:
            out.append((k.kernel_type, k.num_vertices * k.f_in))
        elif k.kernel_type is KernelType.UPDATE:
            out.append((k.kernel_type, k.num_vertices * k.f_out))
    return out


# ---------------------------------------------------------------------------
# Data partitioning
# ---------------------------------------------------------------------------


def _grid_starts(extent: int, block: int) -> list[int]:
    return list(range(0, extent, block)) + [extent]


@dataclass
class PartitionedMatrix:
    """A matrix cut into a block grid, with per-block density records.

    Blocks materialize lazily from the source matrix (COO sources keep
    per-block entry buckets so slicing is O(block)). `fiber_rows`
    enables N1-row fiber access on feature matrices; it must be a
    multiple of the native block height.
    """

    matrix_id: str
    source: MatrixRef
    block_rows: int
    block_cols: int
    fiber_rows: int | None = None
    row_starts: list[int] = field(init=False)
    col_starts: list[int] = field(init=False)
    densities: list[list[DensityRecord]] | None = field(init=False, default=None)

    def __post_init__(self):
        if self.fiber_rows is not None and self.fiber_rows % self.block_rows:
            raise ConfigError(
                f"fiber height {self.fiber_rows} is not a multiple of the "
                f"block height {self.block_rows}"
            )
        self.row_starts = _grid_starts(self.source.rows, self.block_rows)
        self.col_starts = _grid_starts(self.source.cols, self.block_cols)
        self._buckets = None
        if isinstance(self.source, CooMatrix):
            self._build_buckets()
        self._profile()

    # -- geometry ----------------------------------------------------------

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (len(self.row_starts) - 1, len(self.col_starts) - 1)

    def block_shape(self, i: int, j: int) -> tuple[int, int]:
        return (
            self.row_starts[i + 1] - self.row_starts[i],
            self.col_starts[j + 1] - self.col_starts[j],
        )

    @property
    def fiber_grid_shape(self) -> tuple[int, int]:
        if self.fiber_rows is None:
            raise ConfigError(f"{self.matrix_id} was not partitioned with fibers")
        return (math.ceil(self.source.rows / self.fiber_rows), self.grid_shape[1])

    def fiber_row_range(self, g: int) -> tuple[int, int]:
        lo = g * self.fiber_rows
        return (lo, min(lo + self.fiber_rows, self.source.rows))

    def _fiber_block_rows(self, g: int) -> range:
        per = self.fiber_rows // self.block_rows
        return range(g * per, min((g + 1) * per, self.grid_shape[0]))

    def fiber_shape(self, g: int, j: int) -> tuple[int, int]:
        lo, hi = self.fiber_row_range(g)
        return (hi - lo, self.col_starts[j + 1] - self.col_starts[j])

    # -- contents ----------------------------------------------------------

    def _build_buckets(self):
        src = self.source
        nbr = len(self.row_starts) - 1
        nbc = len(self.col_starts) - 1
        bi = np.minimum(src.row_idx // self.block_rows, nbr - 1)
        bj = np.minimum(src.col_idx // self.block_cols, nbc - 1)
        key = bi * nbc + bj
        order = np.argsort(key, kind="stable")
        self._order = order
        sorted_key = key[order]
        bounds = np.searchsorted(sorted_key, np.arange(nbr * nbc + 1))
        self._bounds = bounds

    def block(self, i: int, j: int) -> MatrixRef:
        r0, r1 = self.row_starts[i], self.row_starts[i + 1]
        c0, c1 = self.col_starts[j], self.col_starts[j + 1]
        src = self.source
        if isinstance(src, DenseMatrix):
            return DenseMatrix.from_2d(src.to_2d()[r0:r1, c0:c1])
        nbc = len(self.col_starts) - 1
        lo, hi = self._bounds[i * nbc + j], self._bounds[i * nbc + j + 1]
        sel = self._order[lo:hi]
        return CooMatrix(
            r1 - r0, c1 - c0, src.layout,
            src.row_idx[sel] - r0, src.col_idx[sel] - c0, src.vals[sel],
        )

    def fiber(self, g: int, j: int) -> MatrixRef:
        lo, hi = self.fiber_row_range(g)
        return slice_block(
            self.source, (lo, hi), (self.col_starts[j], self.col_starts[j + 1])
        )

    # -- densities ---------------------------------------------------------

    def _profile(self):
        nbr, nbc = self.grid_shape
        grid: list[list[DensityRecord]] = []
        src = self.source
        dense2d = src.to_2d() if isinstance(src, DenseMatrix) else None
        for i in range(nbr):
            row = []
            for j in range(nbc):
                r, c = self.block_shape(i, j)
                if dense2d is not None:
                    r0, c0 = self.row_starts[i], self.col_starts[j]
                    nnz = int(np.count_nonzero(dense2d[r0 : r0 + r, c0 : c0 + c]))
                else:
                    nnz = int(self._bounds[i * nbc + j + 1] - self._bounds[i * nbc + j])
                row.append(DensityRecord(nnz, r * c))
            grid.append(row)
        self.densities = grid

    def density(self, i: int, j: int) -> DensityRecord:
        if self.densities is None:
            raise RuntimeOrderError(f"{self.matrix_id} block densities not profiled yet")
        return self.densities[i][j]

    def fiber_density(self, g: int, j: int) -> DensityRecord:
        rows, cols = self.fiber_shape(g, j)
        nnz = sum(self.density(i, j).nnz for i in self._fiber_block_rows(g))
        return DensityRecord(nnz, rows * cols)

    def total_nnz(self) -> int:
        return sum(rec.nnz for row in self.densities for rec in row)


def partition_matrix(
    matrix_id: str,
    source: MatrixRef,
    block_rows: int,
    block_cols: int,
    fiber_rows: int | None = None,
) -> PartitionedMatrix:
    return PartitionedMatrix(matrix_id, source, block_rows, block_cols, fiber_rows)


def _scheme_aggregate(kernel: KernelIR, n1: int, n2: int) -> ExecutionScheme:
    v, f1 = kernel.num_vertices, kernel.f_in
    nb_i = math.ceil(v / n1)
    nb_k = math.ceil(f1 / n2)
    tasks = []
    for i in range(nb_i):
        for k in range(nb_k):
            chain = tuple(
                (
                    BlockKey(kernel.x_id, "block", i, t),
                    BlockKey(kernel.y_id, "fiber", t, k),
                )
                for t in range(nb_i)
            )
            tasks.append(
                TaskDescriptor(
                    kernel.kernel_id,
                    kernel.kernel_type,
                    (i, k),
                    (i * n1, min((i + 1) * n1, v)),
                    (k * n2, min((k + 1) * n2, f1)),
                    chain,
                )
            )
    return ExecutionScheme(n1, n2, tuple(tasks))


def _scheme_update(kernel: KernelIR, n1: int, n2: int) -> ExecutionScheme:
    v, f1, f2 = kernel.num_vertices, kernel.f_in, kernel.f_out
    nb_i = math.ceil(v / n2)
    nb_k = math.ceil(f2 / n2)
    chain_len = math.ceil(f1 / n2)
    tasks = []
    for i in range(nb_i):
        for k in range(nb_k):
            chain = tuple(
                (
                    BlockKey(kernel.x_id, "block", i, t),
                    BlockKey(kernel.y_id, "block", t, k),
                )
                for t in range(chain_len)
            )
            tasks.append(
                TaskDescriptor(
                    kernel.kernel_id,
                    kernel.kernel_type,
                    (i, k),
                    (i * n2, min((i + 1) * n2, v)),
                    (k * n2, min((k + 1) * n2, f2)),
                    chain,
                )
            )
    return ExecutionScheme(n1, n2, tuple(tasks))


def _scheme_elementwise(kernel: KernelIR, n1: int, n2: int) -> ExecutionScheme:
    v, f = kernel.num_vertices, kernel.f_out
    tasks = []
    for i in range(math.ceil(v / n2)):
        for k in range(math.ceil(f / n2)):
            tasks.append(
                TaskDescriptor(
                    kernel.kernel_id,
                    kernel.kernel_type,
                    (i, k),
                    (i * n2, min((i + 1) * n2, v)),
                    (k * n2, min((k + 1) * n2, f)),
                    (),
                )
            )
    return ExecutionScheme(n1, n2, tuple(tasks))


_SCHEME_BUILDERS = {
    KernelType.AGGREGATE: _scheme_aggregate,
    KernelType.UPDATE: _scheme_update,
    KernelType.ELEMENTWISE_ADD: _scheme_elementwise,
}


def partition_all(
    kernels: list[KernelIR],
    matrices: dict[str, MatrixRef],
    n1: int,
    n2: int,
) -> dict[str, PartitionedMatrix]:
    """Tile all compile-time matrices and attach execution schemes.

    Adjacency variants get N1 x N1 blocks, weights N2 x N2 blocks, and
    the input feature matrix N2 x N2 tiles with N1-row fiber access.
    Intermediate feature matrices are left to the runtime, which
    partitions and profiles them at write-back.
    """
    partitions: dict[str, PartitionedMatrix] = {}
    for mat_id, mat in matrices.items():
        if mat_id.startswith("A:"):
            partitions[mat_id] = partition_matrix(mat_id, mat, n1, n1)
        elif mat_id.startswith("W:"):
            partitions[mat_id] = partition_matrix(mat_id, mat, n2, n2)
        else:
            partitions[mat_id] = partition_matrix(mat_id, mat, n2, n2, fiber_rows=n1)
    for kernel in kernels:
        kernel.scheme = _SCHEME_BUILDERS[kernel.kernel_type](kernel, n1, n2)
    return partitions


# ---------------------------------------------------------------------------
# Compile driver
# ---------------------------------------------------------------------------


@dataclass
class CompiledModel:
    spec: ModelSpec
    graph_meta: GraphMeta
    kernels: list[KernelIR]
    n1: int
    n2: int
    matrices: dict[str, MatrixRef]
    partitions: dict[str, PartitionedMatrix]
    eta: int
    n_cc: int
    mem_budget: int

    @property
    def output_id(self) -> str:
        return self.kernels[-1].out_id if self.kernels else INPUT_FEATURES_ID


def compile_model(
    spec: ModelSpec,
    adjacency: MatrixRef,
    features: DenseMatrix,
    weights: dict[str, MatrixRef],
    n_cc: int = 7,
    eta: int = 4,
    mem_budget: int = DEFAULT_MEM_BUDGET,
    partition_sizes: tuple[int, int] | None = None,
) -> CompiledModel:
    """Lower (model, graph) to a partitioned execution plan.

    `partition_sizes` overrides the two-step search (used when reusing
    a stored plan).
    """
    if adjacency.rows != adjacency.cols:
        raise CompileError(f"adjacency matrix must be square, got {adjacency.shape}")
    if features.rows != adjacency.rows:
        raise CompileError(
            f"feature matrix has {features.rows} rows but the graph has "
            f"{adjacency.rows} vertices"
        )
    if spec.layers and spec.input_dim != features.cols:
        raise CompileError(
            f"model expects {spec.input_dim} input features, file provides {features.cols}"
        )
    for wid, shape in spec.weight_slots():
        if wid not in weights:
            raise CompileError(f"missing weight matrix {wid}")
        if weights[wid].shape != shape:
            raise CompileError(
                f"weight {wid} has shape {weights[wid].shape}, expected {shape}"
            )

    n_edges = adjacency.nnz if isinstance(adjacency, CooMatrix) else int(
        np.count_nonzero(adjacency.values)
    )
    meta = GraphMeta(adjacency.rows, n_edges)
    kernels = build_computation_graph(spec, meta)

    matrices: dict[str, MatrixRef] = {INPUT_FEATURES_ID: features}
    for layer in spec.layers:
        aid = _adjacency_id(layer)
        if aid not in matrices:
            eps = layer.gin_epsilon if layer.kind is ModelKind.GIN else None
            matrices[aid] = normalize_adjacency(adjacency, layer.resolved_norm(), eps)
    for wid, _ in spec.weight_slots():
        matrices[wid] = weights[wid]

    if partition_sizes is None:
        n1, n2 = choose_partition_sizes(
            kernel_workloads(kernels), mem_budget, n_cc, eta
        )
    else:
        n1, n2 = partition_sizes
    partitions = partition_all(kernels, matrices, n1, n2)
    return CompiledModel(
        spec, meta, kernels, n1, n2, matrices, partitions, eta, n_cc, mem_budget
    )
