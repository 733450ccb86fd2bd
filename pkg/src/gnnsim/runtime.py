"""Runtime system and accelerator simulation.

The analyzer maps every pair multiplication of every task to a
primitive (dynamically from profiled densities, or per one of the two
static baseline policies), the scheduler dispatches tasks of each
kernel to the earliest-idle simulated core with a barrier between
kernels, and the cores execute the pairs functionally while charging
modeled cycles. Intermediate feature matrices are profiled at
write-back so the next kernel's analyzer sees fresh densities.

Memory traffic and format/layout transforms are recorded but hidden
from the makespan by default (double buffering overlaps them with
compute); visible-overhead mode charges max(compute, transfer) per
task and adds the transform cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .compiler import (
    BlockKey,
    CompiledModel,
    GraphMeta,
    INPUT_FEATURES_ID,
    KernelIR,
    KernelType,
    TaskDescriptor,
    build_computation_graph,
    compile_model,
    normalize_adjacency,
    partition_matrix,
    _adjacency_id,
)
from .errors import ConfigError, RuntimeOrderError
from .matrices import (
    CooMatrix,
    DenseMatrix,
    Layout,
    MatrixRef,
    dense_matmul_oracle,
    elementwise_activation,
    transpose,
)
from .model import ModelKind, ModelSpec
from .perfmodel import PairDecision, SparseSide, predict_cycles, select_primitive
from .primitives import (
    CoreConfig,
    ExecResult,
    PrimitiveKind,
    exec_gemm,
    exec_spdmm,
    exec_spmm,
    mode_switch_cost,
)
from .transforms import (
    TransformKind,
    dense_to_sparse,
    sparse_to_dense,
    transform_cycle_cost,
    transform_layout,
)


class MappingStrategy(Enum):
    STATIC1 = "s1"  # aggregate -> SpDMM (adjacency sparse), update -> GEMM
    STATIC2 = "s2"  # everything -> SpDMM (left operand sparse)
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class SimConfig:
    core: CoreConfig = field(default_factory=CoreConfig)
    n_cc: int = 7
    eta: int = 4
    mem_budget: int = 6 * 2**20
    visible_overheads: bool = False
    clock_mhz: float = 250.0
    mem_bandwidth_gbps: float = 77.0

    def __post_init__(self):
        if self.n_cc < 1:
            raise ConfigError(f"core count must be >= 1, got {self.n_cc}")
        if self.eta < 1:
            raise ConfigError(f"eta must be >= 1, got {self.eta}")

    @property
    def bytes_per_cycle(self) -> float:
        return self.mem_bandwidth_gbps * 1e9 / (self.clock_mhz * 1e6)


@dataclass(frozen=True)
class GraphInputs:
    adjacency: MatrixRef
    features: DenseMatrix
    weights: dict[str, MatrixRef]


@dataclass(frozen=True)
class BlockStats:
    """Density record plus shape, as the analyzer sees one partition."""

    rows: int
    cols: int
    nnz: int

    @property
    def density(self) -> float:
        total = self.rows * self.cols
        return self.nnz / total if total else 0.0

    @property
    def resident_sparse(self) -> bool:
        # Storage policy: blocks below half density live in COO form.
        return self.density < 0.5

    @property
    def stored_bytes(self) -> int:
        return self.nnz * 12 if self.resident_sparse else self.rows * self.cols * 4


@dataclass
class CoreState:
    core_id: int
    busy_until: int = 0
    last_kind: PrimitiveKind | None = None
    busy_cycles: int = 0


@dataclass(frozen=True)
class TaskExec:
    kernel_id: str
    task_index: int
    core_id: int
    start: int
    end: int


@dataclass
class KernelStats:
    kernel_id: str
    kernel_type: str
    layer_id: int
    task_count: int
    makespan: int
    total_task_cycles: int
    max_task_cycles: int
    decisions: dict[str, int]
    predicted_compute_cycles: int
    executed_compute_cycles: int
    mode_switch_cycles: int
    transform_cycles: int
    elementwise_cycles: int
    analyzer_decisions: int
    macs: int


def _empty_histogram() -> dict[str, int]:
    return {"gemm": 0, "spdmm": 0, "spmm": 0, "skip": 0}


@dataclass
class SimReport:
    strategy: str
    n_cc: int
    p_sys: int
    n1: int
    n2: int
    visible_overheads: bool
    total_makespan: int
    core_busy_cycles: list[int]
    kernels: list[KernelStats]
    trace: list[TaskExec]

    def _sum(self, attr: str) -> int:
        return sum(getattr(k, attr) for k in self.kernels)

    @property
    def decisions_total(self) -> dict[str, int]:
        out = _empty_histogram()
        for k in self.kernels:
            for key, n in k.decisions.items():
                out[key] += n
        return out

    @property
    def predicted_compute_total(self) -> int:
        return self._sum("predicted_compute_cycles")

    @property
    def executed_compute_total(self) -> int:
        return self._sum("executed_compute_cycles")

    @property
    def transform_cycles_total(self) -> int:
        return self._sum("transform_cycles")

    @property
    def mode_switch_cycles_total(self) -> int:
        return self._sum("mode_switch_cycles")

    @property
    def elementwise_cycles_total(self) -> int:
        return self._sum("elementwise_cycles")

    @property
    def analyzer_decisions_total(self) -> int:
        return self._sum("analyzer_decisions")

    @property
    def macs_total(self) -> int:
        return self._sum("macs")

    @property
    def utilization(self) -> list[float]:
        if self.total_makespan == 0:
            return [0.0 for _ in self.core_busy_cycles]
        return [busy / self.total_makespan for busy in self.core_busy_cycles]

    def latency_ms(self, clock_mhz: float) -> float:
        return self.total_makespan / (clock_mhz * 1e3)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "n_cc": self.n_cc,
            "p_sys": self.p_sys,
            "n1": self.n1,
            "n2": self.n2,
            "visible_overheads": self.visible_overheads,
            "total_makespan": self.total_makespan,
            "core_busy_cycles": list(self.core_busy_cycles),
            "decisions": self.decisions_total,
            "predicted_compute_cycles": self.predicted_compute_total,
            "executed_compute_cycles": self.executed_compute_total,
            "transform_cycles": self.transform_cycles_total,
            "mode_switch_cycles": self.mode_switch_cycles_total,
            "elementwise_cycles": self.elementwise_cycles_total,
            "analyzer_decisions": self.analyzer_decisions_total,
            "macs": self.macs_total,
            "kernels": [vars(k).copy() for k in self.kernels],
        }


# ---------------------------------------------------------------------------
# Analyzer (kernel-to-primitive mapping)
# ---------------------------------------------------------------------------


def _forced_spdmm(stats_sparse: BlockStats, m: int, n: int, d: int, p: int) -> int:
    """Cycles for SpDMM when the sparse side is dictated, not argmin'd."""
    return math.ceil(stats_sparse.density * 2 * m * n * d / p**2)


def analyze_task(
    task: TaskDescriptor,
    densities: Mapping[BlockKey, BlockStats],
    strategy: MappingStrategy,
    cfg: CoreConfig,
) -> list[PairDecision]:
    """Map each pair multiplication of one task to a primitive.

    Dynamic picks the modeled argmin per pair and skips empty pairs.
    The static baselines never skip: static-1 forces aggregate pairs to
    SpDMM (adjacency as the sparse side) and update pairs to GEMM;
    static-2 forces everything to SpDMM with the left operand treated
    as sparse. Exactly one decision is produced per chain element.
    """
    decisions: list[PairDecision] = []
    for x_key, y_key in task.chain:
        try:
            sx = densities[x_key]
            sy = densities[y_key]
        except KeyError as missing:
            raise RuntimeOrderError(
                f"density of {missing.args[0]} is unknown; the producing kernel "
                "has not executed yet"
            ) from None
        m, n, d = sx.rows, sx.cols, sy.cols
        if strategy is MappingStrategy.DYNAMIC:
            decisions.append(
                select_primitive(sx.density, sy.density, cfg.p_sys, shape=(m, n, d))
            )
        elif strategy is MappingStrategy.STATIC1:
            if task.kernel_type is KernelType.AGGREGATE:
                decisions.append(
                    PairDecision(
                        PrimitiveKind.SPDMM,
                        SparseSide.LEFT,
                        _forced_spdmm(sx, m, n, d, cfg.p_sys),
                    )
                )
            else:
                decisions.append(
                    PairDecision(
                        PrimitiveKind.GEMM,
                        SparseSide.NONE,
                        predict_cycles(
                            PrimitiveKind.GEMM, m, n, d, sx.density, sy.density, cfg.p_sys
                        ),
                    )
                )
        else:
            decisions.append(
                PairDecision(
                    PrimitiveKind.SPDMM,
                    SparseSide.LEFT,
                    _forced_spdmm(sx, m, n, d, cfg.p_sys),
                )
            )
    return decisions


# ---------------------------------------------------------------------------
# Pair execution
# ---------------------------------------------------------------------------


def _densify(m: MatrixRef) -> DenseMatrix:
    return m if isinstance(m, DenseMatrix) else sparse_to_dense(m)


def _sparsify(m: MatrixRef) -> CooMatrix:
    return m if isinstance(m, CooMatrix) else dense_to_sparse(m)


def execute_pair(
    x: MatrixRef, y: MatrixRef, acc: DenseMatrix, decision: PairDecision, cfg: CoreConfig
) -> ExecResult:
    """Run one pair multiplication under an analyzer decision.

    Operands arrive in their resident form; format and layout are
    adapted to the chosen mode's buffer requirements here (the cycle
    cost of those adaptations is accounted separately). SpDMM with the
    right operand sparse runs the transposed problem, mirroring the
    column-major result path merged at write-back.
    """
    if decision.skipped:
        return ExecResult(acc, 0, 0)
    if decision.choice is PrimitiveKind.GEMM:
        xd = transform_layout(_densify(x), Layout.ROW_MAJOR)
        yd = transform_layout(_densify(y), Layout.COL_MAJOR)
        return exec_gemm(xd, yd, acc, cfg)
    if decision.choice is PrimitiveKind.SPDMM:
        if decision.sparse_operand is SparseSide.RIGHT:
            res = exec_spdmm(
                _sparsify(transpose(y)),
                transform_layout(_densify(transpose(x)), Layout.ROW_MAJOR),
                DenseMatrix.from_2d(acc.to_2d().T),
                cfg,
            )
            return ExecResult(
                DenseMatrix.from_2d(res.output.to_2d().T),
                res.compute_cycles,
                res.macs_executed,
            )
        return exec_spdmm(
            _sparsify(x), transform_layout(_densify(y), Layout.ROW_MAJOR), acc, cfg
        )
    xs = transform_layout(_sparsify(x), Layout.ROW_MAJOR)
    ys = transform_layout(_sparsify(y), Layout.ROW_MAJOR)
    return exec_spmm(xs, ys, acc, cfg)


def _pair_overheads(
    decision: PairDecision, sx: BlockStats, sy: BlockStats, lane: int
) -> tuple[int, int]:
    """(transform cycles, bytes moved) to stage one pair's operands.

    Blocks live in external memory row-major, sparse below half
    density; staging converts whatever the chosen mode's buffers
    require (GEMM additionally flips its right operand column-major).
    """
    x_elems = sx.rows * sx.cols
    y_elems = sy.rows * sy.cols
    moved = sx.stored_bytes + sy.stored_bytes
    cycles = 0
    if decision.skipped:
        return 0, 0
    if decision.choice is PrimitiveKind.GEMM:
        if sx.resident_sparse:
            cycles += transform_cycle_cost(TransformKind.S2D, x_elems, lane)
        if sy.resident_sparse:
            cycles += transform_cycle_cost(TransformKind.S2D, y_elems, lane)
        cycles += transform_cycle_cost(TransformKind.LAYOUT_FLIP, y_elems, lane)
    elif decision.choice is PrimitiveKind.SPDMM:
        sparse_is_left = decision.sparse_operand is not SparseSide.RIGHT
        s_stats, s_elems = (sx, x_elems) if sparse_is_left else (sy, y_elems)
        d_stats, d_elems = (sy, y_elems) if sparse_is_left else (sx, x_elems)
        if not s_stats.resident_sparse:
            cycles += transform_cycle_cost(TransformKind.D2S, s_elems, lane)
        if d_stats.resident_sparse:
            cycles += transform_cycle_cost(TransformKind.S2D, d_elems, lane)
    else:
        if not sx.resident_sparse:
            cycles += transform_cycle_cost(TransformKind.D2S, x_elems, lane)
        if not sy.resident_sparse:
            cycles += transform_cycle_cost(TransformKind.D2S, y_elems, lane)
    return cycles, moved


# ---------------------------------------------------------------------------
# Scheduler
# ---------------------------------------------------------------------------


class Scheduler:
    """Earliest-idle-core list scheduler with per-kernel barriers.

    Tasks are offered in descriptor order; ties between equally idle
    cores break toward the lowest core id. `barrier()` waits for every
    task of the current kernel and aligns all cores on the new time.
    """

    def __init__(self, n_cc: int):
        if n_cc < 1:
            raise ConfigError(f"core count must be >= 1, got {n_cc}")
        self.cores = [CoreState(i) for i in range(n_cc)]
        self.now = 0
        self.trace: list[TaskExec] = []

    def next_core(self) -> CoreState:
        return min(self.cores, key=lambda c: (c.busy_until, c.core_id))

    def assign(self, core: CoreState, kernel_id: str, task_index: int, duration: int) -> TaskExec:
        start = core.busy_until
        end = start + duration
        core.busy_until = end
        core.busy_cycles += duration
        entry = TaskExec(kernel_id, task_index, core.core_id, start, end)
        self.trace.append(entry)
        return entry

    def barrier(self) -> int:
        """Advance to the point where every core is idle; returns the
        elapsed kernel makespan."""
        new_now = max([self.now] + [c.busy_until for c in self.cores])
        span = new_now - self.now
        self.now = new_now
        for c in self.cores:
            c.busy_until = new_now
        return span


def simulate_task_costs(
    kernel_costs: Sequence[Sequence[int]], n_cc: int
) -> tuple[list[TaskExec], list[int], int]:
    """Schedule bare task durations (no functional work).

    Returns the dispatch trace, per-kernel makespans, and the total
    makespan. Exposed so scheduling invariants can be property-tested
    independently of the numerical pipeline.
    """
    sched = Scheduler(n_cc)
    spans = []
    for k_idx, costs in enumerate(kernel_costs):
        for t_idx, cost in enumerate(costs):
            core = sched.next_core()
            sched.assign(core, f"k{k_idx}", t_idx, int(cost))
        spans.append(sched.barrier())
    return sched.trace, spans, sched.now


# ---------------------------------------------------------------------------
# Full simulation
# ---------------------------------------------------------------------------


def _stats_for_key(partitions, key: BlockKey) -> BlockStats:
    part = partitions.get(key.matrix_id)
    if part is None or part.densities is None:
        raise RuntimeOrderError(
            f"density of {key} is unknown; the producing kernel has not executed yet"
        )
    if key.kind == "fiber":
        rec = part.fiber_density(key.i, key.j)
        rows, cols = part.fiber_shape(key.i, key.j)
    else:
        rec = part.density(key.i, key.j)
        rows, cols = part.block_shape(key.i, key.j)
    return BlockStats(rows, cols, rec.nnz)


def _matrix_for_key(partitions, key: BlockKey) -> MatrixRef:
    part = partitions[key.matrix_id]
    if key.kind == "fiber":
        return part.fiber(key.i, key.j)
    return part.block(key.i, key.j)


def _kernel_density_map(kernel: KernelIR, partitions) -> dict[BlockKey, BlockStats]:
    keys = {key for task in kernel.scheme.tasks for pair in task.chain for key in pair}
    return {key: _stats_for_key(partitions, key) for key in keys}


def schedule_and_run(
    compiled: CompiledModel,
    strategy: MappingStrategy,
    config: SimConfig,
    state_out: dict | None = None,
) -> tuple[DenseMatrix, SimReport]:
    """Execute the compiled plan on the simulated accelerator.

    Kernels run in order with a barrier after each one; inside a
    kernel, tasks go to the earliest-idle core. A task's duration is
    its pair compute cycles plus mode-switch and elementwise
    (activation / merge) cycles; visible-overhead mode adds transform
    cycles and floors the duration at the task's memory-transfer time.
    Output blocks are activated, profiled, and re-partitioned at
    write-back for the next kernel's analyzer.

    Passing a dict as `state_out` exposes the final matrices and
    partitions (including runtime-profiled intermediates).
    """
    cfg = config.core
    p2 = cfg.p_sys**2
    matrices = dict(compiled.matrices)
    partitions = dict(compiled.partitions)
    sched = Scheduler(config.n_cc)
    kernel_stats: list[KernelStats] = []

    for kernel in compiled.kernels:
        if kernel.scheme is None:
            raise RuntimeOrderError(f"kernel {kernel.kernel_id} has no execution scheme")
        v, f_out = kernel.num_vertices, kernel.f_out
        out_array = np.zeros((v, f_out), dtype=np.float32)
        stats = KernelStats(
            kernel_id=kernel.kernel_id,
            kernel_type=kernel.kernel_type.value,
            layer_id=kernel.layer_id,
            task_count=len(kernel.scheme.tasks),
            makespan=0,
            total_task_cycles=0,
            max_task_cycles=0,
            decisions=_empty_histogram(),
            predicted_compute_cycles=0,
            executed_compute_cycles=0,
            mode_switch_cycles=0,
            transform_cycles=0,
            elementwise_cycles=0,
            analyzer_decisions=0,
            macs=0,
        )
        if kernel.kernel_type is KernelType.ELEMENTWISE_ADD:
            density_map = None
            a2d = _densify(matrices[kernel.x_id]).to_2d()
            b2d = _densify(matrices[kernel.y_id]).to_2d()
        else:
            density_map = _kernel_density_map(kernel, partitions)

        for t_idx, task in enumerate(kernel.scheme.tasks):
            (r0, r1), (c0, c1) = task.out_rows, task.out_cols
            elems = (r1 - r0) * (c1 - c0)
            core = sched.next_core()
            compute = switches = transforms = elementwise = 0
            moved_bytes = 0
            merge_flip = False

            if kernel.kernel_type is KernelType.ELEMENTWISE_ADD:
                block = a2d[r0:r1, c0:c1] + b2d[r0:r1, c0:c1]
                elementwise += math.ceil(elems / p2)
                for src_id in (kernel.x_id, kernel.y_id):
                    src_stats = _stats_for_key(
                        partitions, BlockKey(src_id, "block", *task.out_block)
                    )
                    moved_bytes += src_stats.stored_bytes
                    if src_stats.resident_sparse:
                        transforms += transform_cycle_cost(
                            TransformKind.S2D, elems, cfg.lane_width
                        )
            else:
                decisions = analyze_task(task, density_map, strategy, cfg)
                stats.analyzer_decisions += len(decisions)
                acc = DenseMatrix.from_2d(out_array[r0:r1, c0:c1])
                for (x_key, y_key), dec in zip(task.chain, decisions):
                    sx, sy = density_map[x_key], density_map[y_key]
                    t_cycles, t_bytes = _pair_overheads(dec, sx, sy, cfg.lane_width)
                    transforms += t_cycles
                    moved_bytes += t_bytes
                    if dec.skipped:
                        stats.decisions["skip"] += 1
                        continue
                    stats.decisions[dec.choice.value] += 1
                    stats.predicted_compute_cycles += dec.predicted_cycles
                    if dec.sparse_operand is SparseSide.RIGHT:
                        merge_flip = True
                    res = execute_pair(
                        _matrix_for_key(partitions, x_key),
                        _matrix_for_key(partitions, y_key),
                        acc,
                        dec,
                        cfg,
                    )
                    acc = res.output
                    compute += res.compute_cycles
                    stats.executed_compute_cycles += res.compute_cycles
                    stats.macs += res.macs_executed
                    # Zero-cycle pairs never enter the ALU array, so they
                    # neither charge nor clear a mode switch.
                    if res.compute_cycles > 0:
                        if core.last_kind is not None and core.last_kind is not dec.choice:
                            switches += mode_switch_cost()
                        core.last_kind = dec.choice
                block = acc.to_2d()

            if kernel.activation.enabled:
                block = elementwise_activation(
                    DenseMatrix.from_2d(block), kernel.activation.kind, kernel.activation.slope
                ).to_2d()
                elementwise += math.ceil(elems / p2)
            out_array[r0:r1, c0:c1] = block

            if merge_flip:
                transforms += transform_cycle_cost(
                    TransformKind.LAYOUT_FLIP, elems, cfg.lane_width
                )
            transforms += transform_cycle_cost(TransformKind.PROFILE, elems, cfg.lane_width)
            moved_bytes += elems * 4  # result write-back

            duration = compute + switches + elementwise
            if config.visible_overheads:
                duration += transforms
                duration = max(duration, math.ceil(moved_bytes / config.bytes_per_cycle))
            stats.mode_switch_cycles += switches
            stats.transform_cycles += transforms
            stats.elementwise_cycles += elementwise
            stats.total_task_cycles += duration
            stats.max_task_cycles = max(stats.max_task_cycles, duration)
            sched.assign(core, kernel.kernel_id, t_idx, duration)

        stats.makespan = sched.barrier()
        kernel_stats.append(stats)
        out_mat = DenseMatrix.from_2d(out_array)
        matrices[kernel.out_id] = out_mat
        partitions[kernel.out_id] = partition_matrix(
            kernel.out_id, out_mat, compiled.n2, compiled.n2, fiber_rows=compiled.n1
        )

    if state_out is not None:
        state_out["matrices"] = matrices
        state_out["partitions"] = partitions
    embeddings = _densify(matrices[compiled.output_id])
    report = SimReport(
        strategy=strategy.value,
        n_cc=config.n_cc,
        p_sys=cfg.p_sys,
        n1=compiled.n1,
        n2=compiled.n2,
        visible_overheads=config.visible_overheads,
        total_makespan=sched.now,
        core_busy_cycles=[c.busy_cycles for c in sched.cores],
        kernels=kernel_stats,
        trace=sched.trace,
    )
    return embeddings, report


def run_inference(
    spec: ModelSpec,
    graph: GraphInputs,
    strategy: MappingStrategy = MappingStrategy.DYNAMIC,
    config: SimConfig | None = None,
    compiled: CompiledModel | None = None,
) -> tuple[DenseMatrix, SimReport]:
    """Compile (unless a plan is supplied) and simulate one inference."""
    config = config or SimConfig()
    if compiled is None:
        compiled = compile_model(
            spec,
            graph.adjacency,
            graph.features,
            graph.weights,
            n_cc=config.n_cc,
            eta=config.eta,
            mem_budget=config.mem_budget,
        )
    return schedule_and_run(compiled, strategy, config)


def reference_inference(spec: ModelSpec, graph: GraphInputs) -> DenseMatrix:
    """Unpartitioned pipeline over the same kernel graph.

    Runs every kernel's math with the dense reference multiplier on
    whole matrices; no tiling, no scheduling, no cost model. This is
    the ground truth the simulated execution must reproduce.
    """
    meta_edges = (
        graph.adjacency.nnz
        if isinstance(graph.adjacency, CooMatrix)
        else int(np.count_nonzero(graph.adjacency.values))
    )
    kernels = build_computation_graph(
        spec, GraphMeta(graph.adjacency.rows, meta_edges)
    )
    values: dict[str, DenseMatrix] = {INPUT_FEATURES_ID: graph.features}
    for layer in spec.layers:
        aid = _adjacency_id(layer)
        if aid not in values:
            eps = layer.gin_epsilon if layer.kind is ModelKind.GIN else None
            values[aid] = sparse_to_dense(
                normalize_adjacency(graph.adjacency, layer.resolved_norm(), eps)
            )
    for wid, _ in spec.weight_slots():
        values[wid] = _densify(graph.weights[wid])
    for kernel in kernels:
        if kernel.kernel_type is KernelType.ELEMENTWISE_ADD:
            out = DenseMatrix.from_2d(
                values[kernel.x_id].to_2d() + values[kernel.y_id].to_2d()
            )
        else:
            out = dense_matmul_oracle(values[kernel.x_id], values[kernel.y_id])
        if kernel.activation.enabled:
            out = elementwise_activation(out, kernel.activation.kind, kernel.activation.slope)
        values[kernel.out_id] = out
    last = kernels[-1].out_id if kernels else INPUT_FEATURES_ID
    return values[last]
