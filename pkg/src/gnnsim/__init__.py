"""Sparsity-adaptive GNN inference simulation.

A compiler lowers a GNN model and graph to blocked matmul tasks, a
runtime analyzer maps every block pair to the cheapest of three
execution primitives (GEMM / SpDMM / SPMM) from profiled densities,
and a discrete-event scheduler runs the tasks on simulated cores to
produce both exact numerical results and modeled cycle counts.
"""

from .errors import (
    CompileError,
    ConfigError,
    FormatError,
    GnnSimError,
    ModelInconsistencyError,
    ParseError,
    RuntimeOrderError,
    ShapeError,
)
from .matrices import (
    ActivationKind,
    CooMatrix,
    DenseMatrix,
    Layout,
    MatrixRef,
    dense_matmul_oracle,
    elementwise_activation,
    slice_block,
    transpose,
)
from .transforms import (
    DensityRecord,
    TransformKind,
    dense_to_sparse,
    profile_density,
    sparse_to_dense,
    transform_cycle_cost,
    transform_layout,
)
from .primitives import (
    CoreConfig,
    ExecResult,
    PrimitiveKind,
    exec_gemm,
    exec_spdmm,
    exec_spmm,
    mode_switch_cost,
)
from .perfmodel import (
    PairDecision,
    RegionReport,
    SparseSide,
    predict_cycles,
    region_partition_check,
    select_primitive,
)
from .model import (
    ActivationSpec,
    AdjacencyNorm,
    AggregationOp,
    LayerSpec,
    ModelKind,
    ModelSpec,
    zoo_model,
)
from .compiler import (
    BlockKey,
    CompiledModel,
    ExecutionScheme,
    GraphMeta,
    KernelIR,
    KernelType,
    PartitionedMatrix,
    TaskDescriptor,
    build_computation_graph,
    choose_partition_sizes,
    compile_model,
    normalize_adjacency,
    partition_all,
    partition_matrix,
)
from .runtime import (
    BlockStats,
    GraphInputs,
    MappingStrategy,
    SimConfig,
    SimReport,
    analyze_task,
    reference_inference,
    run_inference,
    schedule_and_run,
    simulate_task_costs,
)

__version__ = "0.1.0"
