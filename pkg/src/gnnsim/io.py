"""File formats: graphs, dense grids, model descriptions, and compiled
plans.

Text formats (all allow blank lines and '#' comments):

  edge list      one edge per line: ``src dst [weight]`` with 0-based
                 vertex ids ('%' comments also accepted)
  dense grid     header line ``rows cols`` followed by `rows` lines of
                 `cols` numbers
  model file     ``key = value`` pairs; a ``spec_version = 1`` header
                 and one ``[layer]`` section per layer

Matrix Market coordinate files (real / integer / pattern, general /
symmetric) and ``.npy`` arrays are also accepted. Compiled plans
serialize to sorted-key JSON so identical inputs produce identical
bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .compiler import (
    BlockKey,
    CompiledModel,
    ExecutionScheme,
    KernelIR,
    KernelType,
    TaskDescriptor,
)
from .errors import ParseError
from .matrices import CooMatrix, DenseMatrix, Layout, MatrixRef
from .model import (
    ActivationSpec,
    AdjacencyNorm,
    AggregationOp,
    LayerSpec,
    ModelKind,
    ModelSpec,
)
from .matrices import ActivationKind

MODEL_SPEC_VERSION = 1
IR_SPEC_VERSION = 1


def _data_lines(path):
    """Yield (line_number, stripped_text) skipping blanks and comments."""
    with open(path, "r", encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#") or text.startswith("%"):
                continue
            yield no, text


# ---------------------------------------------------------------------------
# Graphs
# ---------------------------------------------------------------------------


def load_edge_list(path, num_vertices: int | None = None) -> CooMatrix:
    """Whitespace-separated ``src dst [weight]`` lines to an adjacency
    matrix (vertex count defaults to max id + 1)."""
    rows, cols, vals = [], [], []
    for no, text in _data_lines(path):
        parts = text.split()
        if len(parts) not in (2, 3):
            raise ParseError(
                f"expected 'src dst [weight]', got {len(parts)} fields", path, no
            )
        try:
            src, dst = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise ParseError(f"malformed edge: {exc}", path, no) from None
        if src < 0 or dst < 0:
            raise ParseError("vertex ids must be non-negative", path, no)
        rows.append(src)
        cols.append(dst)
        vals.append(w)
    n = num_vertices if num_vertices is not None else (max(rows + cols) + 1 if rows else 0)
    if rows and max(max(rows), max(cols)) >= n:
        raise ParseError(f"vertex id exceeds declared count {n}", path)
    return CooMatrix(n, n, Layout.ROW_MAJOR, np.array(rows), np.array(cols), np.array(vals))


def load_matrix_market(path) -> CooMatrix:
    """Matrix Market coordinate format (1-based indices)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
    if not header.startswith("%%MatrixMarket"):
        raise ParseError("missing %%MatrixMarket header", path, 1)
    tokens = header.split()
    if len(tokens) < 5 or tokens[1] != "matrix" or tokens[2] != "coordinate":
        raise ParseError(f"unsupported header: {header.strip()!r}", path, 1)
    value_type, symmetry = tokens[3], tokens[4]
    if value_type not in ("real", "integer", "pattern"):
        raise ParseError(f"unsupported value type {value_type!r}", path, 1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry {symmetry!r}", path, 1)

    dims = None
    rows, cols, vals = [], [], []
    for no, text in _data_lines(path):
        parts = text.split()
        if dims is None:
            if len(parts) != 3:
                raise ParseError("expected 'rows cols nnz' size line", path, no)
            dims = (int(parts[0]), int(parts[1]), int(parts[2]))
            continue
        want = 2 if value_type == "pattern" else 3
        if len(parts) != want:
            raise ParseError(f"expected {want} fields per entry", path, no)
        try:
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
            v = 1.0 if value_type == "pattern" else float(parts[2])
        except ValueError as exc:
            raise ParseError(f"malformed entry: {exc}", path, no) from None
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j)
            cols.append(i)
            vals.append(v)
    if dims is None:
        raise ParseError("missing size line", path)
    return CooMatrix(
        dims[0], dims[1], Layout.ROW_MAJOR, np.array(rows), np.array(cols), np.array(vals)
    )


# ---------------------------------------------------------------------------
# Dense grids
# ---------------------------------------------------------------------------


def load_dense_grid(path) -> DenseMatrix:
    lines = list(_data_lines(path))
    if not lines:
        raise ParseError("empty dense grid file", path)
    no, text = lines[0]
    parts = text.split()
    if len(parts) != 2:
        raise ParseError("expected 'rows cols' header line", path, no)
    rows, cols = int(parts[0]), int(parts[1])
    if len(lines) - 1 != rows:
        raise ParseError(f"expected {rows} data rows, found {len(lines) - 1}", path)
    data = np.zeros((rows, cols), dtype=np.float32)
    for r, (no, text) in enumerate(lines[1:]):
        parts = text.split()
        if len(parts) != cols:
            raise ParseError(f"expected {cols} values, found {len(parts)}", path, no)
        try:
            data[r] = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"malformed value: {exc}", path, no) from None
    return DenseMatrix.from_2d(data)


def save_dense_grid(m: DenseMatrix, path) -> None:
    a = m.to_2d()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m.rows} {m.cols}\n")
        for row in a:
            fh.write(" ".join(f"{float(v):.9g}" for v in row) + "\n")


def load_matrix(path) -> MatrixRef:
    """Dispatch on suffix: .mtx, .npy, .edges/.el, else dense grid."""
    suffix = Path(path).suffix.lower()
    if suffix == ".mtx":
        return load_matrix_market(path)
    if suffix == ".npy":
        return DenseMatrix.from_2d(np.load(path))
    if suffix in (".edges", ".el"):
        return load_edge_list(path)
    return load_dense_grid(path)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

_LAYER_KEYS = {
    "kind", "f_in", "f_out", "aggregation", "activation", "prelu_slope",
    "norm", "epsilon", "hops",
}


def _parse_activation(value: str, slope: float) -> ActivationSpec:
    if value == "none":
        return ActivationSpec.none()
    if value == "relu":
        return ActivationSpec.relu()
    if value == "prelu":
        return ActivationSpec.prelu(slope)
    raise ValueError(f"unknown activation {value!r}")


def parse_model_file(path) -> ModelSpec:
    version = None
    name = "model"
    sections: list[dict] = []
    section_lines: list[int] = []
    current: dict | None = None
    for no, text in _data_lines(path):
        if text == "[layer]":
            current = {}
            sections.append(current)
            section_lines.append(no)
            continue
        if "=" not in text:
            raise ParseError(f"expected 'key = value', got {text!r}", path, no)
        key, _, value = text.partition("=")
        key, value = key.strip(), value.strip()
        if current is None:
            if key == "spec_version":
                version = int(value)
            elif key == "name":
                name = value
            else:
                raise ParseError(f"unknown top-level key {key!r}", path, no)
        else:
            if key not in _LAYER_KEYS:
                raise ParseError(f"unknown layer key {key!r}", path, no)
            current[key] = (value, no)
    if version is None:
        raise ParseError("missing spec_version", path)
    if version != MODEL_SPEC_VERSION:
        raise ParseError(f"unsupported spec_version {version}", path)

    layers = []
    for sec, sec_line in zip(sections, section_lines):
        def get(key, default=None):
            return sec[key][0] if key in sec else default

        def line_of(key):
            return sec[key][1] if key in sec else sec_line

        for required in ("kind", "f_in", "f_out"):
            if required not in sec:
                raise ParseError(f"layer is missing {required!r}", path, sec_line)
        try:
            kind = ModelKind(get("kind"))
        except ValueError:
            raise ParseError(f"unknown layer kind {get('kind')!r}", path, line_of("kind"))
        try:
            aggregation = AggregationOp(get("aggregation", "sum"))
        except ValueError:
            raise ParseError(
                f"unknown aggregation {get('aggregation')!r}", path, line_of("aggregation")
            )
        try:
            activation = _parse_activation(
                get("activation", "relu"), float(get("prelu_slope", 0.0))
            )
        except ValueError as exc:
            raise ParseError(str(exc), path, line_of("activation"))
        norm = get("norm")
        try:
            layers.append(
                LayerSpec(
                    kind=kind,
                    f_in=int(get("f_in")),
                    f_out=int(get("f_out")),
                    aggregation=aggregation,
                    activation=activation,
                    adjacency_norm=AdjacencyNorm(norm) if norm is not None else None,
                    gin_epsilon=float(get("epsilon", 0.0)),
                    sgc_hops=int(get("hops", 1)),
                )
            )
        except ValueError as exc:
            raise ParseError(f"malformed layer field: {exc}", path, sec_line) from None
    return ModelSpec(tuple(layers), name=name)


def save_model_file(spec: ModelSpec, path) -> None:
    out = [f"spec_version = {MODEL_SPEC_VERSION}", f"name = {spec.name}"]
    for layer in spec.layers:
        out.append("")
        out.append("[layer]")
        out.append(f"kind = {layer.kind.value}")
        out.append(f"f_in = {layer.f_in}")
        out.append(f"f_out = {layer.f_out}")
        out.append(f"aggregation = {layer.aggregation.value}")
        if not layer.activation.enabled:
            out.append("activation = none")
        elif layer.activation.kind is ActivationKind.PRELU:
            out.append("activation = prelu")
            out.append(f"prelu_slope = {layer.activation.slope!r}")
        else:
            out.append("activation = relu")
        if layer.adjacency_norm is not None:
            out.append(f"norm = {layer.adjacency_norm.value}")
        if layer.kind is ModelKind.GIN:
            out.append(f"epsilon = {layer.gin_epsilon!r}")
        if layer.kind is ModelKind.SGC:
            out.append(f"hops = {layer.sgc_hops}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# Compiled plans
# ---------------------------------------------------------------------------


def _task_to_dict(task: TaskDescriptor) -> dict:
    return {
        "out_block": list(task.out_block),
        "out_rows": list(task.out_rows),
        "out_cols": list(task.out_cols),
        "chain": [
            [[x.matrix_id, x.kind, x.i, x.j], [y.matrix_id, y.kind, y.i, y.j]]
            for x, y in task.chain
        ],
    }


def ir_to_dict(compiled: CompiledModel) -> dict:
    return {
        "spec_version": IR_SPEC_VERSION,
        "model": compiled.spec.name,
        "num_vertices": compiled.graph_meta.num_vertices,
        "num_edges": compiled.graph_meta.num_edges,
        "n1": compiled.n1,
        "n2": compiled.n2,
        "eta": compiled.eta,
        "n_cc": compiled.n_cc,
        "mem_budget": compiled.mem_budget,
        "kernels": [
            {
                "kernel_id": k.kernel_id,
                "kernel_type": k.kernel_type.value,
                "layer_id": k.layer_id,
                "f_in": k.f_in,
                "f_out": k.f_out,
                "num_vertices": k.num_vertices,
                "num_edges": k.num_edges,
                "aggregation": k.aggregation.value if k.aggregation else None,
                "activation": {
                    "kind": k.activation.kind.value,
                    "enabled": k.activation.enabled,
                    "slope": k.activation.slope,
                },
                "x_id": k.x_id,
                "y_id": k.y_id,
                "out_id": k.out_id,
                "deps": list(k.deps),
                "tasks": [_task_to_dict(t) for t in k.scheme.tasks],
            }
            for k in compiled.kernels
        ],
    }


def save_ir(compiled: CompiledModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ir_to_dict(compiled), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_ir(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("spec_version") != IR_SPEC_VERSION:
        raise ParseError(f"unsupported IR version {doc.get('spec_version')}", path)
    return doc


def kernels_from_ir(doc: dict) -> list[KernelIR]:
    """Rebuild kernel objects (with schemes) from a stored plan."""
    kernels = []
    for k in doc["kernels"]:
        act = k["activation"]
        tasks = tuple(
            TaskDescriptor(
                kernel_id=k["kernel_id"],
                kernel_type=KernelType(k["kernel_type"]),
                out_block=tuple(t["out_block"]),
                out_rows=tuple(t["out_rows"]),
                out_cols=tuple(t["out_cols"]),
                chain=tuple(
                    (BlockKey(*pair[0]), BlockKey(*pair[1])) for pair in t["chain"]
                ),
            )
            for t in k["tasks"]
        )
        kernels.append(
            KernelIR(
                kernel_id=k["kernel_id"],
                kernel_type=KernelType(k["kernel_type"]),
                layer_id=k["layer_id"],
                f_in=k["f_in"],
                f_out=k["f_out"],
                num_vertices=k["num_vertices"],
                num_edges=k["num_edges"],
                aggregation=AggregationOp(k["aggregation"]) if k["aggregation"] else None,
                activation=ActivationSpec(
                    ActivationKind(act["kind"]), act["enabled"], act["slope"]
                ),
                x_id=k["x_id"],
                y_id=k["y_id"],
                out_id=k["out_id"],
                deps=tuple(k["deps"]),
                scheme=ExecutionScheme(doc["n1"], doc["n2"], tasks),
            )
        )
    return kernels


def density_sidecar(compiled: CompiledModel) -> dict:
    """Per-block density tables for everything known at compile time."""
    tables = {}
    for mat_id, part in sorted(compiled.partitions.items()):
        tables[mat_id] = {
            "grid": list(part.grid_shape),
            "block_rows": part.block_rows,
            "block_cols": part.block_cols,
            "densities": [
                [round(rec.density, 9) for rec in row] for row in part.densities
            ],
            "nnz": part.total_nnz(),
        }
    return {"spec_version": IR_SPEC_VERSION, "matrices": tables}


def save_density_sidecar(compiled: CompiledModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(density_sidecar(compiled), fh, sort_keys=True, indent=1)
        fh.write("\n")
