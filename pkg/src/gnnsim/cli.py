"""Command-line interface.

Subcommands:

  gen      write a synthetic graph, features, model file, and pruned
           weight sets to a directory
  compile  lower (model, graph) to the reusable plan artifact
           (<out>.ir.json + <out>.density.json)
  run      simulate one inference; emits records.jsonl, embeddings.txt,
           and a per-kernel figure
  compare  sweep strategies x weight densities; emits records.jsonl,
           speedup tables, and a comparison figure
  profile  print the per-block density grid of a matrix file
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import generate, io, report
from .compiler import DEFAULT_MEM_BUDGET, compile_model, partition_matrix
from .errors import ConfigError, GnnSimError
from .matrices import CooMatrix, DenseMatrix
from .model import ModelSpec, ZOO_IDS, zoo_model
from .primitives import CoreConfig
from .runtime import GraphInputs, MappingStrategy, SimConfig, run_inference

_STRATEGIES = {
    "s1": MappingStrategy.STATIC1,
    "s2": MappingStrategy.STATIC2,
    "dynamic": MappingStrategy.DYNAMIC,
}


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cores", type=int, default=7, help="number of computation cores")
    p.add_argument("--psys", type=int, default=16, help="ALU array dimension per core")
    p.add_argument("--lane-width", type=int, default=16, help="transform unit lanes")
    p.add_argument("--eta", type=int, default=4, help="load-balance factor")
    p.add_argument(
        "--mem-budget", type=int, default=DEFAULT_MEM_BUDGET,
        help="on-chip bytes per core for partition sizing",
    )
    p.add_argument(
        "--visible-overheads", action="store_true",
        help="charge transform cycles and memory transfer to the makespan",
    )
    p.add_argument("--clock-mhz", type=float, default=250.0)
    p.add_argument("--bandwidth-gbps", type=float, default=77.0)


def _add_input_flags(p: argparse.ArgumentParser, multi_graph: bool = False) -> None:
    p.add_argument(
        "--graph", action="append" if multi_graph else None, default=None,
        help="graph file (edge list or MatrixMarket); omit to generate one",
    )
    p.add_argument("--features", help="feature matrix file; omit to generate one")
    p.add_argument(
        "--model", default="gcn2",
        help=f"model file path or zoo id {ZOO_IDS}",
    )
    p.add_argument("--weights", help="directory of weight matrices; omit to generate")
    p.add_argument("--hidden", type=int, default=64, help="zoo model hidden width")
    p.add_argument("--out-dim", type=int, default=None, help="zoo model output width")
    p.add_argument("--hops", type=int, default=2, help="sgc zoo hop count")
    p.add_argument("--epsilon", type=float, default=0.0, help="gin zoo epsilon")
    p.add_argument("--vertices", type=int, default=256, help="generated graph size")
    p.add_argument("--density", type=float, default=None, help="generated graph density")
    p.add_argument("--avg-degree", type=float, default=None, help="generated graph degree")
    p.add_argument("--graph-kind", choices=("er", "powerlaw"), default="er")
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--feature-density", type=float, default=0.5)
    p.add_argument("--signed-values", action="store_true",
                   help="draw signed feature/weight values")
    p.add_argument("--seed", type=int, default=0)


def _sim_config(args) -> SimConfig:
    return SimConfig(
        core=CoreConfig(p_sys=args.psys, lane_width=args.lane_width),
        n_cc=args.cores,
        eta=args.eta,
        mem_budget=args.mem_budget,
        visible_overheads=args.visible_overheads,
        clock_mhz=args.clock_mhz,
        mem_bandwidth_gbps=args.bandwidth_gbps,
    )


def _load_one_graph(path_or_none, args, rng) -> tuple[str, CooMatrix]:
    if path_or_none:
        mat = io.load_matrix(path_or_none)
        if isinstance(mat, DenseMatrix):
            from .transforms import dense_to_sparse

            mat = dense_to_sparse(mat)
        return Path(path_or_none).stem, mat
    density, avg_degree = args.density, args.avg_degree
    if density is None and avg_degree is None:
        avg_degree = 16.0
    adj = generate.random_graph(
        args.vertices, density=density, avg_degree=avg_degree,
        kind=args.graph_kind, rng=rng,
    )
    return f"synthetic-v{args.vertices}", adj


def _load_features(args, num_vertices: int, rng) -> DenseMatrix:
    if args.features:
        feats = io.load_matrix(args.features)
        if isinstance(feats, CooMatrix):
            from .transforms import sparse_to_dense

            feats = sparse_to_dense(feats)
        if feats.rows != num_vertices:
            raise ConfigError(
                f"feature file has {feats.rows} rows, graph has {num_vertices} vertices"
            )
        return feats
    return generate.random_features(
        num_vertices, args.feature_dim, args.feature_density, rng, args.signed_values
    )


def _resolve_model(args, f_in: int) -> ModelSpec:
    if args.model in ZOO_IDS:
        return zoo_model(
            args.model, f_in, args.hidden, args.out_dim,
            hops=args.hops, epsilon=args.epsilon,
        )
    return io.parse_model_file(args.model)


def _load_weights(args, spec: ModelSpec, rng) -> dict[str, DenseMatrix]:
    if args.weights:
        weights = {}
        root = Path(args.weights)
        for wid, _ in spec.weight_slots():
            _, layer, slot = wid.split(":")
            stem = root / f"l{layer}_{slot}"
            for ext in (".npy", ".txt"):
                candidate = stem.with_suffix(ext)
                if candidate.exists():
                    weights[wid] = io.load_matrix(candidate)
                    break
            else:
                raise ConfigError(f"no weight file for {wid} under {root}")
        return weights
    return generate.model_weights(spec, rng, args.signed_values)


def _gather_inputs(args, graph_path=None):
    """Deterministic input assembly: graph, then features, then weights."""
    rng = np.random.default_rng(args.seed)
    label, adjacency = _load_one_graph(graph_path or args.graph, args, rng)
    features = _load_features(args, adjacency.rows, rng)
    spec = _resolve_model(args, features.cols)
    weights = _load_weights(args, spec, rng)
    return label, spec, GraphInputs(adjacency, features, weights)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.density is None and args.avg_degree is None:
        raise ConfigError("gen requires --density or --avg-degree")
    adj = generate.random_graph(
        args.vertices, density=args.density, avg_degree=args.avg_degree,
        kind=args.graph_kind, rng=rng,
    )
    with open(out / "graph.edges", "w", encoding="utf-8") as fh:
        for r, c, v in adj.entries():
            fh.write(f"{r} {c}\n" if v == 1.0 else f"{r} {c} {v:.9g}\n")
    feats = generate.random_features(
        args.vertices, args.feature_dim, args.feature_density, rng, args.signed_values
    )
    io.save_dense_grid(feats, out / "features.txt")
    spec = _resolve_model(args, args.feature_dim)
    io.save_model_file(spec, out / "model.txt")
    base = generate.model_weights(spec, rng, args.signed_values)
    densities = [float(d) for d in args.weight_densities.split(",")]
    for density in densities:
        wdir = out / f"weights-d{density:g}"
        wdir.mkdir(exist_ok=True)
        for wid, w in generate.prune_weights(base, density).items():
            _, layer, slot = wid.split(":")
            io.save_dense_grid(w, wdir / f"l{layer}_{slot}.txt")
    print(f"wrote graph ({adj.nnz} edges), features, model, and "
          f"{len(densities)} weight set(s) to {out}")
    return 0


def cmd_compile(args) -> int:
    started = time.perf_counter()
    _, spec, inputs = _gather_inputs(args)
    compiled = compile_model(
        spec, inputs.adjacency, inputs.features, inputs.weights,
        n_cc=args.cores, eta=args.eta, mem_budget=args.mem_budget,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.save_ir(compiled, f"{out}.ir.json")
    io.save_density_sidecar(compiled, f"{out}.density.json")
    elapsed = time.perf_counter() - started
    print(
        f"compiled {len(compiled.kernels)} kernels (N1={compiled.n1}, "
        f"N2={compiled.n2}) in {elapsed * 1e3:.2f} ms -> {out}.ir.json"
    )
    return 0


def _write_run_outputs(out: Path, records, embeddings, run_rec, kernel_recs):
    out.mkdir(parents=True, exist_ok=True)
    report.write_records(records, out / "records.jsonl")
    io.save_dense_grid(embeddings, out / "embeddings.txt")
    report.render_run_figure(run_rec, kernel_recs, out / "report.png")
    table = report.runs_table(records)
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    return table


def cmd_run(args) -> int:
    label, spec, inputs = _gather_inputs(args)
    density = args.weight_density
    if density < 1.0:
        inputs = GraphInputs(
            inputs.adjacency, inputs.features,
            generate.prune_weights(inputs.weights, density),
        )
    config = _sim_config(args)
    strategy = _STRATEGIES[args.strategy]
    embeddings, sim = run_inference(spec, inputs, strategy, config)
    run_id = f"{label}:{spec.name}:{strategy.value}:d{density:g}"
    run_rec = report.run_record(run_id, label, density, sim, args.clock_mhz)
    kernel_recs = report.kernel_records(run_id, sim)
    table = _write_run_outputs(
        Path(args.out), [run_rec] + kernel_recs, embeddings, run_rec, kernel_recs
    )
    print(table)
    print(
        f"\nmakespan {sim.total_makespan} cycles "
        f"({run_rec['latency_ms']:.6f} ms at {args.clock_mhz:g} MHz)"
    )
    return 0


def cmd_compare(args) -> int:
    strategies = []
    for name in args.strategies.split(","):
        name = name.strip().lower()
        if name not in _STRATEGIES:
            raise ConfigError(f"unknown strategy {name!r}")
        strategies.append(name)
    densities = [float(d) for d in args.weight_densities.split(",")]
    config = _sim_config(args)
    graph_paths = args.graph or [None]

    records: list[dict] = []
    speedup_recs: list[dict] = []
    for graph_path in graph_paths:
        label, spec, inputs = _gather_inputs(args, graph_path)
        compiled_cache: dict[float, object] = {}
        for density in densities:
            pruned = GraphInputs(
                inputs.adjacency, inputs.features,
                generate.prune_weights(inputs.weights, density),
            )
            makespans: dict[str, int] = {}
            for name in strategies:
                embeddings, sim = run_inference(
                    spec, pruned, _STRATEGIES[name], config
                )
                run_id = f"{label}:{spec.name}:{name}:d{density:g}"
                records.append(
                    report.run_record(run_id, label, density, sim, args.clock_mhz)
                )
                records.extend(report.kernel_records(run_id, sim))
                makespans[name] = sim.total_makespan
            if len(strategies) > 1:
                rec = report.speedup_record(label, density, makespans)
                records.append(rec)
                speedup_recs.append(rec)
    if speedup_recs:
        records.append(report.geomean_record(speedup_recs))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_records(records, out / "records.jsonl")
    tables = [report.runs_table(records)]
    if speedup_recs:
        tables.append(report.speedups_table(records))
        report.render_compare_figure(records, out / "compare.png")
    table = "\n\n".join(tables)
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_profile(args) -> int:
    mat = io.load_matrix(args.matrix)
    part = partition_matrix("matrix", mat, args.n1, args.n2)
    nbr, nbc = part.grid_shape
    print(f"{mat.rows}x{mat.cols} matrix, {args.n1}x{args.n2} blocks ({nbr}x{nbc} grid)")
    header = ["blk"] + [str(j) for j in range(nbc)]
    rows = []
    for i in range(nbr):
        rows.append([str(i)] + [f"{part.density(i, j).density:.4f}" for j in range(nbc)])
    print(report._format_table(header, rows))
    total = part.total_nnz()
    size = mat.rows * mat.cols
    print(f"total nnz {total} (density {total / size if size else 0.0:.6f})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gnnsim",
        description="Simulate sparsity-adaptive GNN inference on a modeled "
        "multi-core matmul accelerator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_input_flags(p)
    p.add_argument("--weight-densities", default="1.0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compile", help="emit the reusable compiled plan")
    _add_input_flags(p)
    _add_sim_flags(p)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="simulate one inference")
    _add_input_flags(p)
    _add_sim_flags(p)
    p.add_argument("--strategy", choices=sorted(_STRATEGIES), default="dynamic")
    p.add_argument("--weight-density", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="strategy / weight-density sweep")
    _add_input_flags(p, multi_graph=True)
    _add_sim_flags(p)
    p.add_argument("--strategies", default="s1,s2,dynamic")
    p.add_argument("--weight-densities", default="1.0,0.5,0.3,0.1,0.05")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("profile", help="per-block density grid of a matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--n1", type=int, default=16, help="block rows")
    p.add_argument("--n2", type=int, default=16, help="block cols")
    p.set_defaults(func=cmd_profile)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GnnSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
