import math

import numpy as np
import pytest

from gnnsim import (
    ActivationSpec,
    BlockKey,
    BlockStats,
    CooMatrix,
    CoreConfig,
    DenseMatrix,
    GraphInputs,
    KernelType,
    LayerSpec,
    MappingStrategy,
    ModelKind,
    ModelSpec,
    PrimitiveKind,
    RuntimeOrderError,
    SimConfig,
    SparseSide,
    TaskDescriptor,
    analyze_task,
    compile_model,
    reference_inference,
    run_inference,
    schedule_and_run,
    simulate_task_costs,
    zoo_model,
)
from gnnsim.generate import model_weights, prune_weights, random_features, random_graph

from conftest import random_dense

CFG = CoreConfig(p_sys=16)


def make_task(kernel_type=KernelType.UPDATE, pairs=1):
    chain = tuple(
        (BlockKey("X", "block", 0, t), BlockKey("Y", "block", t, 0)) for t in range(pairs)
    )
    return TaskDescriptor("k0", kernel_type, (0, 0), (0, 16), (0, 16), chain)


def stats_map(pairs):
    """pairs: list of ((rows, cols, nnz), (rows, cols, nnz))"""
    out = {}
    for t, (sx, sy) in enumerate(pairs):
        out[BlockKey("X", "block", 0, t)] = BlockStats(*sx)
        out[BlockKey("Y", "block", t, 0)] = BlockStats(*sy)
    return out


class TestAnalyzeTask:
    def test_dynamic_dense_pair_maps_to_gemm(self):
        task = make_task()
        dens = stats_map([((16, 16, 256), (16, 16, 256))])
        [dec] = analyze_task(task, dens, MappingStrategy.DYNAMIC, CFG)
        assert dec.choice is PrimitiveKind.GEMM

    def test_static1_forces_gemm_on_sparse_update(self):
        task = make_task(KernelType.UPDATE)
        dens = stats_map([((16, 16, 3), (16, 16, 256))])  # 1% vs dense
        [dec] = analyze_task(task, dens, MappingStrategy.STATIC1, CFG)
        assert dec.choice is PrimitiveKind.GEMM

    def test_static1_aggregate_uses_left_sparse_spdmm(self):
        task = make_task(KernelType.AGGREGATE)
        dens = stats_map([((16, 16, 3), (16, 16, 256))])
        [dec] = analyze_task(task, dens, MappingStrategy.STATIC1, CFG)
        assert dec.choice is PrimitiveKind.SPDMM
        assert dec.sparse_operand is SparseSide.LEFT

    def test_static2_views_left_operand_as_sparse(self):
        task = make_task(KernelType.UPDATE)
        dens = stats_map([((16, 16, 256), (16, 16, 8))])  # H dense, W sparse
        [dec] = analyze_task(task, dens, MappingStrategy.STATIC2, CFG)
        assert dec.choice is PrimitiveKind.SPDMM
        assert dec.sparse_operand is SparseSide.LEFT
        # forced-side density drives the forecast: 1.0 * 2mnd / p^2
        assert dec.predicted_cycles == 2 * 16**3 // 256

    def test_dynamic_skips_empty_pair(self):
        task = make_task()
        dens = stats_map([((16, 16, 0), (16, 16, 256))])
        [dec] = analyze_task(task, dens, MappingStrategy.DYNAMIC, CFG)
        assert dec.skipped

    def test_statics_never_skip(self):
        task = make_task(KernelType.AGGREGATE)
        dens = stats_map([((16, 16, 0), (16, 16, 256))])
        for strategy in (MappingStrategy.STATIC1, MappingStrategy.STATIC2):
            [dec] = analyze_task(task, dens, strategy, CFG)
            assert not dec.skipped and dec.predicted_cycles == 0

    def test_one_decision_per_chain_element(self):
        task = make_task(pairs=5)
        dens = stats_map([((16, 16, 100), (16, 16, 100))] * 5)
        assert len(analyze_task(task, dens, MappingStrategy.DYNAMIC, CFG)) == 5

    def test_unknown_density_is_an_ordering_violation(self):
        task = make_task()
        with pytest.raises(RuntimeOrderError):
            analyze_task(task, {}, MappingStrategy.DYNAMIC, CFG)


class TestScheduler:
    def test_hand_traced_dispatch(self):
        trace, spans, makespan = simulate_task_costs([[10, 20, 30]], 2)
        assert makespan == 40 and spans == [40]
        placed = {(t.task_index): (t.core_id, t.start, t.end) for t in trace}
        assert placed[0] == (0, 0, 10)
        assert placed[1] == (1, 0, 20)
        assert placed[2] == (0, 10, 40)  # earliest idle core, lowest id tie-break

    def test_single_core_serializes(self, rng):
        costs = [int(c) for c in rng.integers(1, 50, size=20)]
        _, _, makespan = simulate_task_costs([costs], 1)
        assert makespan == sum(costs)

    def test_perfect_parallelism(self):
        _, _, makespan = simulate_task_costs([[7] * 4], 8)
        assert makespan == 7

    def test_barrier_between_kernels(self):
        trace, spans, makespan = simulate_task_costs([[5, 1], [1]], 2)
        k1 = [t for t in trace if t.kernel_id == "k1"]
        assert k1[0].start == 5  # waits for the slow task of kernel 0
        assert spans == [5, 1] and makespan == 6

    def test_deterministic(self, rng):
        costs = [[int(c) for c in rng.integers(0, 30, size=40)] for _ in range(3)]
        assert simulate_task_costs(costs, 5) == simulate_task_costs(costs, 5)


def small_inputs(rng, v=48, f=12, model="gcn2", feature_density=0.5, **zoo_kwargs):
    adj = random_graph(v, avg_degree=4, rng=rng)
    feats = random_features(v, f, feature_density, rng)
    spec = zoo_model(model, f, f, **zoo_kwargs)
    return spec, GraphInputs(adj, feats, model_weights(spec, rng))


class TestEndToEnd:
    def test_hand_computed_path_graph_gcn(self):
        adjacency = CooMatrix.from_entries(
            4, 4, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0),
                   (2, 3, 1.0), (3, 2, 1.0)]
        )
        features = DenseMatrix.from_2d([[1, 0], [0, 1], [1, 1], [2, 0]])
        from gnnsim.model import AdjacencyNorm

        spec = ModelSpec(
            (
                LayerSpec(ModelKind.GCN, 2, 2, adjacency_norm=AdjacencyNorm.NONE),
                LayerSpec(
                    ModelKind.GCN, 2, 2, adjacency_norm=AdjacencyNorm.NONE,
                    activation=ActivationSpec.none(),
                ),
            )
        )
        weights = {
            "W:0:w": DenseMatrix.from_2d(np.eye(2)),
            "W:1:w": DenseMatrix.from_2d([[1, 1], [0, 1]]),
        }
        graph = GraphInputs(adjacency, features, weights)
        expected = [[2, 3], [2, 4], [3, 5], [2, 3]]
        ref = reference_inference(spec, graph)
        assert ref.to_2d().tolist() == expected
        for strategy in MappingStrategy:
            emb, _ = run_inference(spec, graph, strategy)
            assert emb.to_2d().tolist() == expected

    def test_all_zero_features_give_all_zero_embeddings(self, rng):
        spec, graph = small_inputs(rng)
        graph = GraphInputs(graph.adjacency, DenseMatrix.zeros(48, 12), graph.weights)
        emb, report = run_inference(spec, graph, MappingStrategy.DYNAMIC)
        assert not emb.to_2d().any()
        # every matmul pair saw an empty operand
        assert report.decisions_total["skip"] > 0
        assert report.executed_compute_total == 0

    @pytest.mark.parametrize("model", ["gcn2", "sage2", "gin2", "sgc2"])
    def test_matches_reference_pipeline(self, rng, model):
        spec, graph = small_inputs(rng, model=model)
        expected = reference_inference(spec, graph).to_2d()
        scale = max(np.abs(expected).max(), 1e-6)
        for strategy in MappingStrategy:
            emb, _ = run_inference(spec, graph, strategy)
            assert np.abs(emb.to_2d() - expected).max() / scale < 1e-4

    def test_strategy_invariance_of_values(self, rng):
        spec, graph = small_inputs(rng, v=60, f=20)
        outs = [
            run_inference(spec, graph, s)[0].to_2d() for s in MappingStrategy
        ]
        scale = max(np.abs(outs[0]).max(), 1e-6)
        for other in outs[1:]:
            assert np.abs(other - outs[0]).max() / scale < 1e-6

    def test_deterministic_reports(self, rng):
        spec, graph = small_inputs(rng)
        emb_a, rep_a = run_inference(spec, graph, MappingStrategy.DYNAMIC)
        emb_b, rep_b = run_inference(spec, graph, MappingStrategy.DYNAMIC)
        np.testing.assert_array_equal(emb_a.values, emb_b.values)
        assert rep_a == rep_b

    def test_empty_model_passes_features_through(self, rng):
        spec = ModelSpec(())
        adj = random_graph(20, avg_degree=3, rng=rng)
        feats = random_features(20, 6, 0.5, rng)
        emb, report = run_inference(spec, GraphInputs(adj, feats, {}))
        np.testing.assert_array_equal(emb.to_2d(), feats.to_2d())
        assert report.total_makespan == 0 and report.kernels == []

    def test_right_sparse_spdmm_path_is_exercised_and_correct(self, rng):
        # dense-ish features against very sparse weights force the
        # analyzer to put the right operand in the sparse buffer
        spec, graph = small_inputs(rng, feature_density=0.9)
        graph = GraphInputs(
            graph.adjacency, graph.features, prune_weights(graph.weights, 0.3)
        )
        emb, report = run_inference(spec, graph, MappingStrategy.DYNAMIC)
        assert report.decisions_total["spdmm"] > 0
        expected = reference_inference(spec, graph).to_2d()
        scale = max(np.abs(expected).max(), 1e-6)
        assert np.abs(emb.to_2d() - expected).max() / scale < 1e-4


class TestReportInvariants:
    def test_work_conservation_bounds(self, rng):
        spec, graph = small_inputs(rng, v=70, f=16)
        config = SimConfig(n_cc=3)
        _, report = run_inference(spec, graph, MappingStrategy.DYNAMIC, config)
        for k in report.kernels:
            assert k.max_task_cycles <= k.makespan <= k.total_task_cycles
            assert k.makespan >= math.ceil(k.total_task_cycles / config.n_cc)
        assert report.total_makespan >= max(report.core_busy_cycles)

    def test_analyzer_decision_count_equals_chain_lengths(self, rng):
        spec, graph = small_inputs(rng)
        config = SimConfig()
        compiled = compile_model(
            spec, graph.adjacency, graph.features, graph.weights,
            n_cc=config.n_cc, eta=config.eta, mem_budget=config.mem_budget,
        )
        _, report = schedule_and_run(compiled, MappingStrategy.DYNAMIC, config)
        expected = {
            k.kernel_id: sum(t.chain_length for t in k.scheme.tasks)
            for k in compiled.kernels
        }
        for k in report.kernels:
            assert k.analyzer_decisions == expected[k.kernel_id]

    def test_visible_overheads_never_shrink_makespan(self, rng):
        spec, graph = small_inputs(rng)
        _, hidden = run_inference(spec, graph, MappingStrategy.DYNAMIC, SimConfig())
        _, visible = run_inference(
            spec, graph, MappingStrategy.DYNAMIC, SimConfig(visible_overheads=True)
        )
        assert visible.total_makespan >= hidden.total_makespan
        assert visible.transform_cycles_total == hidden.transform_cycles_total

    def test_core_count_monotonicity(self, rng):
        spec, graph = small_inputs(rng)
        _, one = run_inference(spec, graph, MappingStrategy.DYNAMIC, SimConfig(n_cc=1))
        _, seven = run_inference(spec, graph, MappingStrategy.DYNAMIC, SimConfig(n_cc=7))
        assert one.total_makespan >= seven.total_makespan

    def test_intermediate_density_matches_brute_force(self, rng):
        spec, graph = small_inputs(rng)
        config = SimConfig()
        compiled = compile_model(
            spec, graph.adjacency, graph.features, graph.weights,
            n_cc=config.n_cc, eta=config.eta, mem_budget=config.mem_budget,
        )
        state = {}
        schedule_and_run(compiled, MappingStrategy.DYNAMIC, config, state_out=state)
        checked = 0
        for mat_id, part in state["partitions"].items():
            if not mat_id.startswith("H:k"):
                continue
            full = state["matrices"][mat_id].to_2d()
            nbr, nbc = part.grid_shape
            for i in range(nbr):
                for j in range(nbc):
                    r0, r1 = part.row_starts[i], part.row_starts[i + 1]
                    c0, c1 = part.col_starts[j], part.col_starts[j + 1]
                    assert part.density(i, j).nnz == int(
                        np.count_nonzero(full[r0:r1, c0:c1])
                    )
                    checked += 1
        assert checked > 0
