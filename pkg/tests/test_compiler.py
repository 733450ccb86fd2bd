import logging
import math

import numpy as np
import pytest

from gnnsim import (
    AdjacencyNorm,
    AggregationOp,
    CompileError,
    ConfigError,
    CooMatrix,
    DenseMatrix,
    GraphMeta,
    KernelType,
    LayerSpec,
    ModelKind,
    ModelSpec,
    build_computation_graph,
    choose_partition_sizes,
    compile_model,
    normalize_adjacency,
    partition_matrix,
    zoo_model,
)
from gnnsim.compiler import kernel_workloads, max_partition_size
from gnnsim.generate import model_weights, random_features, random_graph

from conftest import random_coo, random_dense

META = GraphMeta(num_vertices=64, num_edges=128)


class TestComputationGraph:
    def test_two_layer_gcn_alternates_update_aggregate(self):
        kernels = build_computation_graph(zoo_model("gcn2", 8, 8), META)
        assert [k.kernel_type for k in kernels] == [
            KernelType.UPDATE,
            KernelType.AGGREGATE,
            KernelType.UPDATE,
            KernelType.AGGREGATE,
        ]
        assert len({k.kernel_id for k in kernels}) == 4
        # features flow through the chain
        assert kernels[0].x_id == "H:0"
        assert kernels[1].y_id == kernels[0].out_id
        assert kernels[2].x_id == kernels[1].out_id

    def test_sgc_two_hops(self):
        kernels = build_computation_graph(zoo_model("sgc2", 8, 8, hops=2), META)
        assert [k.kernel_type for k in kernels] == [
            KernelType.AGGREGATE,
            KernelType.AGGREGATE,
            KernelType.UPDATE,
        ]

    def test_empty_model(self):
        assert build_computation_graph(ModelSpec(()), META) == []

    def test_sage_layer_structure(self):
        kernels = build_computation_graph(zoo_model("sage2", 8, 8), META)
        types = [k.kernel_type for k in kernels[:4]]
        assert types == [
            KernelType.AGGREGATE,
            KernelType.UPDATE,
            KernelType.UPDATE,
            KernelType.ELEMENTWISE_ADD,
        ]
        agg, upd_n, upd_s, add = kernels[:4]
        assert upd_n.x_id == agg.out_id
        assert upd_s.x_id == "H:0"
        assert {add.x_id, add.y_id} == {upd_n.out_id, upd_s.out_id}
        # mean aggregation rides a row-normalized adjacency
        assert agg.x_id == "A:row"

    def test_gin_layer_structure(self):
        kernels = build_computation_graph(zoo_model("gin2", 8, 8, epsilon=0.5), META)
        types = [k.kernel_type for k in kernels[:3]]
        assert types == [KernelType.AGGREGATE, KernelType.UPDATE, KernelType.UPDATE]
        assert kernels[0].x_id == "A:gin:0.5"
        assert kernels[1].activation.enabled  # MLP hidden ReLU

    def test_dim_chain_mismatch_rejected(self):
        with pytest.raises(CompileError):
            ModelSpec(
                (
                    LayerSpec(ModelKind.GCN, 8, 16),
                    LayerSpec(ModelKind.GCN, 8, 8),
                )
            )

    def test_max_min_aggregation_rejected(self):
        spec = ModelSpec((LayerSpec(ModelKind.GCN, 8, 8, aggregation=AggregationOp.MAX),))
        with pytest.raises(CompileError, match="aggregation"):
            build_computation_graph(spec, META)


class TestNormalizeAdjacency:
    def test_row_normalization(self):
        a = CooMatrix.from_entries(3, 3, [(0, 1, 1.0), (0, 2, 1.0), (1, 0, 2.0)])
        out = normalize_adjacency(a, AdjacencyNorm.ROW)
        got = out.to_2d()
        assert got[0, 1] == pytest.approx(0.5)
        assert got[1, 0] == pytest.approx(1.0)

    def test_sym_normalization(self):
        a = CooMatrix.from_entries(2, 2, [(0, 1, 1.0), (1, 0, 1.0)])
        out = normalize_adjacency(a, AdjacencyNorm.SYM)
        np.testing.assert_allclose(out.to_2d(), [[0, 1], [1, 0]], rtol=1e-6)

    def test_gin_fold_adds_scaled_identity(self):
        a = CooMatrix.from_entries(2, 2, [(0, 1, 1.0), (0, 0, 1.0)])
        out = normalize_adjacency(a, AdjacencyNorm.NONE, gin_epsilon=0.5)
        got = out.to_2d()
        assert got[0, 0] == pytest.approx(2.5)  # existing 1.0 + (1 + eps)
        assert got[1, 1] == pytest.approx(1.5)

    def test_none_is_passthrough(self, rng):
        a = random_coo(rng, 5, 5, density=0.3)
        assert list(normalize_adjacency(a, AdjacencyNorm.NONE).entries()) == list(
            a.entries()
        )


class TestChoosePartitionSizes:
    def test_worked_update_example(self):
        # Q = 4096 * 64, eta*N_CC = 28, N_max = 128 -> N2 = 64
        budget = 3 * 128 * 128 * 4
        n1, n2 = choose_partition_sizes(
            [(KernelType.UPDATE, 4096 * 64)], budget, n_cc=7, eta=4
        )
        assert n2 == 64
        assert n1 == 128  # no aggregate kernels: N1 rides N_max

    def test_enormous_workload_clamps_to_n_max(self):
        budget = 3 * 128 * 128 * 4
        n1, n2 = choose_partition_sizes(
            [(KernelType.UPDATE, 10**12), (KernelType.AGGREGATE, 10**12)],
            budget,
            n_cc=7,
            eta=4,
        )
        assert (n1, n2) == (128, 128)

    def test_tiny_graph_falls_back_to_minimum(self, caplog):
        logging.getLogger("gnnsim.compiler").setLevel(logging.WARNING)
        with caplog.at_level(logging.WARNING, logger="gnnsim.compiler"):
            n1, n2 = choose_partition_sizes(
                [(KernelType.UPDATE, 100), (KernelType.AGGREGATE, 100)],
                3 * 512 * 512 * 4,
                n_cc=7,
                eta=4,
            )
        assert (n1, n2) == (16, 16)
        assert any("falling back" in r.message for r in caplog.records)
        logging.getLogger("gnnsim.compiler").setLevel(logging.ERROR)

    def test_infeasible_budget_rejected(self):
        with pytest.raises(ConfigError):
            choose_partition_sizes([(KernelType.UPDATE, 1000)], 1024, n_cc=1, eta=1)

    def test_n2_never_exceeds_n1(self):
        # aggregates much lighter than updates would push N1 below N2
        n1, n2 = choose_partition_sizes(
            [(KernelType.UPDATE, 10**9), (KernelType.AGGREGATE, 10)],
            3 * 256 * 256 * 4,
            n_cc=2,
            eta=1,
        )
        assert n1 >= n2

    def test_sizes_are_powers_of_two_and_deterministic(self):
        loads = [(KernelType.UPDATE, 123456), (KernelType.AGGREGATE, 654321)]
        a = choose_partition_sizes(loads, 3 * 256 * 256 * 4, n_cc=3, eta=2)
        b = choose_partition_sizes(loads, 3 * 256 * 256 * 4, n_cc=3, eta=2)
        assert a == b
        for n in a:
            assert n & (n - 1) == 0 and n >= 16

    def test_max_partition_size_geometry(self):
        assert max_partition_size(3 * 128 * 128 * 4) == 128
        assert max_partition_size(3 * 128 * 128 * 4 - 1) == 64


class TestPartitionedMatrix:
    def test_two_by_two_grid(self, rng):
        m = random_dense(rng, 4, 4)
        part = partition_matrix("m", m, 2, 2)
        assert part.grid_shape == (2, 2)
        rebuilt = np.block(
            [[part.block(i, j).to_2d() for j in range(2)] for i in range(2)]
        )
        np.testing.assert_array_equal(rebuilt, m.to_2d())

    def test_block_diagonal_density_structure(self):
        a = np.kron(np.eye(3, dtype=np.float32), np.ones((2, 2), dtype=np.float32))
        part = partition_matrix("a", DenseMatrix.from_2d(a), 2, 2)
        for i in range(3):
            for j in range(3):
                expected = 1.0 if i == j else 0.0
                assert part.density(i, j).density == expected

    def test_ragged_third_block_row(self, rng):
        m = random_dense(rng, 5, 4)
        part = partition_matrix("m", m, 2, 2)
        assert part.grid_shape == (3, 2)
        assert part.block_shape(2, 0) == (1, 2)
        np.testing.assert_array_equal(part.block(2, 1).to_2d(), m.to_2d()[4:5, 2:4])

    @pytest.mark.parametrize("maker", ["dense", "coo"])
    def test_nnz_conservation(self, rng, maker):
        for _ in range(5):
            rows, cols = (int(v) for v in rng.integers(3, 40, size=2))
            br, bc = (int(v) for v in rng.integers(1, 9, size=2))
            m = (
                random_dense(rng, rows, cols, density=0.4)
                if maker == "dense"
                else random_coo(rng, rows, cols, density=0.4)
            )
            part = partition_matrix("m", m, br, bc)
            total = int(np.count_nonzero(m.to_2d()))
            assert part.total_nnz() == total

    def test_coo_blocks_rebased_and_canonical(self, rng):
        m = random_coo(rng, 20, 20, density=0.25)
        part = partition_matrix("m", m, 7, 7)
        for i in range(part.grid_shape[0]):
            for j in range(part.grid_shape[1]):
                blk = part.block(i, j)
                r0, c0 = part.row_starts[i], part.col_starts[j]
                np.testing.assert_array_equal(
                    blk.to_2d(),
                    m.to_2d()[r0 : part.row_starts[i + 1], c0 : part.col_starts[j + 1]],
                )

    def test_fiber_assembly_and_density(self, rng):
        m = random_dense(rng, 10, 6, density=0.5)
        part = partition_matrix("m", m, 2, 3, fiber_rows=4)
        assert part.fiber_grid_shape == (3, 2)
        np.testing.assert_array_equal(part.fiber(1, 0).to_2d(), m.to_2d()[4:8, 0:3])
        # ragged last fiber: rows 8..10
        assert part.fiber_shape(2, 0) == (2, 3)
        rec = part.fiber_density(1, 1)
        assert rec.nnz == int(np.count_nonzero(m.to_2d()[4:8, 3:6]))


class TestTaskEnumeration:
    @pytest.mark.parametrize("v,f1,n1,n2", [(64, 32, 16, 16), (100, 48, 32, 16), (17, 5, 16, 16)])
    def test_aggregate_task_count_and_chain(self, v, f1, n1, n2):
        spec = ModelSpec((LayerSpec(ModelKind.GCN, f1, f1),))
        kernels = build_computation_graph(spec, GraphMeta(v, 10))
        agg = kernels[1]
        from gnnsim.compiler import _scheme_aggregate

        scheme = _scheme_aggregate(agg, n1, n2)
        assert len(scheme.tasks) == math.ceil(v / n1) * math.ceil(f1 / n2)
        for task in scheme.tasks:
            assert task.chain_length == math.ceil(v / n1)

    @pytest.mark.parametrize("v,f1,f2,n1,n2", [(64, 32, 8, 16, 16), (100, 48, 20, 32, 16)])
    def test_update_task_count_and_chain(self, v, f1, f2, n1, n2):
        spec = ModelSpec((LayerSpec(ModelKind.GCN, f1, f2),))
        kernels = build_computation_graph(spec, GraphMeta(v, 10))
        upd = kernels[0]
        from gnnsim.compiler import _scheme_update

        scheme = _scheme_update(upd, n1, n2)
        assert len(scheme.tasks) == math.ceil(v / n2) * math.ceil(f2 / n2)
        for task in scheme.tasks:
            assert task.chain_length == math.ceil(f1 / n2)

    def test_tasks_tile_output_exactly_once(self):
        spec = ModelSpec((LayerSpec(ModelKind.GCN, 24, 24),))
        kernels = build_computation_graph(spec, GraphMeta(50, 10))
        from gnnsim.compiler import _scheme_aggregate

        scheme = _scheme_aggregate(kernels[1], 16, 16)
        covered = np.zeros((50, 24), dtype=int)
        for task in scheme.tasks:
            (r0, r1), (c0, c1) = task.out_rows, task.out_cols
            covered[r0:r1, c0:c1] += 1
        assert (covered == 1).all()


class TestCompileModel:
    def _inputs(self, rng, v=64, f=16):
        adj = random_graph(v, avg_degree=4, rng=rng)
        feats = random_features(v, f, 0.5, rng)
        spec = zoo_model("gcn2", f, f)
        return spec, adj, feats, model_weights(spec, rng)

    def test_roles_get_their_block_sizes(self, rng):
        spec, adj, feats, weights = self._inputs(rng)
        compiled = compile_model(spec, adj, feats, weights)
        a_part = compiled.partitions["A:sym"]
        assert (a_part.block_rows, a_part.block_cols) == (compiled.n1, compiled.n1)
        w_part = compiled.partitions["W:0:w"]
        assert (w_part.block_rows, w_part.block_cols) == (compiled.n2, compiled.n2)
        h_part = compiled.partitions["H:0"]
        assert h_part.fiber_rows == compiled.n1

    def test_intermediates_not_partitioned_at_compile_time(self, rng):
        spec, adj, feats, weights = self._inputs(rng)
        compiled = compile_model(spec, adj, feats, weights)
        assert not any(k.startswith("H:k") for k in compiled.partitions)

    def test_workloads_follow_kernel_dims(self, rng):
        spec, adj, feats, weights = self._inputs(rng)
        kernels = build_computation_graph(spec, GraphMeta(64, adj.nnz))
        loads = dict()
        for ktype, q in kernel_workloads(kernels):
            loads.setdefault(ktype, []).append(q)
        assert loads[KernelType.UPDATE] == [64 * 16, 64 * 16]
        assert loads[KernelType.AGGREGATE] == [64 * 16, 64 * 16]

    def test_feature_dim_mismatch(self, rng):
        spec, adj, feats, weights = self._inputs(rng)
        bad = random_features(64, 8, 0.5, rng)
        with pytest.raises(CompileError, match="input features"):
            compile_model(spec, adj, bad, weights)

    def test_missing_weight(self, rng):
        spec, adj, feats, weights = self._inputs(rng)
        del weights["W:1:w"]
        with pytest.raises(CompileError, match="missing weight"):
            compile_model(spec, adj, feats, weights)

    def test_weight_shape_mismatch(self, rng):
        spec, adj, feats, weights = self._inputs(rng)
        weights["W:1:w"] = random_dense(rng, 3, 3)
        with pytest.raises(CompileError, match="shape"):
            compile_model(spec, adj, feats, weights)

    def test_vertex_count_mismatch(self, rng):
        spec, adj, feats, weights = self._inputs(rng)
        with pytest.raises(CompileError, match="vertices"):
            compile_model(spec, adj, random_features(32, 16, 0.5, rng), weights)
