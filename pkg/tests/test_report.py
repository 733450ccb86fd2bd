import numpy as np
import pytest

from gnnsim import FormatError, GraphInputs, MappingStrategy, run_inference, zoo_model
from gnnsim import report
from gnnsim.generate import model_weights, random_features, random_graph


@pytest.fixture(scope="module")
def sample_records():
    rng = np.random.default_rng(42)
    adj = random_graph(48, avg_degree=4, rng=rng)
    feats = random_features(48, 12, 0.5, rng)
    spec = zoo_model("gcn2", 12, 12)
    graph = GraphInputs(adj, feats, model_weights(spec, rng))
    records = []
    makespans = {}
    for strategy in MappingStrategy:
        _, sim = run_inference(spec, graph, strategy)
        run_id = f"toy:{strategy.value}:d1"
        records.append(report.run_record(run_id, "toy", 1.0, sim, 250.0))
        records.extend(report.kernel_records(run_id, sim))
        makespans[strategy.value] = sim.total_makespan
    speedup = report.speedup_record("toy", 1.0, makespans)
    records.append(speedup)
    records.append(report.geomean_record([speedup]))
    return records


class TestSchema:
    def test_all_records_validate(self, sample_records):
        for rec in sample_records:
            report.validate_record(rec)

    def test_missing_field_detected(self, sample_records):
        broken = dict(sample_records[0])
        del broken["latency_ms"]
        with pytest.raises(FormatError, match="latency_ms"):
            report.validate_record(broken)

    def test_unknown_record_type(self):
        with pytest.raises(FormatError, match="unknown record"):
            report.validate_record({"record": "mystery", "schema_version": 1})

    def test_speedup_columns(self, sample_records):
        speedup = next(r for r in sample_records if r["record"] == "speedup")
        spans = speedup["makespans"]
        assert speedup["so_s1"] == round(spans["s1"] / spans["dynamic"], 6)
        assert speedup["so_s2"] == round(spans["s2"] / spans["dynamic"], 6)


class TestRoundTrip:
    def test_reload_and_recompute_reproduces_bytes(self, sample_records, tmp_path):
        p = tmp_path / "records.jsonl"
        report.write_records(sample_records, p)
        original = p.read_bytes()
        loaded = report.load_records(p)
        recomputed = report.recompute_derived(loaded)
        assert report.dump_records(recomputed).encode() == original

    def test_tables_render(self, sample_records):
        runs = report.runs_table(sample_records)
        assert "makespan" in runs and "dynamic" in runs
        speeds = report.speedups_table(sample_records)
        assert "SO-S1" in speeds and "geomean" in speeds


class TestFigures:
    def test_run_figure_written(self, sample_records, tmp_path):
        run_rec = next(r for r in sample_records if r["record"] == "run")
        kernels = [r for r in sample_records if r["record"] == "kernel"]
        out = tmp_path / "run.png"
        report.render_run_figure(run_rec, kernels, out)
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_compare_figure_written(self, sample_records, tmp_path):
        out = tmp_path / "compare.png"
        report.render_compare_figure(sample_records, out)
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
