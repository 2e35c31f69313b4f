import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from girp import bench, errors, fixtures
from girp.bench import BudgetModel, LatencyReport, Scenario, check_budget, stats
from girp.script import SessionTarget
from girp.session import Session


def oracle_stats(samples):
    """Brute-force reference for mean / sample sd / nearest-rank p99."""
    n = len(samples)
    mean = sum(samples) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in samples) / (n - 1)) if n > 1 else 0.0
    p99 = sorted(samples)[math.ceil(0.99 * n) - 1]
    return mean, sd, p99


class TestStats:
    def test_one_to_hundred(self):
        samples = list(range(1, 101))
        mean, sd, p99 = stats(samples)
        assert mean == 50.5
        # sample sd of 1..100: sqrt(sum((i-50.5)^2)/99) = sqrt(101*100/12/... )
        assert sd == pytest.approx(29.011491975882016, abs=1e-9)
        assert p99 == 99  # ceil(0.99*100)-1 = index 98 -> value 99

    def test_constant_samples(self):
        mean, sd, p99 = stats([7] * 50)
        assert (mean, sd, p99) == (7.0, 0.0, 7)

    def test_single_sample_sd_zero_and_flagged(self):
        mean, sd, p99 = stats([42])
        assert (mean, sd, p99) == (42.0, 0.0, 42)
        assert LatencyReport(Scenario.Rtt, [42]).sd_flagged

    def test_empty_raises(self):
        with pytest.raises(errors.Empty):
            stats([])
        with pytest.raises(errors.Empty):
            LatencyReport(Scenario.Rtt, [])

    def test_p99_nearest_rank_small_n(self):
        # n=2: ceil(1.98)-1 = 1 -> the larger sample
        assert stats([1, 10])[2] == 10
        # n=100 picks index 98, not interpolation
        assert stats(list(range(100)))[2] == 98

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(0, 10**9), min_size=1, max_size=400))
    def test_matches_brute_force_oracle(self, samples):
        mean, sd, p99 = stats(samples)
        emean, esd, ep99 = oracle_stats(samples)
        assert mean == pytest.approx(emean, rel=1e-12)
        assert sd == pytest.approx(esd, rel=1e-9, abs=1e-9)
        assert p99 == ep99


class TestReport:
    def test_json_shape(self):
        report = LatencyReport(Scenario.ColdStart, [1_000_000, 2_000_000])
        doc = json.loads(report.to_json())
        assert doc["scenario"] == "cold-start"
        assert doc["n"] == 2
        assert doc["mean_ms"] == pytest.approx(1.5)
        assert "samples" not in doc
        assert json.loads(report.to_json(raw=True))["samples"] == [1_000_000, 2_000_000]

    def test_table_format(self):
        report = LatencyReport(Scenario.FrameDraw, [500_000] * 10)
        table = bench.render_table([report])
        assert "AVG" in table and "SD" in table and "99th" in table
        assert "0.5" in table
        # baseline row is present and tagged external
        assert "8.3" in table and "h264" in table and "external" in table
        # published hardware rows are tagged, not presented as measured
        assert "published" in table


class TestBudget:
    def test_budget_120hz(self):
        model = BudgetModel(refresh_hz=120, sync_ms=1.0)
        assert model.device_budget_ms == pytest.approx(7.33, abs=0.01)

    def test_decomposition_subtracts_access_delay(self):
        report = LatencyReport(Scenario.FrameDraw, [2_000_000] * 10)
        verdict = check_budget(report, BudgetModel())
        assert verdict.access_ms == pytest.approx(1.0)  # 0.5 up + 0.5 down
        # what remains for server-side work: budget - p99 - access delay
        assert verdict.after_access_ms == pytest.approx(verdict.headroom_ms - 1.0)
        assert verdict.headroom_ms == pytest.approx(verdict.device_budget_ms - 2.0)
        assert verdict.fits
        table = verdict.table()
        assert "7.3" in table

    def test_budget_violation_detected(self):
        report = LatencyReport(Scenario.FrameDraw, [20_000_000] * 10)
        assert not check_budget(report, BudgetModel()).fits

    def test_invalid_model_rejected(self):
        with pytest.raises(errors.InvalidModel):
            check_budget(LatencyReport(Scenario.FrameDraw, [1]),
                         BudgetModel(refresh_hz=2000, sync_ms=1.0))


class TestScenarios:
    def test_cold_start_runs(self):
        report = bench.run_cold_start(SessionTarget(Session()), iterations=5,
                                      warmup=1)
        assert report.scenario is Scenario.ColdStart
        assert report.n == 5
        assert all(s > 0 for s in report.samples)

    def test_frame_draw_runs(self):
        report = bench.run_frame_draw(SessionTarget(Session()), frames=5,
                                      resolution=(64, 2), warmup=1)
        assert report.scenario is Scenario.FrameDraw
        assert report.n == 5

    def test_migration_bench(self):
        session = Session()
        target = SessionTarget(session)
        mhash = target.load_module(fixtures.multiply_kernel())
        target.create_pipeline(mhash, "main")
        target.alloc(1, 128 * 1024)
        target.alloc(2, 128 * 1024)
        result = bench.run_migration_bench(session, iterations=5, warmup=1)
        assert result.failures == 0
        labels = [r.label for r in result.reports()]
        assert any("export" in l for l in labels)
        assert any("import" in l for l in labels)
        assert any("total" in l for l in labels)

    def test_migration_tamper_counted_as_failure(self):
        session = Session()
        target = SessionTarget(session)
        mhash = target.load_module(fixtures.multiply_kernel())
        target.create_pipeline(mhash, "main")
        target.alloc(1, 4096)
        with pytest.raises(errors.Empty) as ei:
            bench.run_migration_bench(session, iterations=3, warmup=0,
                                      tamper=True)
        assert "3" in str(ei.value)  # every tampered import was rejected


class TestConstantSizeIr:
    def test_load_module_frame_identical_across_resolutions(self):
        # the module (and thus its LOAD_MODULE frame) never depends on
        # resolution; only the dispatch size and framebuffer allocation do
        from girp import wire
        from girp.reflect import hash_module

        module = fixtures.frame_kernel()
        frames = []
        for _w, _h in ((640, 360), (1280, 720)):
            frames.append(wire.encode(
                wire.LoadModule(hash_module(module), module),
                session_id=bytes(16), request_id=1))
        assert frames[0] == frames[1]
