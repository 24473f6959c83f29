import math

import pytest

from iotbench import driver
from iotbench.config import ConfigError, config_items
from iotbench.driver import min_rate_gate, prerequisite_checks, run_benchmark
from iotbench.sut.modeled import ModeledSut

from conftest import desk_config


def failing(checks):
    return [c.name for c in checks if c.status == "fail"]


@pytest.fixture(scope="module")
def desk_report():
    return run_benchmark(desk_config())


class TestPrerequisites:
    def test_full_scale_needs_half_hour(self):
        cfg = desk_config(desk_scale="false", min_run_seconds=60)
        assert failing(prerequisite_checks(cfg)) == ["min-run-duration"]
        report = run_benchmark(cfg)
        assert not report.valid and report.failure_stage == "prerequisite"
        assert report.iterations == []

    def test_desk_scale_floor(self):
        assert failing(prerequisite_checks(desk_config(min_run_seconds=4))) == ["min-run-duration"]
        assert failing(prerequisite_checks(desk_config(min_run_seconds=5))) == []

    def test_unknown_adapter(self):
        cfg = desk_config(sut__adapter="cassandra", clock="wall")
        assert "sut-adapter" in failing(prerequisite_checks(cfg))

    def test_short_warmup_under_schedule_pacing(self):
        cfg = desk_config(warmup_seconds=5)
        assert failing(prerequisite_checks(cfg)) == ["warmup-duration"]
        assert failing(prerequisite_checks(desk_config(warmup_seconds=5, pacing="open"))) == []

    def test_missing_sample_file(self, tmp_path):
        cfg = desk_config(datagen__method="replay", sample__path=tmp_path / "nope.csv")
        assert failing(prerequisite_checks(cfg)) == ["sample-file"]

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert failing(prerequisite_checks(desk_config(), blocker / "sub")) == ["output-dir"]


class TestMinRateGate:
    def test_examples(self):
        assert min_rate_gate(4_000_000, 100, 1800)  # 22.2 per sensor per second
        assert not min_rate_gate(1_000_000, 100, 1800)  # 5.6
        assert min_rate_gate(2000, 10, 10)  # exactly 20

    def test_errors(self):
        with pytest.raises(ConfigError):
            min_rate_gate(1, 0, 1)
        with pytest.raises(ValueError):
            min_rate_gate(1, 1, 0)


class TestValidRun:
    def test_valid_and_two_iterations(self, desk_report):
        r = desk_report
        assert r.valid, failing(r.checks)
        assert len(r.iterations) == 2
        assert r.allocation == [2400, 2400, 1200]

    def test_each_iteration_meets_minimum(self, desk_report):
        for it in desk_report.iterations:
            assert it.T >= 10
            assert it.measured.N_p == 6000 == sum(it.measured.points_per_client)
            assert it.data_check.passed
            assert it.data_check.verified == 100

    def test_scale_out_near_half_warmup(self, desk_report):
        cfg = desk_config()
        for it in desk_report.iterations:
            assert abs(it.measured.t_0 - it.warmup_seconds / 2) <= cfg.tick_seconds

    def test_metrics_consistent(self, desk_report):
        m = desk_report.metrics
        assert m["iotps"] == pytest.approx(6000 / max(m["T_1"], m["T_2"]))
        assert m["N_p"] == m["n_0"] + m["n_s"] == 6000
        assert m["usd_per_kiotps"] == pytest.approx(m["total_cost"] / (m["iotps"] / 1000))
        assert m["compression_ratio"] == pytest.approx(10, rel=0.01)

    def test_config_echoed(self, desk_report):
        assert desk_report.config == config_items(desk_config())
        assert set(desk_report.config) >= {"sensors", "clients", "records", "sut.adapter", "modeled.rate"}

    def test_checks_cover_both_iterations(self, desk_report):
        names = {c.name for c in desk_report.checks}
        for it in (1, 2):
            for n in ("measured-run", "scale-out", "run-duration", "counting-identity", "inserted-check",
                      "disk-check", "cross-client-verification", "min-rate"):
                assert f"iteration-{it}:{n}" in names
        assert "replica-check" in names


class TestWorkloadShape:
    def test_half_budget_at_boundary(self):
        # too few points for the per-sensor rate gate, which is not under test here
        cfg = desk_config(records=1000, batch_size=5, verify_sample=0, min_per_sensor_rate=0)
        r = run_benchmark(cfg)
        assert r.valid, failing(r.checks)
        for it in r.iterations:
            for written in it.measured.boundary_progress[:-1]:
                assert abs(written - 200) <= 0.05 * 200

    def test_open_pacing_scale_out_law(self):
        cfg = desk_config(
            records=12_500, pacing="open", warmup_seconds=10, sut__nodes=2, modeled__rate=1000, batch_size=10
        )
        r = run_benchmark(cfg)
        assert r.valid, failing(r.checks)
        assert r.metrics["iotps"] / 1000 == pytest.approx(1.25, abs=0.05)


class TestFailures:
    def test_non_scalable_is_skipped_not_failed(self):
        r = run_benchmark(desk_config(sut__scalable="false"))
        assert r.valid, failing(r.checks)
        statuses = {c.name: c.status for c in r.checks}
        assert statuses["iteration-1:scale-out"] == "skipped"
        assert r.metrics["scale_out_skipped"] is True

    def test_dropped_point_fails_inserted_check(self, dropping_adapter):
        cfg = desk_config()
        sut = dropping_adapter(ModeledSut(rate=2000, ratio=10), drop_at=1)
        r = run_benchmark(cfg, sut=sut)
        assert not r.valid
        assert r.failure_stage == "iteration-1:inserted-check"
        dc = r.iterations[0].data_check
        assert dc.deficit_points == 1

    def test_client_error_invalidates(self):
        class Broken(ModeledSut):
            def query(self, spec):
                raise RuntimeError("query engine down")

        r = run_benchmark(desk_config(query_fraction=0.5), sut=Broken(rate=2000))
        assert not r.valid
        # the first query is issued during warmup
        assert r.failure_stage == "iteration-1:warmup"
        assert r.metrics == {}


class TestGeneration:
    @pytest.fixture
    def sample_csv(self, tmp_path):
        p = tmp_path / "sample.csv"
        lines = ["sensor_id,timestamp_ms,value"]
        lines += [f"s,{i * 1000},{20 + 5 * math.sin(i / 20):.4f}" for i in range(2000)]
        p.write_text("\n".join(lines) + "\n")
        return p

    def test_model_fitted_once(self, sample_csv, monkeypatch):
        calls = []
        real = driver.fit_model

        def counting(points):
            calls.append(len(points))
            return real(points)

        monkeypatch.setattr(driver, "fit_model", counting)
        r = run_benchmark(desk_config(datagen__method="model", sample__path=sample_csv))
        assert r.valid, failing(r.checks)
        assert calls == [2000]
        assert [it.model_fitted for it in r.iterations] == [True, False]

    def test_replay_run(self, sample_csv):
        r = run_benchmark(desk_config(datagen__method="replay", sample__path=sample_csv, sample__set_count=4))
        assert r.valid, failing(r.checks)
        assert r.metrics["N_p"] == 6000
