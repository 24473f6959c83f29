"""Benchmark orchestration.

A run is: prerequisite checks, then two iterations of
``[model phase (first iteration only)] -> warmup -> measured run -> data check``
with a system cleanup in between, then metrics and a report.

A measured run has a stable phase of half the warmup runtime with k-1
clients, then the SUT is scaled out by one node and the k-th client joins.
With ``pacing=schedule`` every client ingests at the same fixed rate
(standard share / warmup runtime), so the standard clients are half-way
through their budgets when the scale-out happens.
"""

from __future__ import annotations

import logging
import random
import shutil
import struct
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import metrics as M
from .clock import make_clock
from .config import ConfigError, RunConfig, config_items
from .datagen import (
    DistributionSpec,
    SampleSet,
    SpacingSpec,
    ValueKind,
    derive_seed,
    fit_model,
    load_sample_csv,
)
from .sut.base import NonScalableError, adapter_names, create_adapter
from .workload import (
    TEMPLATES,
    Allocation,
    QuerySpec,
    ThreadState,
    WorkloadConfig,
    allocate_records,
    build_sensor_space,
    make_sources,
    next_op,
    partition_sensors,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DESK_MIN_RUN_SECONDS = 5.0
FULL_MIN_RUN_SECONDS = 1800.0


@dataclass
class CheckResult:
    name: str
    status: str  # pass | fail | skipped
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"


@dataclass
class PhaseStats:
    n_0: int = 0
    n_s: int = 0
    t_0: float = 0.0
    t_s: float = 0.0
    S_i_bytes: int = 0
    points_per_client: list = field(default_factory=list)
    boundary_progress: list = field(default_factory=list)
    progress: list = field(default_factory=list)  # [seconds since start, points acked]
    queries: int = 0
    query_latency: dict = field(default_factory=dict)
    scale_out: str = "not-run"  # ok | non-scalable | failed | not-run
    valid: bool = True
    error: str = ""

    @property
    def N_p(self) -> int:
        return self.n_0 + self.n_s

    @property
    def duration(self) -> float:
        return self.t_0 + self.t_s


@dataclass
class DataCheck:
    issued_points: int = 0
    acked_points: int = 0
    issued_bytes: int = 0
    acked_bytes: int = 0
    inserted_ok: bool = False
    S_d: int = 0
    disk_ok: bool = False
    verified: int = 0
    mismatches: int = 0
    verify_ok: bool = False
    first_mismatch: str = ""

    @property
    def deficit_points(self) -> int:
        return self.issued_points - self.acked_points

    @property
    def passed(self) -> bool:
        return self.inserted_ok and self.disk_ok and self.verify_ok


@dataclass
class IterationResult:
    index: int
    model_fitted: bool = False
    warmup_seconds: float = 0.0
    warmup_points: int = 0
    measured: PhaseStats = field(default_factory=PhaseStats)
    T: float = 0.0
    data_check: DataCheck | None = None
    S_i: int = 0
    S_d: int = 0


@dataclass
class BenchmarkReport:
    config: dict
    allocation: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    valid: bool = False
    failure_stage: str | None = None
    started_at: str = ""
    finished_at: str = ""
    harness_version: str = __version__
    schema_version: int = SCHEMA_VERSION

    def failed_checks(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


# --------------------------------------------------------------------------
# checks


def min_rate_gate(N_p: int, m_s: int, T_i: float, threshold: float = 20.0) -> bool:
    """Average ingested points per sensor per second must reach ``threshold``."""
    if m_s <= 0:
        raise ConfigError("m_s must be positive")
    if T_i <= 0:
        raise ValueError("T_i must be positive")
    return N_p / (m_s * T_i) >= threshold


def prerequisite_checks(config: RunConfig, out_dir=None) -> list[CheckResult]:
    out = []

    def add(name, ok, detail="", skipped=False):
        out.append(CheckResult(name, "skipped" if skipped else ("pass" if ok else "fail"), detail))

    try:
        config.validate()
        add("config", True)
    except ConfigError as exc:
        add("config", False, str(exc))

    if config.desk_scale:
        ok = config.min_run_seconds >= DESK_MIN_RUN_SECONDS
        add("min-run-duration", ok, "" if ok else f"desk-scale runs need min_run_seconds >= {DESK_MIN_RUN_SECONDS:g}")
    else:
        ok = config.min_run_seconds >= FULL_MIN_RUN_SECONDS
        add(
            "min-run-duration",
            ok,
            "" if ok else f"min_run_seconds={config.min_run_seconds:g} < 1800; set desk_scale=true for short runs",
        )

    if config.pacing == "schedule":
        ok = config.warmup >= config.min_run_seconds
        add("warmup-duration", ok, "" if ok else "scheduled pacing needs warmup_seconds >= min_run_seconds")

    ok = config.sut_adapter in adapter_names()
    add("sut-adapter", ok, "" if ok else f"unknown adapter {config.sut_adapter!r}; choose one of {adapter_names()}")

    if config.datagen_method != "distribution":
        ok = bool(config.sample_path) and Path(config.sample_path).is_file()
        add("sample-file", ok, "" if ok else f"sample file {config.sample_path!r} not found")

    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            with tempfile.TemporaryFile(dir=out_dir):
                pass
            add("output-dir", True)
        except OSError as exc:
            add("output-dir", False, f"cannot write to {out_dir}: {exc}; pick a writable --out")

    info = time.get_clock_info("monotonic")
    add("clock", info.monotonic, "" if info.monotonic else "no monotonic clock available")
    return out


# --------------------------------------------------------------------------
# workers


class _Reservoir:
    def __init__(self, size: int, seed: int):
        self.size = size
        self.items: list = []
        self.seen = 0
        self._rng = random.Random(seed)

    def add_batch(self, batch) -> None:
        if self.size == 0:
            return
        for p in batch:
            self.seen += 1
            if len(self.items) < self.size:
                self.items.append((p.sensor_id, p.timestamp, p.value))
            else:
                j = self._rng.randrange(self.seen)
                if j < self.size:
                    self.items[j] = (p.sensor_id, p.timestamp, p.value)


@dataclass
class _ClientLedger:
    issued_points: int = 0
    issued_bytes: int = 0
    acked_points: int = 0
    acked_bytes: int = 0


class _Worker:
    """One client thread: pulls ops from its ThreadState and runs them against the SUT."""

    def __init__(self, run, client_id, thread_id, state, rate, t_begin, deadline=None):
        self.run_ = run
        self.client_id = client_id
        self.thread_id = thread_id
        self.state = state
        self.rate = rate
        self.t_begin = t_begin
        self.deadline = deadline
        self.issued = 0
        self.points = {"warmup": 0, "stable": 0, "scaleout": 0}
        self.bytes = 0
        self.latencies: dict[str, list] = {t: [] for t in TEMPLATES}
        self.finished_at = None
        self.done = False
        self.error: BaseException | None = None
        self.thread: threading.Thread | None = None

    def start(self, name):
        clock = self.run_.clock
        pid = clock.register()
        self.thread = threading.Thread(target=self._main, args=(pid,), name=name, daemon=True)
        self.thread.start()

    def _main(self, pid):
        r = self.run_
        clock = r.clock
        clock.attach(pid)
        try:
            self._loop()
        except BaseException as exc:
            self.error = exc
            r.abort.set()
            log.error("client %d failed: %s", self.client_id, exc)
        finally:
            self.finished_at = clock.now()
            self.done = True
            clock.leave()

    def _loop(self):
        r = self.run_
        clock, sut, st = r.clock, r.sut, self.state
        ledger = r.ledger(self.client_id, self.thread_id)
        reservoir = r.reservoir(self.client_id, self.thread_id)
        batch_size = st.config.batch_size
        while not r.abort.is_set():
            if self.deadline is not None:
                if clock.now() >= self.deadline:
                    break
                if self.rate and self.t_begin + (self.issued + min(batch_size, st.remaining)) / self.rate > self.deadline:
                    break
            op = next_op(st)
            if op is None:
                break
            if op.kind == "write":
                batch = op.batch
                n = len(batch)
                nbytes = sum(p.encoded_size for p in batch)
                if self.rate:
                    clock.sleep_until(self.t_begin + (self.issued + n) / self.rate)
                self.issued += n
                ledger.issued_points += n
                ledger.issued_bytes += nbytes
                ack = sut.insert(batch)
                ledger.acked_points += ack.points
                ledger.acked_bytes += ack.bytes
                self.points[r.phase] += ack.points
                self.bytes += ack.bytes
                reservoir.add_batch(batch)
            else:
                t0 = clock.now()
                sut.query(op.query)
                self.latencies[op.query.template].append(clock.now() - t0)


class DriverInstance:
    """Group of client threads spawned by one driver instance."""

    def __init__(self, index: int):
        self.index = index
        self.workers: list[_Worker] = []

    def spawn(self, worker: _Worker) -> None:
        self.workers.append(worker)
        worker.start(f"driver-{self.index}/client-{worker.client_id}.{worker.thread_id}")


class _Run:
    """Mutable state shared between the coordinator and the workers of one iteration."""

    def __init__(self, config: RunConfig, clock, sut, seed_tag):
        self.config = config
        self.clock = clock
        self.sut = sut
        self.phase = "warmup"
        self.abort = threading.Event()
        self.seed_tag = seed_tag
        self.ledgers: dict[tuple, _ClientLedger] = {}
        self.reservoirs: dict[tuple, _Reservoir] = {}
        self.instances = [DriverInstance(i) for i in range(config.driver_instances)]

    def ledger(self, c: int, t: int) -> _ClientLedger:
        return self.ledgers.setdefault((c, t), _ClientLedger())

    def reservoir(self, c: int, t: int) -> _Reservoir:
        key = (c, t)
        if key not in self.reservoirs:
            seed = derive_seed(self.config.seed, "reservoir", self.seed_tag, c, t)
            self.reservoirs[key] = _Reservoir(self.config.verify_sample, seed)
        return self.reservoirs[key]

    def spawn_client(self, c, sources, space, budget, rate, t_begin, deadline=None) -> list[_Worker]:
        """Start one client's threads; its sensors and budget are split across them."""
        cfg = self.config
        n = cfg.threads_per_client
        if budget == float("inf"):
            budgets = [budget] * n
        else:
            budgets = [budget // n + (1 if t < budget % n else 0) for t in range(n)]
        workers = []
        for t in range(n):
            st = ThreadState.create(c, t, sources[t::n], space, cfg.seed, budgets[t], _workload_config(cfg))
            # created in a fixed order so the verification pool is reproducible
            self.ledger(c, t)
            self.reservoir(c, t)
            w = _Worker(self, c, t, st, rate / n if rate else None, t_begin, deadline)
            self.instances[c % len(self.instances)].spawn(w)
            workers.append(w)
        return workers


def _workload_config(cfg: RunConfig) -> WorkloadConfig:
    return WorkloadConfig(
        query_fraction=cfg.query_fraction,
        batch_size=cfg.batch_size,
        template_weights=tuple(cfg.template_weights),
        subset_min=cfg.subset_min,
        subset_max=cfg.subset_max,
        downsample_agg=cfg.downsample_agg,
    )


def _wait_for(run: _Run, workers, until=None, label="", progress=None, origin=0.0) -> None:
    """Coordinator loop: tick until ``until`` or until all workers finish.

    Logs a progress line every ``progress_interval`` and, when ``progress``
    is a list, appends a ``[t - origin, points]`` snapshot per tick.
    """
    clock, cfg = run.clock, run.config
    last_log = clock.now()
    last_q = 0
    while not run.abort.is_set():
        now = clock.now()
        if until is not None:
            if now >= until:
                return
        elif all(w.done for w in workers):
            return
        target = now + cfg.tick_seconds
        if until is not None:
            target = min(target, until)
        clock.sleep_until(target)
        now = clock.now()
        if progress is not None:
            progress.append([now - origin, sum(sum(w.points.values()) for w in workers)])
        if now - last_log >= cfg.progress_interval:
            pts = sum(sum(w.points.values()) for w in workers)
            nbytes = sum(w.bytes for w in workers)
            q = sum(len(v) for w in workers for v in w.latencies.values())
            log.info("phase=%s points=%d bytes=%d qps=%.1f", label or run.phase, pts, nbytes, (q - last_q) / (now - last_log))
            last_log, last_q = now, q


def _join(run: _Run, workers) -> None:
    run.clock.leave()
    for w in workers:
        w.thread.join()
    run.clock.enter()


def run_warmup(run: _Run, sources, space, rate) -> tuple[float, int]:
    """Stable mixed workload from the k-1 standard clients for the warmup runtime."""
    cfg, clock = run.config, run.clock
    run.phase = "warmup"
    start = clock.now()
    deadline = start + cfg.warmup
    workers = []
    for c in range(cfg.clients - 1):
        workers += run.spawn_client(c, sources[c], space, float("inf"), rate, start, deadline)
    _wait_for(run, workers, label="warmup")
    _join(run, workers)
    errors = [w.error for w in workers if w.error]
    if errors:
        raise RuntimeError(f"warmup failed: {errors[0]}")
    elapsed = max(w.finished_at for w in workers) - start
    return max(cfg.warmup, elapsed), sum(w.points["warmup"] for w in workers)


def execute_measured_run(run: _Run, allocation: Allocation, sources, space, warmup_seconds: float, rate) -> PhaseStats:
    cfg, clock, sut = run.config, run.clock, run.sut
    k = allocation.k
    stats = PhaseStats()
    run.phase = "stable"
    start = clock.now()
    workers = []
    for c in range(k - 1):
        workers += run.spawn_client(c, sources[c], space, allocation.per_client[c], rate, start)
    _wait_for(run, workers, until=start + warmup_seconds / 2, progress=stats.progress, origin=start)
    boundary = clock.now()
    run.phase = "scaleout"
    stats.boundary_progress = [sum(w.points["stable"] for w in workers if w.client_id == c) for c in range(k - 1)] + [0]
    if not run.abort.is_set():
        try:
            sut.scale_out()
            stats.scale_out = "ok"
        except NonScalableError as exc:
            stats.scale_out = "non-scalable"
            log.warning("scale-out skipped: %s", exc)
        except Exception as exc:
            stats.scale_out = "failed"
            stats.valid = False
            stats.error = f"scale-out failed: {exc}"
            run.abort.set()

    c = allocation.scale_out_client_index
    if not run.abort.is_set():
        workers += run.spawn_client(c, sources[c], space, allocation.per_client[c], rate, boundary)
    _wait_for(run, workers, progress=stats.progress, origin=start)
    _join(run, workers)

    end = max(x.finished_at for x in workers)
    stats.t_0 = boundary - start
    stats.t_s = end - boundary
    stats.n_0 = sum(x.points["stable"] for x in workers)
    stats.n_s = sum(x.points["scaleout"] for x in workers)
    stats.S_i_bytes = sum(x.bytes for x in workers)
    stats.points_per_client = [
        sum(x.points["stable"] + x.points["scaleout"] for x in workers if x.client_id == c) for c in range(k)
    ]
    lat = {}
    for t in TEMPLATES:
        xs = [v for x in workers for v in x.latencies[t]]
        lat[t] = {
            "count": len(xs),
            "mean": float(np.mean(xs)) if xs else 0.0,
            "p95": float(np.percentile(xs, 95)) if xs else 0.0,
        }
    stats.query_latency = lat
    stats.queries = sum(v["count"] for v in lat.values())
    errors = [x.error for x in workers if x.error]
    if errors:
        stats.valid = False
        stats.error = stats.error or f"client failure: {errors[0]}"
    return stats


def _same_value(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float):
        return struct.pack("<d", a) == struct.pack("<d", b)
    return type(a) is type(b) and a == b


def data_check(sut, ledgers, reservoirs, sample_size: int, seed: int) -> DataCheck:
    """Inserted-volume check, disk probe, and re-read of a sample of written points."""
    sut.flush()
    dc = DataCheck(
        issued_points=sum(x.issued_points for x in ledgers),
        acked_points=sum(x.acked_points for x in ledgers),
        issued_bytes=sum(x.issued_bytes for x in ledgers),
        acked_bytes=sum(x.acked_bytes for x in ledgers),
    )
    dc.inserted_ok = dc.issued_points == dc.acked_points and dc.issued_bytes == dc.acked_bytes
    if not dc.inserted_ok:
        log.error("inserted check: deficit %d points, %d bytes", dc.deficit_points, dc.issued_bytes - dc.acked_bytes)
    try:
        dc.S_d = int(sut.disk_usage())
        dc.disk_ok = dc.S_d > 0
    except Exception as exc:
        log.error("disk storage probe failed: %s", exc)
    pool = [item for r in reservoirs for item in r.items]
    picked = random.Random(seed).sample(pool, min(sample_size, len(pool)))
    for sid, ts, value in picked:
        rows = sut.query(QuerySpec("time_range", (sid,), ts, ts))
        dc.verified += 1
        if len(rows) != 1 or rows[0][:2] != (sid, ts) or not _same_value(rows[0][2], value):
            dc.mismatches += 1
            if not dc.first_mismatch:
                dc.first_mismatch = f"{sid}@{ts}: wrote {value!r}, read {rows!r}"
                log.error("cross-client verification mismatch: %s", dc.first_mismatch)
    dc.verify_ok = dc.mismatches == 0
    return dc


# --------------------------------------------------------------------------
# orchestration


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _adapter_options(cfg: RunConfig, clock, data_dir):
    if cfg.sut_adapter == "reference":
        return dict(
            data_dir=data_dir,
            nodes=cfg.sut_nodes,
            scalable=cfg.sut_scalable,
            codec=cfg.sut_codec,
            segment_points=cfg.sut_segment_points,
        )
    if cfg.sut_adapter == "modeled":
        return dict(
            rate=cfg.modeled_rate,
            nodes=cfg.sut_nodes,
            w_s=cfg.modeled_w_s,
            mode=cfg.modeled_mode,
            ratio=cfg.modeled_ratio,
            scalable=cfg.sut_scalable,
            clock=clock,
            query_latency=cfg.modeled_query_latency,
        )
    return {}


class _Inputs:
    """Sensor space and sample/model material shared by both iterations."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.sample_points = None
        self.sample = None
        self.model = None
        self.spacing = SpacingSpec(cfg.spacing_mode, cfg.spacing_interval_ms, cfg.spacing_inter_arrival if cfg.spacing_mode == "uneven" else None)
        if cfg.datagen_method != "distribution":
            rows = load_sample_csv(cfg.sample_path)
            self.sample_points = [(t, v) for _, t, v in rows]
            self.sample = SampleSet.from_points(self.sample_points, cfg.sample_set_count, cfg.sample_points_per_set or None)

    def fit(self):
        self.model = fit_model(self.sample_points)
        return self.model

    def space(self):
        cfg = self.cfg
        if cfg.datagen_method == "replay":
            return build_sensor_space(
                cfg.sensors, cfg.seed, spacing=self.spacing,
                fixed_kind=self.sample.value_kind(), fixed_range=self.sample.value_range(),
            )
        if cfg.datagen_method == "model":
            table = self.model.quantile_table
            kind = "integer" if self.model.integer_valued else "float64"
            rng = (int(table[0]), int(table[-1])) if kind == "integer" else (table[0], table[-1])
            return build_sensor_space(cfg.sensors, cfg.seed, spacing=self.spacing, fixed_kind=kind, fixed_range=rng)
        return build_sensor_space(
            cfg.sensors,
            cfg.seed,
            value_mix=cfg.datagen_value_mix,
            dists={"float64": cfg.datagen_float, "integer": cfg.datagen_integer},
            spacing=self.spacing,
            string_kind=ValueKind("string", cfg.datagen_string_length, cfg.datagen_string_max_len),
        )


def run_benchmark(config: RunConfig, out_dir=None, sut=None) -> BenchmarkReport:
    report = BenchmarkReport(config=config_items(config), started_at=_utcnow())
    report.checks = prerequisite_checks(config, out_dir)
    if not all(c.passed for c in report.checks):
        report.failure_stage = "prerequisite"
        report.finished_at = _utcnow()
        return report

    cfg = config
    clock = make_clock(cfg.clock)
    clock.enter()
    tmp_dir = None
    owns_sut = sut is None
    if owns_sut:
        data_dir = cfg.sut_data_dir
        if cfg.sut_adapter == "reference" and not data_dir:
            tmp_dir = data_dir = tempfile.mkdtemp(prefix="iotbench-store-")
        sut = create_adapter(cfg.sut_adapter, **_adapter_options(cfg, clock, data_dir))
    elif getattr(sut, "clock", None) is not None and cfg.clock == "virtual":
        sut.clock = clock

    allocation = allocate_records(cfg.records, cfg.clients)
    report.allocation = list(allocation.per_client)
    rate = allocation.per_client[0] / cfg.warmup if cfg.pacing == "schedule" else None
    checks = report.checks

    def check(name, ok, detail=""):
        checks.append(CheckResult(name, "pass" if ok else "fail", detail))
        if not ok and report.failure_stage is None:
            report.failure_stage = name
        return ok

    try:
        inputs = _Inputs(cfg)
        for it in (1, 2):
            res = IterationResult(it)
            report.iterations.append(res)
            if it == 1 and cfg.datagen_method == "model":
                inputs.fit()
                res.model_fitted = True
            space = inputs.space()
            parts = partition_sensors(space, cfg.clients)
            sources = [
                make_sources(parts[c], cfg.datagen_method, cfg.seed, cfg.start_timestamp_ms, inputs.sample, inputs.model)
                for c in range(cfg.clients)
            ]
            run = _Run(cfg, clock, sut, it)
            try:
                res.warmup_seconds, res.warmup_points = run_warmup(run, sources, space, rate)
            except RuntimeError as exc:
                check(f"iteration-{it}:warmup", False, str(exc))
                break
            stats = execute_measured_run(run, allocation, sources, space, res.warmup_seconds, rate)
            res.measured = stats
            res.T = stats.duration
            if not check(f"iteration-{it}:measured-run", stats.valid, stats.error):
                break
            if stats.scale_out == "non-scalable":
                checks.append(CheckResult(f"iteration-{it}:scale-out", "skipped", "SUT declared non-scalable"))
            else:
                check(f"iteration-{it}:scale-out", stats.scale_out == "ok", stats.scale_out)
            check(
                f"iteration-{it}:run-duration",
                res.T >= cfg.min_run_seconds,
                f"T={res.T:.3f}s, minimum {cfg.min_run_seconds:g}s",
            )
            check(
                f"iteration-{it}:counting-identity",
                stats.N_p == cfg.records == sum(stats.points_per_client),
                f"n_0+n_s={stats.N_p}, sum over clients={sum(stats.points_per_client)}, N_p={cfg.records}",
            )
            dc = data_check(sut, list(run.ledgers.values()), list(run.reservoirs.values()), cfg.verify_sample, derive_seed(cfg.seed, "verify", it))
            res.data_check = dc
            res.S_i = dc.acked_bytes
            res.S_d = dc.S_d
            check(f"iteration-{it}:inserted-check", dc.inserted_ok, f"deficit {dc.deficit_points} points")
            check(f"iteration-{it}:disk-check", dc.disk_ok, f"S_d={dc.S_d} bytes")
            check(
                f"iteration-{it}:cross-client-verification",
                dc.verify_ok,
                f"{dc.verified} re-read, {dc.mismatches} mismatched {dc.first_mismatch}".strip(),
            )
            check(
                f"iteration-{it}:min-rate",
                min_rate_gate(stats.N_p, cfg.sensors, res.T, cfg.min_per_sensor_rate),
                f"{stats.N_p / (cfg.sensors * res.T):.2f} points/sensor/s",
            )
            sut.cleanup()
        checks.append(CheckResult("replica-check", "skipped", "replica consistency is not part of this harness"))
        if len(report.iterations) == 2 and report.failure_stage is None:
            report.metrics = _final_metrics(cfg, report, checks)
    except Exception as exc:
        log.exception("benchmark aborted")
        check("harness", False, f"{type(exc).__name__}: {exc}")
    finally:
        if owns_sut:
            sut.close()
        if tmp_dir:
            shutil.rmtree(tmp_dir, ignore_errors=True)
        clock.leave()

    report.valid = all(c.passed for c in checks) and bool(report.metrics)
    if not report.valid and report.failure_stage is None:
        report.failure_stage = "metrics"
    report.finished_at = _utcnow()
    return report


def cost_model(cfg: RunConfig) -> M.CostModel:
    return M.CostModel(
        C_0=cfg.cost_C0,
        S_0=cfg.cost_S0,
        c_0=cfg.cost_c0,
        c_s=cfg.cost_cs,
        storage_cost_per_16b=cfg.cost_storage_per_16b,
        record_bytes=cfg.cost_record_bytes,
    )


def _final_metrics(cfg: RunConfig, report: BenchmarkReport, checks) -> dict:
    it1, it2 = report.iterations
    perf = it1 if it1.T >= it2.T else it2
    value = M.iotps(cfg.records, it1.T, it2.T, cfg.min_run_seconds)
    r = M.compression_ratio(perf.S_i, perf.S_d)
    cost = cost_model(cfg)
    capacity_ok = cost.S_0 >= perf.S_i
    checks.append(CheckResult("storage-capacity", "pass" if capacity_ok else "fail", f"S_0={cost.S_0:g}, S_i={perf.S_i}"))
    out = {
        "N_p": cfg.records,
        "T_1": it1.T,
        "T_2": it2.T,
        "T_i": perf.T,
        "performance_iteration": perf.index,
        "n_0": perf.measured.n_0,
        "n_s": perf.measured.n_s,
        "t_0": perf.measured.t_0,
        "t_s": perf.measured.t_s,
        "iotps": value,
        "kiotps": value / 1000.0,
        "S_i": perf.S_i,
        "S_d": perf.S_d,
        "compression_ratio": r,
        "system_cost": cost.system_cost,
        "storage_cost": M.storage_cost(cost, value, r),
        "total_cost": M.total_cost(cost, value, r),
        "scale_out_skipped": perf.measured.scale_out == "non-scalable",
    }
    if capacity_ok:
        out["usd_per_kiotps"] = M.price_performance(cost, value, r, perf.S_i)
        out["usd_per_iotps"] = out["usd_per_kiotps"] / 1000.0
    else:
        report.failure_stage = report.failure_stage or "storage-capacity"
    return out
