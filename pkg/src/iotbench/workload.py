"""Per-client operation streams: write batches mixed with dashboard queries."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datagen import (
    DataPoint,
    DistributionSpec,
    DistributionValues,
    GeneratorModel,
    ReplayState,
    SampleSet,
    SpacingSpec,
    SynthState,
    TimestampState,
    ValueKind,
    derive_seed,
    make_point,
    replay_next,
)

TEMPLATES = ("time_range", "aggregation", "downsample", "filtered")
AGG_FUNCTIONS = ("avg", "max", "min", "first", "last")
OPERATORS = ("=", "<", ">", "<=", ">=", "!=")
OPERATOR_ALIASES = {"≤": "<=", "≥": ">=", "≠": "!=", "==": "="}


class QueryError(ValueError):
    """A query spec violates its template's invariants."""


class EmptyWindowError(RuntimeError):
    """No point has been written yet, so there is no time window to query."""


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    sensor: str
    op: str
    value: object

    def __post_init__(self):
        op = OPERATOR_ALIASES.get(self.op, self.op)
        if op not in OPERATORS:
            raise QueryError(f"unknown comparison operator {self.op!r}")
        object.__setattr__(self, "op", op)


@dataclass(frozen=True)
class QuerySpec:
    template: str
    sensors: tuple
    t_start: int
    t_end: int
    agg_functions: tuple = ()
    unit: int | None = None
    cond: Condition | None = None
    bucket_agg: str = "avg"

    def validate(self) -> "QuerySpec":
        if self.template not in TEMPLATES:
            raise QueryError(f"unknown template {self.template!r}")
        if not self.sensors:
            raise QueryError("sensor list is empty")
        if self.t_start > self.t_end:
            raise QueryError("t_start > t_end")
        if self.template == "aggregation":
            if not self.agg_functions:
                raise QueryError("aggregation needs at least one function")
            bad = set(self.agg_functions) - set(AGG_FUNCTIONS)
            if bad:
                raise QueryError(f"unknown aggregate functions {sorted(bad)}")
        if self.template == "downsample":
            if self.unit is None or self.unit <= 0:
                raise QueryError("downsample unit must be positive")
            if self.bucket_agg not in AGG_FUNCTIONS:
                raise QueryError(f"unknown bucket aggregate {self.bucket_agg!r}")
        if self.template == "filtered":
            if self.cond is None:
                raise QueryError("filtered query needs a condition")
            if self.cond.sensor not in self.sensors:
                raise QueryError("condition sensor must be one of the queried sensors")
        return self


# --------------------------------------------------------------------------
# Sensors and their data sources


@dataclass(frozen=True)
class SensorInfo:
    sensor_id: str
    ordinal: int
    value_kind: ValueKind
    value_spec: DistributionSpec | None
    spacing: SpacingSpec
    value_range: tuple


@dataclass
class SensorSpace:
    sensors: list[SensorInfo]

    def __post_init__(self):
        if not self.sensors:
            raise ValueError("need at least one sensor")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("sensor ids must be unique")
        self._by_id = {s.sensor_id: s for s in self.sensors}

    @property
    def m_s(self) -> int:
        return len(self.sensors)

    def __getitem__(self, sensor_id: str) -> SensorInfo:
        return self._by_id[sensor_id]

    def __contains__(self, sensor_id) -> bool:
        return sensor_id in self._by_id

    def check_query(self, spec: QuerySpec) -> QuerySpec:
        """Template invariants plus the condition value lying in the sensor's range."""
        spec.validate()
        if spec.cond is not None and spec.cond.sensor in self:
            info = self[spec.cond.sensor]
            lo, hi = info.value_range
            v = spec.cond.value
            if info.value_kind.kind == "string":
                if not isinstance(v, str):
                    raise QueryError("string sensor compared with non-string value")
            elif isinstance(v, str) or not lo <= v <= hi:
                raise QueryError(f"condition value {v!r} outside sensor range [{lo}, {hi}]")
        return spec


DEFAULT_VALUE_DISTS = {
    "float64": DistributionSpec("pareto", {"shape": 3.0, "scale": 1.0}),
    "integer": DistributionSpec("poisson", {"lambda": 10.0}),
}


def _split_counts(total: int, fractions: dict) -> dict:
    """Largest-remainder split of ``total`` by ``fractions`` (normalized)."""
    s = sum(fractions.values())
    raw = {k: total * v / s for k, v in fractions.items()}
    counts = {k: int(math.floor(x)) for k, x in raw.items()}
    left = total - sum(counts.values())
    for k in sorted(raw, key=lambda k: (counts[k] - raw[k], k))[:left]:
        counts[k] += 1
    return counts


def build_sensor_space(
    m_s: int,
    seed: int,
    value_mix: dict | None = None,
    dists: dict | None = None,
    spacing: SpacingSpec = SpacingSpec(),
    string_kind: ValueKind | None = None,
    fixed_range: tuple | None = None,
    fixed_kind: str | None = None,
) -> SensorSpace:
    """Sensors ``sensor_<i>`` with a seeded value-kind assignment.

    ``fixed_kind``/``fixed_range`` override the per-sensor kinds for the
    sample-driven generation methods, where every sensor shares the sample's type.
    """
    if m_s < 1:
        raise ValueError("m_s must be >= 1")
    dists = {**DEFAULT_VALUE_DISTS, **(dists or {})}
    value_mix = value_mix or {"float64": 1.0}
    if fixed_kind is not None:
        kinds = [fixed_kind] * m_s
    else:
        counts = _split_counts(m_s, value_mix)
        kinds = [k for k in sorted(counts) for _ in range(counts[k])]
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "kinds")))
        kinds = [kinds[i] for i in rng.permutation(m_s)]
    out = []
    for i, kind in enumerate(kinds):
        if kind == "string":
            vk = string_kind or ValueKind("string")
        else:
            vk = ValueKind(kind)
        spec = dists.get(kind) if fixed_kind is None else None
        if fixed_range is not None:
            rng_ = fixed_range
        elif kind == "string":
            rng_ = ("", "z" * vk.max_len)
        else:
            rng_ = DistributionValues(vk, spec, 0).value_range()
        out.append(SensorInfo(f"sensor_{i}", i, vk, spec, spacing, rng_))
    return SensorSpace(out)


class DistributionSource:
    def __init__(self, info: SensorInfo, seed: int, start: int):
        self.info = info
        self._values = DistributionValues(info.value_kind, info.value_spec, derive_seed(seed, "value", info.ordinal))
        self._ts = TimestampState(info.spacing, start, derive_seed(seed, "ts", info.ordinal))

    def next_point(self) -> DataPoint:
        ts = self._ts.next()
        return make_point(self.info.sensor_id, ts, self._values.next_value())


class ReplaySource:
    """Replays set ``ordinal mod set_count`` of the sample for this sensor."""

    def __init__(self, info: SensorInfo, sample: SampleSet, start: int):
        self.info = info
        self.sample = sample
        self._state = ReplayState(info.sensor_id, start)

    def next_point(self) -> DataPoint:
        return replay_next(self.sample, self.info.ordinal, self._state)


class ModelSource:
    def __init__(self, info: SensorInfo, model: GeneratorModel, seed: int, start: int):
        self.info = info
        self._state = SynthState(model, derive_seed(seed, "synth", info.ordinal), info.sensor_id, start)

    def next_point(self) -> DataPoint:
        return self._state.next_point()


# --------------------------------------------------------------------------
# Allocation


@dataclass(frozen=True)
class Allocation:
    k: int
    N_p: int
    per_client: tuple
    scale_out_client_index: int


def allocate_records(N_p: int, k: int) -> Allocation:
    """k-1 standard clients get floor(2N_p/(2k-1)); the last client gets the rest."""
    if k < 2:
        raise AllocationError("the scalability test needs k >= 2 clients")
    if N_p < 2 * k - 1:
        raise AllocationError(f"N_p={N_p} is below 2k-1={2 * k - 1}")
    share = (2 * N_p) // (2 * k - 1)
    per_client = [share] * (k - 1) + [N_p - share * (k - 1)]
    return Allocation(k, N_p, tuple(per_client), k - 1)


# --------------------------------------------------------------------------
# Operation streams


@dataclass(frozen=True)
class WorkloadConfig:
    query_fraction: float = 0.05
    batch_size: int = 100
    template_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    subset_min: int = 1
    subset_max: int = 4
    downsample_agg: str = "avg"
    width_min_ms: int = 1000
    width_frac: float = 0.05

    def __post_init__(self):
        if not 0 <= self.query_fraction < 1:
            raise ValueError("query_fraction must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        w = self.template_weights
        if len(w) != 4 or any(x < 0 for x in w) or not sum(w) > 0:
            raise ValueError("template_weights needs 4 nonnegative weights with positive sum")
        if not 1 <= self.subset_min <= self.subset_max:
            raise ValueError("need 1 <= subset_min <= subset_max")
        if self.downsample_agg not in AGG_FUNCTIONS:
            raise ValueError(f"unknown downsample aggregate {self.downsample_agg!r}")


@dataclass
class WorkloadOp:
    kind: str  # write | query
    client_id: int
    thread_id: int
    batch: list | None = None
    query: QuerySpec | None = None


@dataclass
class ThreadState:
    client_id: int
    thread_id: int
    sources: list
    space: SensorSpace
    rng: np.random.Generator
    remaining: float
    config: WorkloadConfig = field(default_factory=WorkloadConfig)
    window: tuple | None = None
    _rr: int = 0

    @classmethod
    def create(cls, client_id, thread_id, sources, space, seed, budget, config=None):
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "ops", client_id, thread_id)))
        return cls(client_id, thread_id, list(sources), space, rng, budget, config or WorkloadConfig())

    def _batch(self, n: int) -> list[DataPoint]:
        srcs = self.sources
        out = []
        for _ in range(n):
            out.append(srcs[self._rr].next_point())
            self._rr = (self._rr + 1) % len(srcs)
        lo = min(p.timestamp for p in out)
        hi = max(p.timestamp for p in out)
        if self.window is None:
            self.window = (lo, hi)
        else:
            self.window = (min(self.window[0], lo), max(self.window[1], hi))
        return out


def next_op(state: ThreadState, q: float | None = None) -> WorkloadOp | None:
    """Next operation for a thread, or None once its record budget is spent.

    The window used for queries is the thread's own written range, which
    keeps each thread's stream independent of the others' progress.
    """
    if state.remaining <= 0:
        return None
    cfg = state.config
    q = cfg.query_fraction if q is None else q
    if q > 0 and state.rng.random() < q and state.window is not None:
        w = np.asarray(cfg.template_weights, dtype=float)
        template = TEMPLATES[int(state.rng.choice(4, p=w / w.sum()))]
        spec = gen_query(template, state.rng, state.space, state.window, cfg)
        return WorkloadOp("query", state.client_id, state.thread_id, query=spec)
    n = int(min(cfg.batch_size, state.remaining))
    batch = state._batch(n)
    state.remaining -= n
    return WorkloadOp("write", state.client_id, state.thread_id, batch=batch)


_STRING_ALPHABET = string.ascii_lowercase + string.digits


def _cond_value(info: SensorInfo, rng: np.random.Generator):
    lo, hi = info.value_range
    kind = info.value_kind.kind
    if kind == "string":
        n = int(rng.integers(1, 9))
        return "".join(_STRING_ALPHABET[i] for i in rng.integers(0, len(_STRING_ALPHABET), n))
    if kind == "integer":
        return int(rng.integers(int(lo), int(hi) + 1))
    if lo == hi:
        return float(lo)
    return float(min(hi, rng.uniform(lo, hi)))


def gen_query(
    template: str,
    rng: np.random.Generator,
    space: SensorSpace,
    window: tuple | None,
    config: WorkloadConfig = WorkloadConfig(),
) -> QuerySpec:
    if window is None:
        raise EmptyWindowError("no data written yet")
    lo, hi = window
    span = hi - lo
    max_w = max(config.width_min_ms, int(config.width_frac * span))
    width = min(span, int(rng.integers(config.width_min_ms, max_w + 1)))
    t_start = lo + int(rng.integers(0, span - width + 1))
    t_end = t_start + width

    pool = space.sensors
    if template == "downsample":
        numeric = [s for s in pool if s.value_kind.kind != "string"]
        pool = numeric or pool
    size = int(rng.integers(config.subset_min, config.subset_max + 1))
    size = min(size, len(pool))
    picked = sorted(rng.choice(len(pool), size=size, replace=False).tolist())
    chosen = [pool[i] for i in picked]
    sensors = tuple(s.sensor_id for s in chosen)
    has_string = any(s.value_kind.kind == "string" for s in chosen)

    if template == "time_range":
        spec = QuerySpec(template, sensors, t_start, t_end)
    elif template == "aggregation":
        mask = int(rng.integers(1, 1 << len(AGG_FUNCTIONS)))
        funcs = [f for i, f in enumerate(AGG_FUNCTIONS) if mask >> i & 1]
        if has_string:
            funcs = [f for f in funcs if f != "avg"] or ["max"]
        spec = QuerySpec(template, sensors, t_start, t_end, agg_functions=tuple(funcs))
    elif template == "downsample":
        unit = int(rng.integers(max(1, width // 20), max(1, width) + 1))
        agg = "last" if has_string and config.downsample_agg == "avg" else config.downsample_agg
        spec = QuerySpec(template, sensors, t_start, t_end, unit=unit, bucket_agg=agg)
    elif template == "filtered":
        target = chosen[int(rng.integers(0, len(chosen)))]
        op = OPERATORS[int(rng.integers(0, len(OPERATORS)))]
        cond = Condition(target.sensor_id, op, _cond_value(target, rng))
        spec = QuerySpec(template, sensors, t_start, t_end, cond=cond)
    else:
        raise QueryError(f"unknown template {template!r}")
    return space.check_query(spec)


def partition_sensors(space: SensorSpace, k: int) -> list[list[SensorInfo]]:
    """Sensor i is owned by client i mod k, so each series has a single writer."""
    if space.m_s < k:
        raise AllocationError(f"{space.m_s} sensors cannot be split over {k} clients")
    return [[s for s in space.sensors if s.ordinal % k == c] for c in range(k)]


def make_sources(
    infos: Sequence[SensorInfo],
    method: str,
    seed: int,
    start: int,
    sample: SampleSet | None = None,
    model: GeneratorModel | None = None,
) -> list:
    if method == "distribution":
        return [DistributionSource(i, seed, start) for i in infos]
    if method == "replay":
        return [ReplaySource(i, sample, start) for i in infos]
    if method == "model":
        return [ModelSource(i, model, seed, start) for i in infos]
    raise ValueError(f"unknown data generation method {method!r}")
