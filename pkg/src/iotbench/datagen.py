"""Sensor value and timestamp generation.

Three methods are supported:

* parametric distributions (``make_generator``), used for values and for
  inter-arrival gaps of unevenly spaced series,
* periodic replay of a user supplied sample (``SampleSet`` / ``replay_next``),
* a generator model fitted to a sample (``fit_model`` / ``synth_next``): an
  empirical inverse CDF for the marginal plus a lag-1 autoregressive latent
  process in normal-score space.

Every stream is a pure function of its spec and seed.
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.signal import lfilter
from scipy.stats import rankdata

Value = Union[int, float, str]

DISTRIBUTION_KINDS = (
    "constant",
    "uniform",
    "zipfian",
    "histogram",
    "poisson",
    "pareto",
    "exponential",
)

# Defaults applied when a config omits a parameter.
DEFAULT_PARAMS = {
    "constant": {"value": 0.0},
    "uniform": {"lo": 0.0, "hi": 1.0},
    "zipfian": {"theta": 0.99, "items": 1000},
    "histogram": {"weights": (1.0,), "width": 1.0},
    "poisson": {"lambda": 10.0},
    "pareto": {"shape": 3.0, "scale": 1.0},
    "exponential": {"rate": 1.0},
}

ALPHABETS = {"lower_digits": "abcdefghijklmnopqrstuvwxyz0123456789"}
DEFAULT_MAX_STRING_LEN = 256
_BLOCK = 1024


class InvalidParameterError(ValueError):
    """A distribution or generator parameter is out of its domain."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SampleError(ValueError):
    pass


def derive_seed(seed: int, *ordinals) -> int:
    """Per-stream seed: the run seed XOR a hash of the stream's ordinals."""
    h = hashlib.blake2b(repr(ordinals).encode(), digest_size=8).digest()
    return (seed ^ int.from_bytes(h, "little")) & 0xFFFF_FFFF_FFFF_FFFF


# --------------------------------------------------------------------------
# Parametric distributions


@dataclass(frozen=True)
class DistributionSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        if self.kind not in DEFAULT_PARAMS:
            raise InvalidParameterError("kind", f"unknown distribution {self.kind!r}")
        out = dict(DEFAULT_PARAMS[self.kind])
        out.update(self.params)
        return out

    def validate(self) -> dict:
        p = self.resolved()
        k = self.kind
        if k == "uniform":
            if not p["lo"] < p["hi"]:
                raise InvalidParameterError("lo", "uniform requires lo < hi")
        elif k == "zipfian":
            if not 0.0 < p["theta"] <= 1.0:
                raise InvalidParameterError("theta", "must lie in (0, 1]")
            if int(p["items"]) != p["items"] or p["items"] < 1:
                raise InvalidParameterError("items", "must be a positive integer")
        elif k == "histogram":
            w = np.asarray(p["weights"], dtype=float)
            if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not w.sum() > 0:
                raise InvalidParameterError(
                    "weights", "need nonnegative weights with positive sum"
                )
            if not p["width"] > 0:
                raise InvalidParameterError("width", "must be positive")
        else:
            for name in ("lambda", "shape", "scale", "rate"):
                if name in p and not p[name] > 0:
                    raise InvalidParameterError(name, "must be strictly positive")
        return p

    def __str__(self) -> str:
        def fmt(v):
            if isinstance(v, (list, tuple)):
                return "[" + ",".join(repr(float(x)) for x in v) + "]"
            return repr(v)

        inner = ", ".join(f"{k}={fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner})"


def value_range(spec: DistributionSpec) -> tuple[float, float]:
    """Nominal value range of a distribution (0.999 quantile for unbounded tails)."""
    p = spec.validate()
    k = spec.kind
    if k == "constant":
        return (float(p["value"]), float(p["value"]))
    if k == "uniform":
        return (float(p["lo"]), float(p["hi"]))
    if k == "zipfian":
        return (0.0, float(int(p["items"]) - 1))
    if k == "histogram":
        return (0.0, float((len(p["weights"]) - 1) * p["width"]))
    if k == "poisson":
        lam = p["lambda"]
        return (0.0, float(math.ceil(lam + 4 * math.sqrt(lam))))
    if k == "pareto":
        return (float(p["scale"]), float(p["scale"] * 0.001 ** (-1 / p["shape"])))
    return (0.0, float(-math.log(0.001) / p["rate"]))


class GeneratorState:
    """Seeded stream of draws from one distribution.

    Draws are produced in fixed-size blocks, so the stream is the same
    whether it is consumed one value at a time or in bulk.
    """

    def __init__(self, spec: DistributionSpec, seed: int):
        self.spec = spec
        self.params = spec.validate()
        self.seed = seed
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._buf = np.empty(0)
        self._pos = 0
        if spec.kind in ("zipfian", "histogram"):
            if spec.kind == "zipfian":
                ranks = np.arange(1, int(self.params["items"]) + 1, dtype=float)
                w = ranks ** -float(self.params["theta"])
            else:
                w = np.asarray(self.params["weights"], dtype=float)
            cdf = np.cumsum(w)
            self._cdf = cdf / cdf[-1]

    def _block(self) -> np.ndarray:
        p, rng, k = self.params, self._rng, self.spec.kind
        if k == "constant":
            return np.full(_BLOCK, float(p["value"]))
        if k == "uniform":
            return rng.uniform(p["lo"], p["hi"], _BLOCK)
        if k == "zipfian":
            idx = np.searchsorted(self._cdf, rng.random(_BLOCK), side="right")
            return np.minimum(idx, self._cdf.size - 1).astype(float)
        if k == "histogram":
            idx = np.searchsorted(self._cdf, rng.random(_BLOCK), side="right")
            return np.minimum(idx, self._cdf.size - 1) * float(p["width"])
        if k == "poisson":
            return rng.poisson(p["lambda"], _BLOCK).astype(float)
        if k == "pareto":
            # numpy's pareto is the Lomax form; shift by one to get classical Pareto.
            return p["scale"] * (1.0 + rng.pareto(p["shape"], _BLOCK))
        return rng.exponential(1.0 / p["rate"], _BLOCK)

    def draw(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = self._block()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return float(v)

    def draws(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos >= self._buf.size:
                self._buf = self._block()
                self._pos = 0
            take = min(n - filled, self._buf.size - self._pos)
            out[filled : filled + take] = self._buf[self._pos : self._pos + take]
            self._pos += take
            filled += take
        return out


def make_generator(spec: DistributionSpec, seed: int) -> GeneratorState:
    return GeneratorState(spec, seed)


# --------------------------------------------------------------------------
# Data points and value kinds


@dataclass(slots=True)
class DataPoint:
    sensor_id: str
    timestamp: int
    value: Value
    encoded_size: int


def encoded_size_of(value: Value) -> int:
    if isinstance(value, str):
        return len(value.encode("utf-8"))
    return 8


def make_point(sensor_id: str, timestamp: int, value: Value) -> DataPoint:
    return DataPoint(sensor_id, timestamp, value, encoded_size_of(value))


def kind_of(value: Value) -> str:
    if isinstance(value, str):
        return "string"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return "integer"
    return "float64"


def serialize_values(points: Sequence[DataPoint]) -> bytes:
    """Value payload as ingested; its length is the batch's S_i contribution."""
    parts = []
    for p in points:
        v = p.value
        if isinstance(v, str):
            parts.append(v.encode("utf-8"))
        elif isinstance(v, int):
            parts.append(struct.pack("<q", v))
        else:
            parts.append(struct.pack("<d", v))
    return b"".join(parts)


@dataclass(frozen=True)
class ValueKind:
    kind: str = "float64"  # integer | float64 | string
    length: DistributionSpec = DistributionSpec("uniform", {"lo": 8.0, "hi": 64.0})
    max_len: int = DEFAULT_MAX_STRING_LEN
    alphabet: str = "lower_digits"

    def __post_init__(self):
        if self.kind not in ("integer", "float64", "string"):
            raise InvalidParameterError("kind", f"unknown value kind {self.kind!r}")
        if self.alphabet not in ALPHABETS:
            raise InvalidParameterError("alphabet", f"unknown alphabet {self.alphabet!r}")


class DistributionValues:
    """Values of one ValueKind drawn from a parametric distribution."""

    def __init__(self, kind: ValueKind, spec: DistributionSpec | None, seed: int):
        self.kind = kind
        self.spec = spec
        if kind.kind != "string":
            if spec is None:
                raise InvalidParameterError("spec", f"{kind.kind} values need a distribution")
            self._gen = make_generator(spec, seed)
        else:
            self._lengths = make_generator(kind.length, derive_seed(seed, "len"))
            self._chars = np.random.Generator(np.random.PCG64(derive_seed(seed, "chr")))
            self._alphabet = np.array(list(ALPHABETS[kind.alphabet]))

    def next_value(self) -> Value:
        k = self.kind.kind
        if k == "float64":
            return self._gen.draw()
        if k == "integer":
            return int(np.rint(self._gen.draw()))
        n = int(np.rint(self._lengths.draw()))
        n = min(max(n, 1), self.kind.max_len)
        return "".join(self._alphabet[self._chars.integers(0, self._alphabet.size, n)])

    def value_range(self) -> tuple:
        if self.kind.kind == "string":
            return ("", "z" * self.kind.max_len)
        lo, hi = value_range(self.spec)
        if self.kind.kind == "integer":
            return (int(np.rint(lo)), int(np.rint(hi)))
        return (lo, hi)


# --------------------------------------------------------------------------
# Timestamps


@dataclass(frozen=True)
class SpacingSpec:
    mode: str = "even"  # even | uneven
    interval_ms: int = 1000
    inter_arrival: DistributionSpec | None = None

    def __post_init__(self):
        if self.mode not in ("even", "uneven"):
            raise InvalidParameterError("mode", f"unknown spacing mode {self.mode!r}")
        if self.mode == "even" and (int(self.interval_ms) != self.interval_ms or self.interval_ms < 1):
            raise InvalidParameterError("interval_ms", "must be a positive integer")
        if self.mode == "uneven":
            if self.inter_arrival is None:
                raise InvalidParameterError("inter_arrival", "uneven spacing needs a distribution")
            self.inter_arrival.validate()


class TimestampState:
    """Per-sensor timestamp clock; the first timestamp is one gap past ``start``."""

    def __init__(self, spacing: SpacingSpec, start: int, seed: int = 0):
        self.spacing = spacing
        self.last = int(start)
        self._gaps = (
            make_generator(spacing.inter_arrival, seed) if spacing.mode == "uneven" else None
        )

    def next(self) -> int:
        if self._gaps is None:
            self.last += self.spacing.interval_ms
        else:
            self.last += max(1, int(np.rint(self._gaps.draw())))
        return self.last


def next_timestamp(spacing: SpacingSpec, state: TimestampState) -> int:
    return state.next()


# --------------------------------------------------------------------------
# Periodic sample replay


@dataclass(frozen=True)
class SampleSet:
    sets: tuple  # tuple of tuples of (timestamp, value)

    def __post_init__(self):
        if not self.sets or any(len(s) == 0 for s in self.sets):
            raise SampleError("sample set is empty")
        if len({len(s) for s in self.sets}) != 1:
            raise SampleError("all replay sets must have the same length")

    @property
    def set_count(self) -> int:
        return len(self.sets)

    @property
    def points_per_set(self) -> int:
        return len(self.sets[0])

    @classmethod
    def from_points(
        cls, points: Sequence[tuple[int, Value]], set_count: int = 10, points_per_set: int | None = None
    ) -> "SampleSet":
        """Cut a loaded sample into ``set_count`` distinct contiguous slices."""
        if set_count < 1:
            raise SampleError("set_count must be >= 1")
        if points_per_set is None:
            points_per_set = len(points) // set_count
        if points_per_set < 1 or points_per_set * set_count > len(points):
            raise SampleError(
                f"need {set_count} x {points_per_set} points, sample has {len(points)}"
            )
        sets = tuple(
            tuple(points[i * points_per_set : (i + 1) * points_per_set]) for i in range(set_count)
        )
        return cls(sets)

    def value_range(self) -> tuple:
        vals = [v for s in self.sets for _, v in s]
        return (min(vals), max(vals))

    def value_kind(self) -> str:
        return kind_of(self.sets[0][0][1])


def _parse_value(field_text: str, quoted: bool) -> Value:
    if quoted:
        return field_text
    try:
        return int(field_text)
    except ValueError:
        return float(field_text)


def load_sample_csv(path: str | Path) -> list[tuple[str, int, Value]]:
    """Read ``sensor_id,timestamp_ms,value`` rows. Errors name the 1-based line."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "sensor_id,timestamp_ms,value":
        raise SampleError(f"{path}:1: expected header 'sensor_id,timestamp_ms,value'")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            parts = next(csv.reader([line]))
            if len(parts) != 3:
                raise ValueError(f"expected 3 fields, got {len(parts)}")
            quoted = line.rstrip().endswith('"')
            rows.append((parts[0], int(parts[1]), _parse_value(parts[2], quoted)))
        except ValueError as exc:
            raise SampleError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise SampleError(f"{path}: no data rows")
    return rows


@dataclass
class ReplayState:
    sensor_id: str
    start: int
    pos: int = 0
    ts: int | None = None


def replay_next(sample: SampleSet, thread_index: int, state: ReplayState) -> DataPoint:
    """Emit the bound set's next value, wrapping periodically.

    Timestamps keep the sample's own gaps; the gap used at the wrap is the
    set's first gap.
    """
    seq = sample.sets[thread_index % sample.set_count]
    i = state.pos % len(seq)
    if state.ts is None:
        state.ts = state.start
    else:
        if i > 0:
            gap = seq[i][0] - seq[i - 1][0]
        else:
            gap = seq[1][0] - seq[0][0] if len(seq) > 1 else 1
        state.ts += max(1, int(gap))
    state.pos += 1
    return make_point(state.sensor_id, state.ts, seq[i][1])


# --------------------------------------------------------------------------
# Fitted generator model

QUANTILE_KNOTS = 256
_PROBS = np.linspace(0.0, 1.0, QUANTILE_KNOTS)
_MAX_AR = 0.999


@dataclass(frozen=True)
class GeneratorModel:
    quantile_table: tuple
    ar1_coeff: float
    residual_sd: float
    interval_mean: float
    interval_sd: float
    integer_valued: bool = False


def fit_model(sample: Sequence[tuple[int, Value]]) -> GeneratorModel:
    if len(sample) < 2:
        raise SampleError("need at least 2 points to fit a model")
    if any(isinstance(v, str) for _, v in sample):
        raise SampleError("cannot fit a model to a non-numeric sample")
    ts = np.array([t for t, _ in sample], dtype=float)
    vals = np.array([v for _, v in sample], dtype=float)

    table = np.maximum.accumulate(np.quantile(vals, _PROBS))

    z = ndtri((rankdata(vals) - 0.5) / vals.size)
    zc = z - z.mean()
    denom = float(np.dot(zc, zc))
    if denom > 0:
        phi = float(np.dot(zc[:-1], zc[1:]) / denom)
        phi = min(max(phi, -_MAX_AR), _MAX_AR)
        resid = z[1:] - phi * z[:-1]
        resid_sd = float(resid.std())
    else:
        phi, resid_sd = 0.0, 0.0

    gaps = np.diff(ts)
    return GeneratorModel(
        quantile_table=tuple(float(x) for x in table),
        ar1_coeff=phi,
        residual_sd=resid_sd,
        interval_mean=float(gaps.mean()),
        interval_sd=float(gaps.std()),
        integer_valued=all(isinstance(v, int) for _, v in sample),
    )


class SynthState:
    """Latent AR(1) walk mapped through the model's inverse CDF."""

    def __init__(self, model: GeneratorModel, seed: int, sensor_id: str = "sensor_0", start: int = 0):
        self.model = model
        self.sensor_id = sensor_id
        self.ts = int(start)
        vs, gs = np.random.SeedSequence(seed).spawn(2)
        self._rng = np.random.Generator(np.random.PCG64(vs))
        self._gap_rng = np.random.Generator(np.random.PCG64(gs))
        self._table = np.asarray(model.quantile_table)
        phi, sd = model.ar1_coeff, model.residual_sd
        stationary = sd / math.sqrt(1.0 - phi * phi)
        self._z = float(self._rng.normal(0.0, stationary)) if stationary > 0 else 0.0
        self._buf = np.empty(0)
        self._gaps = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _refill(self):
        phi, sd = self.model.ar1_coeff, self.model.residual_sd
        e = self._rng.normal(0.0, 1.0, _BLOCK) * sd
        z, _ = lfilter([1.0], [1.0, -phi], e, zi=[phi * self._z])
        self._z = float(z[-1])
        vals = np.interp(ndtr(z), _PROBS, self._table)
        if self.model.integer_valued:
            vals = np.rint(vals)
        self._buf = vals
        g = self._gap_rng.normal(self.model.interval_mean, self.model.interval_sd, _BLOCK)
        self._gaps = np.maximum(1, np.rint(g)).astype(np.int64)
        self._pos = 0

    def next_value(self) -> Value:
        if self._pos >= self._buf.size:
            self._refill()
        v = self._buf[self._pos]
        self._pos += 1
        return int(v) if self.model.integer_valued else float(v)

    def next_point(self) -> DataPoint:
        if self._pos >= self._buf.size:
            self._refill()
        self.ts += int(self._gaps[self._pos])
        return make_point(self.sensor_id, self.ts, self.next_value())


def synth_next(model: GeneratorModel, state: SynthState) -> DataPoint:
    return state.next_point()
