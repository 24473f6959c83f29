"""Run configuration: a flat ``key=value`` properties file.

Lines are UTF-8, ``#`` starts a comment, keys are the ``RunConfig`` field
names with the first underscore of a prefixed group written as a dot
(``sut_adapter`` <-> ``sut.adapter``). Command-line overrides use the same
keys and win over the file.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .datagen import DISTRIBUTION_KINDS, DistributionSpec, InvalidParameterError
from .sut.base import adapter_names
from .workload import AGG_FUNCTIONS

_GROUPS = ("datagen", "spacing", "sample", "sut", "modeled", "cost")
REQUIRED = ("sensors", "clients", "records")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    sensors: int
    clients: int
    records: int
    driver_instances: int = 1
    threads_per_client: int = 1
    warmup_seconds: float | None = None
    min_run_seconds: float = 1800.0
    min_per_sensor_rate: float = 20.0
    seed: int = 0
    desk_scale: bool = False
    start_timestamp_ms: int = 1_600_000_000_000

    datagen_method: str = "distribution"  # distribution | replay | model
    datagen_value_mix: dict = field(default_factory=lambda: {"float64": 1.0})
    datagen_float: DistributionSpec = DistributionSpec("pareto", {"shape": 3.0, "scale": 1.0})
    datagen_integer: DistributionSpec = DistributionSpec("poisson", {"lambda": 10.0})
    datagen_string_length: DistributionSpec = DistributionSpec("uniform", {"lo": 8.0, "hi": 64.0})
    datagen_string_max_len: int = 256
    spacing_mode: str = "even"
    spacing_interval_ms: int = 1000
    spacing_inter_arrival: DistributionSpec = DistributionSpec("exponential", {"rate": 0.001})
    sample_path: str = ""
    sample_set_count: int = 10
    sample_points_per_set: int = 0  # 0: all loaded points split evenly

    query_fraction: float = 0.05
    batch_size: int = 100
    template_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    subset_min: int = 1
    subset_max: int = 4
    downsample_agg: str = "avg"

    pacing: str = "schedule"  # schedule | open
    clock: str = "wall"  # wall | virtual
    tick_seconds: float = 0.1
    progress_interval: float = 5.0
    verify_sample: int = 1000

    sut_adapter: str = "reference"
    sut_data_dir: str = ""
    sut_nodes: int = 1
    sut_scalable: bool = True
    sut_codec: str = "auto"
    sut_segment_points: int = 4096
    modeled_rate: float = 100_000.0
    modeled_w_s: float = 1.0
    modeled_mode: str = "linear"
    modeled_ratio: float = 10.0
    modeled_query_latency: float = 0.0005

    cost_C0: float = 0.0
    cost_S0: float = math.inf
    cost_c0: float = 300_000.0
    cost_cs: float = 300_000.0
    cost_storage_per_16b: float = 2.039e-08
    cost_record_bytes: int = 16

    @property
    def warmup(self) -> float:
        return self.min_run_seconds if self.warmup_seconds is None else self.warmup_seconds

    def validate(self) -> "RunConfig":
        errs = []

        def need(cond, msg):
            if not cond:
                errs.append(msg)

        need(self.clients >= 2, "clients: the scalability test needs k >= 2")
        need(self.records >= 2 * self.clients - 1, f"records: need N_p >= 2k-1 = {2 * self.clients - 1}")
        need(self.sensors >= 1, "sensors: need m_s >= 1")
        need(self.sensors >= self.clients, "sensors: need at least one sensor per client")
        need(self.threads_per_client >= 1, "threads_per_client: must be >= 1")
        need(
            self.sensors >= self.clients * self.threads_per_client,
            "sensors: need at least one sensor per client thread",
        )
        need(1 <= self.driver_instances <= max(self.clients, 1), "driver_instances: need 1 <= n_i <= k")
        need(self.min_run_seconds > 0, "min_run_seconds: must be positive")
        need(self.warmup > 0, "warmup_seconds: must be positive")
        need(self.min_per_sensor_rate >= 0, "min_per_sensor_rate: must be nonnegative")
        need(0 <= self.query_fraction < 1, "query_fraction: must lie in [0, 1)")
        need(self.batch_size >= 1, "batch_size: must be >= 1")
        need(1 <= self.subset_min <= self.subset_max, "subset_min/subset_max: need 1 <= min <= max")
        need(
            len(self.template_weights) == 4 and min(self.template_weights) >= 0 and sum(self.template_weights) > 0,
            "template_weights: need 4 nonnegative weights with positive sum",
        )
        need(self.downsample_agg in AGG_FUNCTIONS, f"downsample_agg: one of {AGG_FUNCTIONS}")
        need(self.datagen_method in ("distribution", "replay", "model"), "datagen.method: distribution|replay|model")
        if self.datagen_method != "distribution":
            need(bool(self.sample_path), "sample.path: required for replay/model generation")
        need(self.sample_set_count >= 1, "sample.set_count: must be >= 1")
        need(set(self.datagen_value_mix) <= {"float64", "integer", "string"}, "datagen.value_mix: unknown kind")
        need(
            all(v >= 0 for v in self.datagen_value_mix.values()) and sum(self.datagen_value_mix.values()) > 0,
            "datagen.value_mix: need nonnegative fractions with positive sum",
        )
        need(self.spacing_mode in ("even", "uneven"), "spacing.mode: even|uneven")
        need(self.spacing_interval_ms >= 1, "spacing.interval_ms: must be >= 1")
        need(self.pacing in ("schedule", "open"), "pacing: schedule|open")
        need(self.clock in ("wall", "virtual"), "clock: wall|virtual")
        if self.clock == "virtual":
            need(self.sut_adapter == "modeled", "clock: virtual time requires sut.adapter=modeled")
        need(self.tick_seconds > 0, "tick_seconds: must be positive")
        need(self.verify_sample >= 0, "verify_sample: must be nonnegative")
        need(self.sut_nodes >= 1, "sut.nodes: must be >= 1")
        need(self.sut_codec in ("auto", "none"), "sut.codec: auto|none")
        need(self.modeled_rate > 0, "modeled.rate: must be positive")
        need(0 < self.modeled_w_s <= 1, "modeled.w_s: must lie in (0, 1]")
        need(self.modeled_mode in ("linear", "decaying"), "modeled.mode: linear|decaying")
        need(self.modeled_ratio > 0, "modeled.ratio: must be positive")
        need(self.cost_record_bytes >= 1, "cost.record_bytes: must be >= 1")
        for name in ("datagen_float", "datagen_integer", "datagen_string_length", "spacing_inter_arrival"):
            try:
                getattr(self, name).validate()
            except InvalidParameterError as exc:
                errs.append(f"{key_for(name)}: {exc}")
        if errs:
            raise ConfigError("; ".join(errs))
        return self


def key_for(field_name: str) -> str:
    head, _, rest = field_name.partition("_")
    return f"{head}.{rest}" if head in _GROUPS and rest else field_name


_FIELDS = {f.name: f for f in fields(RunConfig)}
_KEYS = {key_for(n): n for n in _FIELDS}

_DIST_RE = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")
_PARAM_RE = re.compile(r"(\w+)\s*=\s*(\[[^\]]*\]|[^,]+)")


def parse_distribution(text: str) -> DistributionSpec:
    """``pareto(shape=3, scale=1)`` or ``histogram(weights=[1,2,3])``."""
    m = _DIST_RE.match(text)
    if not m or m.group(1) not in DISTRIBUTION_KINDS:
        raise ValueError(f"bad distribution {text!r}; kinds: {', '.join(DISTRIBUTION_KINDS)}")
    params = {}
    for name, val in _PARAM_RE.findall(m.group(2) or ""):
        val = val.strip()
        if val.startswith("["):
            params[name] = tuple(float(x) for x in val[1:-1].split(",") if x.strip())
        else:
            params[name] = float(val)
    return DistributionSpec(m.group(1), params)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_mix(text: str) -> dict:
    out = {}
    for part in text.split(","):
        k, _, v = part.partition("=")
        out[k.strip()] = float(v)
    return out


def _converter(name: str):
    t = str(_FIELDS[name].type)
    if "DistributionSpec" in t:
        return parse_distribution
    if t.startswith("bool"):
        return _parse_bool
    if t.startswith("int"):
        return lambda s: int(s.strip())
    if t.startswith("float"):
        return lambda s: float(s.strip())
    if t == "tuple":
        return lambda s: tuple(float(x) for x in s.split(","))
    if t == "dict":
        return _parse_mix
    return lambda s: s.strip()


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, DistributionSpec):
        return str(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(x)) for x in value)
    if isinstance(value, dict):
        return ",".join(f"{k}={float(v)!r}" for k, v in value.items())
    return str(value)


def config_from_mapping(raw: dict[str, str], where: dict[str, str] | None = None) -> RunConfig:
    where = where or {}
    values = {}
    for key, text in raw.items():
        name = _KEYS.get(key)
        if name is None:
            raise ConfigError(f"{where.get(key, 'override')}: unknown key {key!r}")
        try:
            values[name] = _converter(name)(text)
        except ValueError as exc:
            raise ConfigError(f"{where.get(key, 'override')}: {key}: {exc}") from None
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return RunConfig(**values).validate()


def read_properties(path) -> tuple[dict[str, str], dict[str, str]]:
    raw, where = {}, {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        raw[key] = value.strip()
        where[key] = f"{path}:{lineno}"
    return raw, where


def parse_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    raw, where = read_properties(path) if path is not None else ({}, {})
    for key, value in (overrides or {}).items():
        raw[key] = str(value)
        where[key] = "override"
    return config_from_mapping(raw, where)


def config_items(cfg: RunConfig) -> dict[str, str]:
    """Every field as ``key -> text``, in declaration order."""
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        out[key_for(f.name)] = format_value(v)
    return out


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in config_items(cfg).items())


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes).validate()


def known_adapters() -> list[str]:
    return adapter_names()
