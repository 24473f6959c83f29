"""Performance and price/performance metrics plus the analytic scale-out model.

All functions are pure. Rates are in points per second unless a name says
kIoTps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SECONDS_PER_INTERVAL = 1800
INTERVAL_WEIGHT = 2 * 24 * 365  # half-hour intervals in a year: 17520
STORAGE_COST_PER_16B_RECORD = 2.039e-08
REFERENCE_RECORD_BYTES = 16


class InvalidRunError(ValueError):
    pass


class CapacityError(ValueError):
    """Storage capacity S_0 is below the ingested volume S_i."""


def iotps(N_p: float, T_1: float, T_2: float, min_run_seconds: float = 0.0) -> float:
    """Ingested points over the longer of the two measured runs."""
    T = max(T_1, T_2)
    if min(T_1, T_2) <= 0 or min(T_1, T_2) < min_run_seconds:
        raise InvalidRunError(
            f"run durations {T_1:.3f}s/{T_2:.3f}s must be positive and >= {min_run_seconds}s"
        )
    return N_p / T


def compression_ratio(S_i: float, S_d: float) -> float:
    if S_d <= 0:
        raise ZeroDivisionError("on-disk size S_d must be positive")
    return S_i / S_d


@dataclass(frozen=True)
class ScalabilityInputs:
    rate: float  # stable-phase rate n_0/t_0
    m: int
    w_s: float = 1.0
    t_0: float = 1.0
    t_s: float = 1.0
    mode: str = "linear"  # linear | decaying

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0 < self.w_s <= 1:
            raise ValueError("w_s must lie in (0, 1]")
        if self.mode not in ("linear", "decaying"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.t_0 < 0 or self.t_s < 0 or self.t_0 + self.t_s <= 0:
            raise ValueError("phase durations must be nonnegative with positive sum")

    @property
    def effective_linearity(self) -> float:
        return self.w_s if self.mode == "linear" else self.w_s**self.m


def model_iotps(inputs: ScalabilityInputs) -> float:
    """Whole-run rate when the scale-out phase runs at R*(m+1)/m*w_eff."""
    x = inputs
    n_0 = x.rate * x.t_0
    n_s = x.t_s * x.rate * (x.m + 1) / x.m * x.effective_linearity
    return (n_s + n_0) / (x.t_0 + x.t_s)


@dataclass(frozen=True)
class CostModel:
    C_0: float = 0.0  # storage component price, recorded only
    S_0: float = math.inf  # storage component capacity in bytes
    c_0: float = 300_000.0  # non-storage system cost before scale-out
    c_s: float = 300_000.0  # non-storage system cost after scale-out
    w_i: int = INTERVAL_WEIGHT
    interval_seconds: int = SECONDS_PER_INTERVAL
    storage_cost_per_16b: float = STORAGE_COST_PER_16B_RECORD
    record_bytes: int = REFERENCE_RECORD_BYTES

    @property
    def per_record_storage_cost(self) -> float:
        return self.storage_cost_per_16b * self.record_bytes / REFERENCE_RECORD_BYTES

    @property
    def system_cost(self) -> float:
        return 0.5 * self.c_0 + 0.5 * self.c_s


def storage_cost(cost: CostModel, iotps_value: float, r: float) -> float:
    """One year of ingestion at ``iotps_value``, stored at compression ratio ``r``."""
    if not r > 0:
        raise ValueError("compression ratio must be positive")
    return cost.w_i * cost.interval_seconds * iotps_value * cost.per_record_storage_cost / r


def total_cost(cost: CostModel, iotps_value: float, r: float) -> float:
    return cost.system_cost + storage_cost(cost, iotps_value, r)


def price_performance(cost: CostModel, iotps_value: float, r: float, S_i: float | None = None) -> float:
    """Total cost of ownership in USD per kIoTps."""
    if not iotps_value > 0:
        raise ValueError("IoTps must be positive")
    if S_i is not None and cost.S_0 < S_i:
        raise CapacityError(f"storage capacity S_0={cost.S_0} is below ingested S_i={S_i}")
    return total_cost(cost, iotps_value, r) / (iotps_value / 1000.0)


def storage_crossover_ratio(cost: CostModel, iotps_value: float) -> float:
    """Compression ratio at which storage cost equals the non-storage system cost."""
    return storage_cost(cost, iotps_value, 1.0) / cost.system_cost
