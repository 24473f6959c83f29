"""Synthetic SUT whose ingest rate follows a configurable scalability law.

Inserts are served one after another by a single virtual server: a batch
of n points occupies the server for n / rate seconds. After a scale-out
from m to m+1 nodes the rate becomes ``rate * (m+1)/m * w``, where w is
``w_s`` (linear mode) or ``w_s ** m`` (decaying mode).
"""

from __future__ import annotations

import threading

from ..clock import WallClock
from .base import (
    Ack,
    AdapterUnavailableError,
    Descriptor,
    NonScalableError,
    OrderingError,
    SutAdapter,
    check_batch_order,
    register_adapter,
)
from .oracle import brute_force_query


def scaled_rate(rate: float, m: int, w_s: float, mode: str) -> float:
    """Ingest rate after scaling from ``m`` to ``m + 1`` nodes."""
    if mode == "linear":
        w = w_s
    elif mode == "decaying":
        w = w_s**m
    else:
        raise ValueError(f"unknown scalability mode {mode!r}")
    return rate * (m + 1) / m * w


@register_adapter("modeled")
class ModeledSut(SutAdapter):
    name = "modeled"

    def __init__(
        self,
        rate: float = 100_000.0,
        nodes: int = 1,
        w_s: float = 1.0,
        mode: str = "linear",
        ratio: float = 10.0,
        scalable: bool = True,
        clock=None,
        query_latency: float = 0.0005,
        retain_points: bool = True,
    ):
        if not rate > 0:
            raise ValueError("rate must be positive")
        if not 0 < w_s <= 1:
            raise ValueError("w_s must lie in (0, 1]")
        if mode not in ("linear", "decaying"):
            raise ValueError(f"unknown scalability mode {mode!r}")
        if nodes < 1 or not ratio > 0:
            raise ValueError("need nodes >= 1 and ratio > 0")
        self.base_rate = rate
        self.initial_nodes = nodes
        self.w_s = w_s
        self.mode = mode
        self.ratio = ratio
        self.scalable = scalable
        self.clock = clock or WallClock()
        self.query_latency = query_latency
        self.retain_points = retain_points
        self._lock = threading.Lock()
        self._closed = False
        self._reset()

    def _reset(self):
        self.rate = self.base_rate
        self._nodes = self.initial_nodes
        self._next_free = None
        self._points: dict[str, list] = {}
        self._last_ts: dict[str, int] = {}
        self.acked_points = 0
        self.acked_bytes = 0

    @property
    def descriptor(self) -> Descriptor:
        return Descriptor(self.name, self._nodes, self.scalable)

    def insert(self, batch) -> Ack:
        if self._closed:
            raise AdapterUnavailableError("modeled SUT is closed")
        if not batch:
            return Ack(0, 0)
        groups = check_batch_order(batch)
        n = len(batch)
        nbytes = sum(p.encoded_size for p in batch)
        with self._lock:
            for sid, pts in groups.items():
                last = self._last_ts.get(sid)
                if last is not None and pts[0].timestamp <= last:
                    raise OrderingError(f"{sid}: timestamp {pts[0].timestamp} not after {last}")
            for sid, pts in groups.items():
                self._last_ts[sid] = pts[-1].timestamp
                if self.retain_points:
                    self._points.setdefault(sid, []).extend(pts)
            now = self.clock.now()
            start = now if self._next_free is None else max(now, self._next_free)
            done = start + n / self.rate
            self._next_free = done
            self.acked_points += n
            self.acked_bytes += nbytes
        self.clock.sleep_until(done)
        return Ack(n, nbytes)

    def query(self, spec):
        spec.validate()
        with self._lock:
            pts = [p for sid in set(spec.sensors) for p in self._points.get(sid, ())]
        if self.query_latency:
            self.clock.sleep(self.query_latency)
        return brute_force_query(pts, spec)

    def scale_out(self) -> Descriptor:
        if not self.scalable:
            raise NonScalableError("modeled SUT configured as non-scalable")
        with self._lock:
            self.rate = scaled_rate(self.rate, self._nodes, self.w_s, self.mode)
            self._nodes += 1
            return self.descriptor

    def disk_usage(self) -> int:
        return int(round(self.acked_bytes / self.ratio))

    def flush(self) -> None:
        pass

    def cleanup(self) -> None:
        with self._lock:
            self._reset()

    def close(self) -> None:
        self._closed = True
