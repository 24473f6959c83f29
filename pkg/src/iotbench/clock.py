"""Clocks for the driver: real time, or deterministic virtual time.

Under ``VirtualClock`` exactly one participating thread runs at a time and
control always passes to the participant with the earliest wake-up time
(ties broken by registration order). Runs against a modeled SUT are then
fully reproducible: counts, phase boundaries and durations.
"""

from __future__ import annotations

import threading
import time


class WallClock:
    virtual = False

    def now(self) -> float:
        return time.monotonic()

    def sleep_until(self, t: float) -> None:
        d = t - time.monotonic()
        if d > 0:
            time.sleep(d)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    # participant bookkeeping is a no-op in real time
    def register(self):
        return None

    def attach(self, pid) -> None:
        pass

    def enter(self) -> None:
        pass

    def leave(self) -> None:
        pass


class VirtualClock:
    virtual = True

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._cv = threading.Condition()
        self._waiting: dict[int, float] = {}
        self._running: int | None = None
        self._next_pid = 0
        self._tls = threading.local()

    def now(self) -> float:
        return self._now

    def _dispatch(self) -> None:
        if not self._waiting:
            self._running = None
            return
        pid = min(self._waiting, key=lambda p: (self._waiting[p], p))
        self._now = max(self._now, self._waiting.pop(pid))
        self._running = pid
        self._cv.notify_all()

    def _wait_turn(self, pid: int) -> None:
        while self._running != pid:
            self._cv.wait()

    def enter(self) -> None:
        """Make the calling thread a participant; it runs once it is its turn."""
        with self._cv:
            pid = self._next_pid
            self._next_pid += 1
            self._tls.pid = pid
            self._waiting[pid] = self._now
            if self._running is None:
                self._dispatch()
            self._wait_turn(pid)

    def register(self) -> int:
        """Reserve a participant slot (at the current time) for a thread about to start."""
        with self._cv:
            pid = self._next_pid
            self._next_pid += 1
            self._waiting[pid] = self._now
            return pid

    def attach(self, pid: int) -> None:
        self._tls.pid = pid
        with self._cv:
            if self._running is None:
                self._dispatch()
            self._wait_turn(pid)

    def sleep_until(self, t: float) -> None:
        pid = self._tls.pid
        with self._cv:
            self._waiting[pid] = max(t, self._now)
            self._dispatch()
            self._wait_turn(pid)

    def sleep(self, seconds: float) -> None:
        self.sleep_until(self._now + max(0.0, seconds))

    def leave(self) -> None:
        with self._cv:
            self._waiting.pop(self._tls.pid, None)
            if self._running == self._tls.pid:
                self._dispatch()


def make_clock(kind: str):
    if kind == "wall":
        return WallClock()
    if kind == "virtual":
        return VirtualClock()
    raise ValueError(f"unknown clock {kind!r}")
