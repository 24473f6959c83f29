import struct

import pytest

from iotbench.config import parse_config
from iotbench.sut.base import Ack, SutAdapter


def exact(rows):
    """Rows with floats replaced by their bit patterns, for bit-exact comparison."""
    def key(x):
        if isinstance(x, float):
            return ("f", struct.pack("<d", x))
        return (type(x).__name__, x)

    return [tuple(key(x) for x in r) for r in rows]


def desk_config(**overrides):
    base = {
        "sensors": "12",
        "clients": "3",
        "records": "6000",
        "desk_scale": "true",
        "min_run_seconds": "10",
        "sut.adapter": "modeled",
        "clock": "virtual",
        "modeled.rate": "2000",
        "verify_sample": "100",
    }
    base.update({k.replace("__", "."): str(v) for k, v in overrides.items()})
    return parse_config(None, base)


class DroppingAdapter(SutAdapter):
    """Wraps an adapter and silently drops the n-th point it is given."""

    def __init__(self, inner, drop_at=1):
        self.inner = inner
        self.drop_at = drop_at
        self.seen = 0

    @property
    def descriptor(self):
        return self.inner.descriptor

    @property
    def clock(self):
        return getattr(self.inner, "clock", None)

    @clock.setter
    def clock(self, value):
        self.inner.clock = value

    def insert(self, batch):
        keep = []
        for p in batch:
            self.seen += 1
            if self.seen != self.drop_at:
                keep.append(p)
        ack = self.inner.insert(keep)
        return Ack(ack.points, ack.bytes)

    def query(self, spec):
        return self.inner.query(spec)

    def scale_out(self):
        return self.inner.scale_out()

    def disk_usage(self):
        return self.inner.disk_usage()

    def flush(self):
        self.inner.flush()

    def cleanup(self):
        self.inner.cleanup()

    def close(self):
        self.inner.close()


@pytest.fixture
def dropping_adapter():
    return DroppingAdapter
