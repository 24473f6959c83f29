"""Database interface layer: the adapter contract and registry."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

from ..datagen import DataPoint
from ..workload import QuerySpec


class AdapterError(RuntimeError):
    pass


class AdapterUnavailableError(AdapterError):
    pass


class OrderingError(AdapterError):
    """A batch would make some sensor's timestamps non-increasing."""


class NonScalableError(AdapterError):
    """The system under test was declared non-scalable."""


class UnknownAdapterError(KeyError):
    pass


@dataclass(frozen=True)
class Ack:
    points: int
    bytes: int


@dataclass(frozen=True)
class Descriptor:
    name: str
    node_count: int
    scalable: bool


class SutAdapter(ABC):
    """Operations every system under test must support.

    Implementations must tolerate concurrent calls from many worker threads,
    including ``scale_out`` running alongside inserts and queries.
    """

    name = "abstract"

    @property
    @abstractmethod
    def descriptor(self) -> Descriptor: ...

    @abstractmethod
    def insert(self, batch: Sequence[DataPoint]) -> Ack: ...

    @abstractmethod
    def query(self, spec: QuerySpec) -> list[tuple]: ...

    @abstractmethod
    def scale_out(self) -> Descriptor: ...

    @abstractmethod
    def disk_usage(self) -> int: ...

    @abstractmethod
    def flush(self) -> None: ...

    @abstractmethod
    def cleanup(self) -> None: ...

    def close(self) -> None:
        pass


_REGISTRY: dict[str, Callable[..., SutAdapter]] = {}


def register_adapter(name: str):
    def deco(factory):
        _REGISTRY[name] = factory
        return factory

    return deco


def adapter_names() -> list[str]:
    return sorted(_REGISTRY)


def create_adapter(name: str, **options) -> SutAdapter:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownAdapterError(f"no adapter named {name!r}; known: {adapter_names()}") from None
    return factory(**options)


def check_batch_order(batch: Sequence[DataPoint]) -> dict[str, list[DataPoint]]:
    """Group a batch by sensor, rejecting non-increasing timestamps within it."""
    groups: dict[str, list[DataPoint]] = {}
    for p in batch:
        g = groups.get(p.sensor_id)
        if g is None:
            groups[p.sensor_id] = [p]
        else:
            if p.timestamp <= g[-1].timestamp:
                raise OrderingError(
                    f"{p.sensor_id}: timestamp {p.timestamp} after {g[-1].timestamp} in batch"
                )
            g.append(p)
    return groups
