"""Systems under test: adapter contract, reference store, modeled SUT."""

from .base import (
    Ack,
    AdapterError,
    AdapterUnavailableError,
    Descriptor,
    NonScalableError,
    OrderingError,
    SutAdapter,
    UnknownAdapterError,
    adapter_names,
    create_adapter,
    register_adapter,
)
from .codecs import CodecId, decode_segment, encode_segment
from .modeled import ModeledSut, scaled_rate
from .oracle import brute_force_query
from .store import ReferenceStore

__all__ = [
    "Ack",
    "AdapterError",
    "AdapterUnavailableError",
    "CodecId",
    "Descriptor",
    "ModeledSut",
    "NonScalableError",
    "OrderingError",
    "ReferenceStore",
    "SutAdapter",
    "UnknownAdapterError",
    "adapter_names",
    "brute_force_query",
    "create_adapter",
    "decode_segment",
    "encode_segment",
    "register_adapter",
    "scaled_rate",
]
