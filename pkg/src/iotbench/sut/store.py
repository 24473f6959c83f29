"""Embedded reference time-series store.

On-disk layout under ``data_dir``::

    index.json                 sensor -> node, kind, codec, segment table
    node_<i>/<sensor_id>.seg   append-only sequence of encoded segments

Each sensor lives on exactly one logical node. ``scale_out`` adds a node
directory and moves about 1/(m+1) of the sensors to it in a background
thread while inserts and queries keep being served.
"""

from __future__ import annotations

import bisect
import itertools
import json
import logging
import math
import os
import shutil
import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from ..datagen import kind_of
from ..workload import QueryError, QuerySpec
from .base import (
    Ack,
    AdapterError,
    AdapterUnavailableError,
    Descriptor,
    NonScalableError,
    OrderingError,
    SutAdapter,
    check_batch_order,
    register_adapter,
)
from .codecs import CodecId, codec_for_kind, decode_columns, encode_columns, parse_codec

log = logging.getLogger(__name__)

_seg_ids = itertools.count()


@dataclass
class _SegRef:
    seg_id: int
    offset: int
    length: int
    t_start: int
    t_end: int
    count: int


@dataclass
class _Series:
    sensor_id: str
    node: int
    kind: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    buf_ts: list = field(default_factory=list)
    buf_vals: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    last_ts: int | None = None


def _hash(sensor_id: str) -> int:
    return zlib.crc32(sensor_id.encode())


@register_adapter("reference")
class ReferenceStore(SutAdapter):
    name = "reference"

    def __init__(
        self,
        data_dir,
        nodes: int = 1,
        scalable: bool = True,
        codec: str = "auto",
        segment_points: int = 4096,
        cache_segments: int = 1024,
        migration_pause: float = 0.0,
    ):
        if nodes < 1:
            raise ValueError("nodes must be >= 1")
        if codec != "auto":
            codec = parse_codec(codec)
            if codec is not CodecId.NONE:
                raise ValueError("store codec must be 'auto' (per value kind) or 'none'")
        self.data_dir = Path(data_dir)
        self.initial_nodes = nodes
        self.scalable = scalable
        self.codec = codec
        self.segment_points = segment_points
        self.migration_pause = migration_pause
        self._nodes = nodes
        self._series: dict[str, _Series] = {}
        self._series_lock = threading.Lock()
        self._topo_lock = threading.Lock()
        self._stats_lock = threading.Lock()
        self._cache: OrderedDict = OrderedDict()
        self._cache_lock = threading.Lock()
        self._cache_cap = cache_segments
        self._migration: threading.Thread | None = None
        self._migration_error: BaseException | None = None
        self.acked_points = 0
        self.acked_bytes = 0
        self._closed = False
        self._init_dirs()

    def _init_dirs(self):
        for i in range(self._nodes):
            (self.data_dir / f"node_{i}").mkdir(parents=True, exist_ok=True)
        self._write_index()

    @property
    def descriptor(self) -> Descriptor:
        return Descriptor(self.name, self._nodes, self.scalable)

    def _path(self, s: _Series) -> Path:
        return self.data_dir / f"node_{s.node}" / f"{s.sensor_id}.seg"

    def _codec_for(self, kind: str) -> CodecId:
        return CodecId.NONE if self.codec is CodecId.NONE else codec_for_kind(kind)

    # ---------------------------------------------------------------- writes

    def _get_series(self, sensor_id: str, kind: str) -> _Series:
        s = self._series.get(sensor_id)
        if s is None:
            with self._series_lock:
                s = self._series.get(sensor_id)
                if s is None:
                    s = _Series(sensor_id, _hash(sensor_id) % self._nodes, kind)
                    self._series[sensor_id] = s
        return s

    def insert(self, batch) -> Ack:
        if self._closed:
            raise AdapterUnavailableError("store is closed")
        if not batch:
            return Ack(0, 0)
        groups = check_batch_order(batch)
        n_pts = n_bytes = 0
        for sensor_id, pts in groups.items():
            s = self._get_series(sensor_id, kind_of(pts[0].value))
            with s.lock:
                if s.last_ts is not None and pts[0].timestamp <= s.last_ts:
                    raise OrderingError(
                        f"{sensor_id}: timestamp {pts[0].timestamp} not after stored {s.last_ts}"
                    )
                for p in pts:
                    if kind_of(p.value) != s.kind:
                        raise AdapterError(f"{sensor_id} stores {s.kind}, got {kind_of(p.value)}")
                s.buf_ts.extend(p.timestamp for p in pts)
                s.buf_vals.extend(p.value for p in pts)
                s.last_ts = pts[-1].timestamp
                while len(s.buf_ts) >= self.segment_points:
                    self._seal(s, self.segment_points)
            n_pts += len(pts)
            n_bytes += sum(p.encoded_size for p in pts)
        with self._stats_lock:
            self.acked_points += n_pts
            self.acked_bytes += n_bytes
        return Ack(n_pts, n_bytes)

    def _seal(self, s: _Series, n: int) -> None:
        """Encode the first ``n`` buffered points of ``s`` (lock held) and append them."""
        ts, vals = s.buf_ts[:n], s.buf_vals[:n]
        data = encode_columns(ts, vals, self._codec_for(s.kind), s.kind)
        with open(self._path(s), "ab") as fh:
            offset = fh.tell()
            fh.write(data)
        s.segments.append(_SegRef(next(_seg_ids), offset, len(data), ts[0], ts[-1], n))
        del s.buf_ts[:n]
        del s.buf_vals[:n]

    def flush(self) -> None:
        self.wait_for_migration()
        for s in list(self._series.values()):
            with s.lock:
                while s.buf_ts:
                    self._seal(s, min(len(s.buf_ts), self.segment_points))
        self._write_index()

    def _write_index(self) -> None:
        doc = {
            "nodes": self._nodes,
            "codec": "auto" if self.codec == "auto" else "none",
            "sensors": {
                sid: {
                    "node": s.node,
                    "kind": s.kind,
                    "segments": [[r.offset, r.length, r.t_start, r.t_end, r.count] for r in s.segments],
                }
                for sid, s in sorted(self._series.items())
            },
        }
        tmp = self.data_dir / "index.json.tmp"
        tmp.write_text(json.dumps(doc, separators=(",", ":")))
        os.replace(tmp, self.data_dir / "index.json")

    # ----------------------------------------------------------------- reads

    def _load(self, s: _Series, ref: _SegRef):
        with self._cache_lock:
            hit = self._cache.get(ref.seg_id)
            if hit is not None:
                self._cache.move_to_end(ref.seg_id)
                return hit
        with open(self._path(s), "rb") as fh:
            fh.seek(ref.offset)
            data = fh.read(ref.length)
        ts, vals, _ = decode_columns(data)
        with self._cache_lock:
            self._cache[ref.seg_id] = (ts, vals)
            while len(self._cache) > self._cache_cap:
                self._cache.popitem(last=False)
        return ts, vals

    def _range(self, sensor_id: str, lo: int, hi: int):
        s = self._series.get(sensor_id)
        if s is None:
            return [], []
        ts_out, val_out = [], []
        with s.lock:
            chunks = [self._load(s, r) for r in s.segments if r.t_end >= lo and r.t_start <= hi]
            chunks.append((list(s.buf_ts), list(s.buf_vals)))
        for ts, vals in chunks:
            i = bisect.bisect_left(ts, lo)
            j = bisect.bisect_right(ts, hi)
            ts_out.extend(ts[i:j])
            val_out.extend(vals[i:j])
        return ts_out, val_out

    def query(self, spec: QuerySpec) -> list[tuple]:
        if self._closed:
            raise AdapterUnavailableError("store is closed")
        spec.validate()
        data = {sid: self._range(sid, spec.t_start, spec.t_end) for sid in sorted(set(spec.sensors))}
        t = spec.template
        rows: list[tuple] = []
        if t == "time_range":
            for sid, (ts, vals) in data.items():
                rows.extend((sid, a, b) for a, b in zip(ts, vals))
        elif t == "aggregation":
            for sid, (ts, vals) in data.items():
                if vals:
                    rows.extend((sid, f, _aggregate(f, vals)) for f in spec.agg_functions)
        elif t == "downsample":
            t0, unit = spec.t_start, spec.unit
            for sid, (ts, vals) in data.items():
                pairs = zip(ts, vals)
                for b, grp in itertools.groupby(pairs, key=lambda p: (p[0] - t0) // unit):
                    rows.append((sid, t0 + b * unit, _aggregate(spec.bucket_agg, [v for _, v in grp])))
        else:
            c = spec.cond
            cmp = _COMPARE[c.op]
            cts, cvals = data.get(c.sensor, ([], []))
            try:
                match = {a for a, b in zip(cts, cvals) if cmp(b, c.value)}
            except TypeError:
                raise QueryError("condition value type does not match sensor values") from None
            for sid, (ts, vals) in data.items():
                rows.extend((sid, a, b) for a, b in zip(ts, vals) if a in match)
        return rows

    # ------------------------------------------------------------ topology

    def scale_out(self) -> Descriptor:
        if not self.scalable:
            raise NonScalableError("reference store configured as non-scalable")
        with self._topo_lock:
            self.wait_for_migration()
            new_node = self._nodes
            (self.data_dir / f"node_{new_node}").mkdir(parents=True, exist_ok=True)
            self._nodes += 1
            with self._series_lock:
                names = list(self._series)
            n_move = math.ceil(len(names) / self._nodes)
            order = sorted(names, key=lambda n: (_hash(f"{n}#{new_node}"), n))
            movers = [self._series[n] for n in order[:n_move]]
            self._migration_error = None
            self._migration = threading.Thread(
                target=self._migrate, args=(movers, new_node), name="store-migration", daemon=True
            )
            self._migration.start()
            log.info("scale-out to %d nodes, migrating %d sensors", self._nodes, len(movers))
            return self.descriptor

    def _migrate(self, movers, node):
        try:
            for s in movers:
                with s.lock:
                    src = self._path(s)
                    dst = self.data_dir / f"node_{node}" / src.name
                    if src.exists():
                        shutil.copyfile(src, dst)
                        os.remove(src)
                    s.node = node
                if self.migration_pause:
                    threading.Event().wait(self.migration_pause)
            self._write_index()
        except BaseException as exc:  # surfaced by wait_for_migration
            self._migration_error = exc

    def wait_for_migration(self) -> None:
        m = self._migration
        if m is not None:
            m.join()
            self._migration = None
            if self._migration_error is not None:
                raise AdapterError(f"migration failed: {self._migration_error}")

    @property
    def migrating(self) -> bool:
        return self._migration is not None and self._migration.is_alive()

    # -------------------------------------------------------------- storage

    def disk_usage(self) -> int:
        total = 0
        for root, _, files in os.walk(self.data_dir):
            for f in files:
                total += os.path.getsize(os.path.join(root, f))
        return total

    def cleanup(self) -> None:
        """Drop all data and return to the initial topology."""
        self.wait_for_migration()
        with self._series_lock:
            self._series.clear()
        with self._cache_lock:
            self._cache.clear()
        shutil.rmtree(self.data_dir, ignore_errors=True)
        self._nodes = self.initial_nodes
        with self._stats_lock:
            self.acked_points = self.acked_bytes = 0
        self._init_dirs()

    def close(self) -> None:
        self.wait_for_migration()
        self._closed = True


def _aggregate(func: str, vals: list):
    if func == "avg":
        if isinstance(vals[0], str):
            raise QueryError("avg over string values")
        return math.fsum(vals) / len(vals)
    if func == "max":
        return max(vals)
    if func == "min":
        return min(vals)
    if func == "first":
        return vals[0]
    if func == "last":
        return vals[-1]
    raise QueryError(f"unknown aggregate {func!r}")


_COMPARE = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
}
