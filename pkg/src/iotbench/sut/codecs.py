"""Lossless segment codecs for the reference store.

Segment layout (little-endian)::

    offset size field
    0      4    magic  b"TSG1"
    4      1    codec id (0 none, 1 delta_varint, 2 xor_float, 3 dict_string)
    5      1    value kind (0 integer, 1 float64, 2 string)
    6      4    point count (u32)
    10     8    first timestamp (i64, 0 if empty)
    18     8    last timestamp (i64, 0 if empty)
    26     4    payload length (u32)
    30     4    CRC32 of payload (u32)
    34     ...  payload

Compressed payloads are ``varint(len(ts_block)) ts_block value_block``.
Timestamps are always delta-of-delta; see ``encode_int_series``.
"""

from __future__ import annotations

import struct
import zlib
from enum import IntEnum
from typing import Sequence

import numpy as np

MAGIC = b"TSG1"
HEADER = struct.Struct("<4sBBIqqII")
HEADER_SIZE = HEADER.size

KIND_CODES = {"integer": 0, "float64": 1, "string": 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

_U64 = np.uint64


class CodecId(IntEnum):
    NONE = 0
    DELTA_VARINT = 1
    XOR_FLOAT = 2
    DICT_STRING = 3


# value codec each kind accepts, besides NONE
_KIND_CODEC = {
    "integer": CodecId.DELTA_VARINT,
    "float64": CodecId.XOR_FLOAT,
    "string": CodecId.DICT_STRING,
}


class CodecError(ValueError):
    pass


class CorruptSegmentError(CodecError):
    pass


def codec_for_kind(kind: str) -> CodecId:
    return _KIND_CODEC[kind]


def parse_codec(name: str | int | CodecId) -> CodecId:
    if isinstance(name, str):
        try:
            return CodecId[name.upper()]
        except KeyError:
            raise CodecError(f"unknown codec {name!r}") from None
    return CodecId(name)


# --------------------------------------------------------------------------
# varints


def encode_varints(values: np.ndarray) -> bytes:
    v = np.ascontiguousarray(values, dtype=_U64)
    if v.size == 0:
        return b""
    nbytes = np.ones(v.size, dtype=np.int64)
    for j in range(1, 10):
        nbytes += v >= _U64(1 << (7 * j))
    ends = np.cumsum(nbytes)
    starts = ends - nbytes
    out = np.zeros(int(ends[-1]), dtype=np.uint8)
    for j in range(10):
        m = nbytes > j
        if not m.any():
            break
        chunk = ((v[m] >> _U64(7 * j)) & _U64(0x7F)).astype(np.uint8)
        cont = (nbytes[m] - 1 > j).astype(np.uint8) << 7
        out[starts[m] + j] = chunk | cont
    return out.tobytes()


def decode_varints(buf: bytes) -> np.ndarray:
    a = np.frombuffer(buf, dtype=np.uint8)
    if a.size == 0:
        return np.zeros(0, dtype=_U64)
    term = a < 0x80
    if not term[-1]:
        raise CorruptSegmentError("truncated varint stream")
    ends = np.flatnonzero(term)
    starts = np.concatenate(([0], ends[:-1] + 1))
    group = np.concatenate(([0], np.cumsum(term[:-1])))
    pos = np.arange(a.size) - starts[group]
    if pos.max() > 9:
        raise CorruptSegmentError("varint longer than 10 bytes")
    contrib = (a & 0x7F).astype(_U64) << (pos.astype(_U64) * _U64(7))
    return np.bitwise_or.reduceat(contrib, starts)


def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    shift = result = 0
    while True:
        if pos >= len(buf):
            raise CorruptSegmentError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if b < 0x80:
            return result, pos
        shift += 7


def zigzag(v: np.ndarray) -> np.ndarray:
    s = np.asarray(v).view(np.int64)
    return ((s << 1) ^ (s >> 63)).view(_U64)


def unzigzag(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=_U64)
    return ((u >> _U64(1)) ^ (_U64(0) - (u & _U64(1)))).view(np.int64)


def _rle_zero_tokens(u: np.ndarray) -> np.ndarray:
    """A run of zeros becomes the pair (0, run length); other values pass through."""
    if u.size == 0:
        return u
    is0 = u == 0
    prev0 = np.concatenate(([False], is0[:-1]))
    run_start = is0 & ~prev0
    keep = ~is0 | run_start
    starts = np.flatnonzero(run_start)
    run_end = np.flatnonzero(is0 & ~np.concatenate((is0[1:], [False]))) + 1
    lengths = (run_end - starts).astype(_U64)
    tokens = u[keep]
    zero_pos = np.flatnonzero(tokens == 0)
    return np.insert(tokens, zero_pos + 1, lengths)


def _expand_zero_tokens(tokens: np.ndarray) -> np.ndarray:
    if tokens.size == 0:
        return tokens
    marker = tokens == 0
    mpos = np.flatnonzero(marker)
    if mpos.size and mpos[-1] + 1 >= tokens.size:
        raise CorruptSegmentError("zero run without length")
    reps = np.ones(tokens.size, dtype=np.int64)
    reps[mpos] = tokens[mpos + 1].astype(np.int64)
    reps[mpos + 1] = 0
    return np.repeat(np.where(marker, _U64(0), tokens), reps)


def encode_int_series(values: Sequence[int], order: int) -> bytes:
    """Difference ``order`` times (mod 2**64), zigzag, zero-run tokens, varints.

    The first ``order`` entries keep their lower-order differences, so the
    stream for timestamps (order 2) is ``t0, t1-t0, dod2, dod3, ...``.
    """
    a = np.asarray(values, dtype=np.int64).view(_U64)
    for level in range(order):
        if a.size > level + 1:
            a = np.concatenate((a[: level + 1], np.diff(a[level:])))
    return encode_varints(_rle_zero_tokens(zigzag(a)))


def decode_int_series(buf: bytes, order: int, count: int) -> np.ndarray:
    a = unzigzag(_expand_zero_tokens(decode_varints(buf))).view(_U64)
    if a.size != count:
        raise CorruptSegmentError(f"expected {count} values, decoded {a.size}")
    for level in reversed(range(order)):
        if a.size > level + 1:
            a = np.concatenate((a[: level + 1], a[level] + np.cumsum(a[level + 1 :])))
    return a.view(np.int64)


# --------------------------------------------------------------------------
# XOR floats (Gorilla-style, sticky leading/trailing window)


def encode_xor_floats(values: Sequence[float]) -> bytes:
    if len(values) == 0:
        return b""
    words = np.asarray(values, dtype=np.float64).view(_U64).tolist()
    parts = [format(words[0], "064b")]
    prev = words[0]
    win_lead, win_len = -1, 0
    for w in words[1:]:
        x = w ^ prev
        prev = w
        if x == 0:
            parts.append("0")
            continue
        lead = 64 - x.bit_length()
        trail = (x & -x).bit_length() - 1
        if win_lead >= 0 and lead >= win_lead and trail >= 64 - win_lead - win_len:
            parts.append("10" + format(x >> (64 - win_lead - win_len), f"0{win_len}b"))
        else:
            n = 64 - lead - trail
            win_lead, win_len = lead, n
            parts.append("11" + format(lead, "06b") + format(n - 1, "06b") + format(x >> trail, f"0{n}b"))
    bits = "".join(parts)
    pad = -len(bits) % 8
    return int(bits + "0" * pad, 2).to_bytes((len(bits) + pad) // 8, "big")


def decode_xor_floats(buf: bytes, count: int) -> list[float]:
    if count == 0:
        return []
    bits = format(int.from_bytes(buf, "big"), f"0{len(buf) * 8}b")
    if len(bits) < 64:
        raise CorruptSegmentError("xor stream too short")
    words = [int(bits[:64], 2)]
    p = 64
    prev = words[0]
    win_lead = win_len = 0
    try:
        for _ in range(count - 1):
            if bits[p] == "0":
                p += 1
            else:
                if bits[p + 1] == "1":
                    win_lead = int(bits[p + 2 : p + 8], 2)
                    win_len = int(bits[p + 8 : p + 14], 2) + 1
                    p += 14
                else:
                    p += 2
                chunk = bits[p : p + win_len]
                if len(chunk) != win_len:
                    raise IndexError
                prev ^= int(chunk, 2) << (64 - win_lead - win_len)
                p += win_len
            words.append(prev)
    except (IndexError, ValueError):
        raise CorruptSegmentError("truncated xor stream") from None
    return np.array(words, dtype=_U64).view(np.float64).tolist()


# --------------------------------------------------------------------------
# front-coded string dictionary


def encode_dict_strings(values: Sequence[str]) -> bytes:
    if not values:
        return b""
    vocab = sorted(set(values))
    index = {s: i for i, s in enumerate(vocab)}
    out = bytearray(_varint(len(vocab)))
    prev = b""
    for s in vocab:
        b = s.encode("utf-8")
        shared = 0
        limit = min(len(prev), len(b))
        while shared < limit and prev[shared] == b[shared]:
            shared += 1
        out += _varint(shared) + _varint(len(b) - shared) + b[shared:]
        prev = b
    out += encode_varints(np.array([index[s] for s in values], dtype=_U64))
    return bytes(out)


def decode_dict_strings(buf: bytes, count: int) -> list[str]:
    if count == 0:
        return []
    n, pos = _read_varint(buf, 0)
    vocab = []
    prev = b""
    for _ in range(n):
        shared, pos = _read_varint(buf, pos)
        rest, pos = _read_varint(buf, pos)
        cur = prev[:shared] + buf[pos : pos + rest]
        pos += rest
        vocab.append(cur.decode("utf-8"))
        prev = cur
    idx = decode_varints(buf[pos:])
    if idx.size != count or (idx.size and int(idx.max()) >= n):
        raise CorruptSegmentError("bad dictionary index stream")
    return [vocab[i] for i in idx.tolist()]


# --------------------------------------------------------------------------
# raw codec


def _encode_raw(timestamps, values, kind: str) -> bytes:
    out = bytearray(np.asarray(timestamps, dtype="<i8").tobytes())
    if kind == "float64":
        out += np.asarray(values, dtype="<f8").tobytes()
    elif kind == "integer":
        out += np.asarray(values, dtype="<i8").tobytes()
    else:
        for s in values:
            b = s.encode("utf-8")
            out += _varint(len(b)) + b
    return bytes(out)


def _decode_raw(buf: bytes, kind: str, count: int):
    ts = np.frombuffer(buf, dtype="<i8", count=count).tolist()
    rest = buf[8 * count :]
    if kind == "float64":
        vals = np.frombuffer(rest, dtype="<f8", count=count).tolist()
    elif kind == "integer":
        vals = np.frombuffer(rest, dtype="<i8", count=count).tolist()
    else:
        vals, pos = [], 0
        for _ in range(count):
            n, pos = _read_varint(rest, pos)
            vals.append(rest[pos : pos + n].decode("utf-8"))
            pos += n
    return ts, vals


# --------------------------------------------------------------------------
# segments


def _infer_kind(values) -> str:
    kinds = set()
    for v in values:
        if isinstance(v, str):
            kinds.add("string")
        elif isinstance(v, int) and not isinstance(v, bool):
            kinds.add("integer")
        elif isinstance(v, float):
            kinds.add("float64")
        else:
            raise CodecError(f"unsupported value type {type(v).__name__}")
    if len(kinds) > 1:
        raise CodecError(f"segment mixes value kinds {sorted(kinds)}")
    return kinds.pop()


def encode_columns(timestamps: Sequence[int], values: Sequence, codec, kind: str | None = None) -> bytes:
    codec = parse_codec(codec)
    if len(timestamps) != len(values):
        raise CodecError("timestamps and values differ in length")
    if values:
        inferred = _infer_kind(values)
        if kind is not None and kind != inferred:
            raise CodecError(f"segment declared {kind} but holds {inferred} values")
        kind = inferred
    kind = kind or "float64"
    if codec is not CodecId.NONE and _KIND_CODEC[kind] is not codec:
        raise CodecError(f"codec {codec.name.lower()} cannot encode {kind} values")

    if codec is CodecId.NONE:
        payload = _encode_raw(timestamps, values, kind)
    else:
        ts_block = encode_int_series(timestamps, 2)
        if codec is CodecId.DELTA_VARINT:
            val_block = encode_int_series(values, 1)
        elif codec is CodecId.XOR_FLOAT:
            val_block = encode_xor_floats(values)
        else:
            val_block = encode_dict_strings(values)
        payload = _varint(len(ts_block)) + ts_block + val_block

    n = len(timestamps)
    t0 = int(timestamps[0]) if n else 0
    t1 = int(timestamps[-1]) if n else 0
    header = HEADER.pack(MAGIC, int(codec), KIND_CODES[kind], n, t0, t1, len(payload), zlib.crc32(payload))
    return header + payload


def read_header(buf: bytes, offset: int = 0) -> dict:
    if len(buf) - offset < HEADER_SIZE:
        raise CorruptSegmentError("truncated segment header")
    magic, codec, kind, count, t0, t1, plen, crc = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise CorruptSegmentError(f"bad magic {magic!r}")
    return {
        "codec": CodecId(codec),
        "kind": KIND_NAMES[kind],
        "count": count,
        "t_start": t0,
        "t_end": t1,
        "payload_len": plen,
        "crc": crc,
    }


def decode_columns(buf: bytes, codec=None) -> tuple[list[int], list, str]:
    h = read_header(buf)
    if codec is not None and parse_codec(codec) is not h["codec"]:
        raise CodecError(f"segment is {h['codec'].name.lower()}, not {parse_codec(codec).name.lower()}")
    payload = bytes(buf[HEADER_SIZE : HEADER_SIZE + h["payload_len"]])
    if len(payload) != h["payload_len"] or zlib.crc32(payload) != h["crc"]:
        raise CorruptSegmentError("payload CRC mismatch")
    count, kind = h["count"], h["kind"]
    if count == 0:
        return [], [], kind
    if h["codec"] is CodecId.NONE:
        ts, vals = _decode_raw(payload, kind, count)
        return ts, vals, kind
    ts_len, pos = _read_varint(payload, 0)
    ts = decode_int_series(payload[pos : pos + ts_len], 2, count).tolist()
    rest = payload[pos + ts_len :]
    if h["codec"] is CodecId.DELTA_VARINT:
        vals = decode_int_series(rest, 1, count).tolist()
    elif h["codec"] is CodecId.XOR_FLOAT:
        vals = decode_xor_floats(rest, count)
    else:
        vals = decode_dict_strings(rest, count)
    return ts, vals, kind


def encode_segment(points: Sequence[tuple[int, object]], codec, kind: str | None = None) -> bytes:
    """Encode ``(timestamp, value)`` pairs of one sensor into a segment."""
    ts = [p[0] for p in points]
    vals = [p[1] for p in points]
    return encode_columns(ts, vals, codec, kind)


def decode_segment(buf: bytes, codec=None) -> list[tuple[int, object]]:
    ts, vals, _ = decode_columns(buf, codec)
    return list(zip(ts, vals))
