"""Linear-scan reference semantics for the four query templates.

Deliberately naive: every query walks every stored point. Used as the test
oracle for the reference store and as the query path of the modeled SUT.
"""

from __future__ import annotations

import math
import operator

from ..workload import QueryError, QuerySpec

_CMP = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
}


def _agg(func, values):
    if func == "avg":
        if any(isinstance(v, str) for v in values):
            raise QueryError("avg over string values")
        return math.fsum(values) / len(values)
    if func == "max":
        return max(values)
    if func == "min":
        return min(values)
    if func == "first":
        return values[0]
    if func == "last":
        return values[-1]
    raise QueryError(f"unknown aggregate {func!r}")


def brute_force_query(points, spec: QuerySpec) -> list[tuple]:
    """``points`` is any iterable of objects with sensor_id/timestamp/value."""
    spec.validate()
    wanted = set(spec.sensors)
    hits = [
        (p.sensor_id, p.timestamp, p.value)
        for p in points
        if p.sensor_id in wanted and spec.t_start <= p.timestamp <= spec.t_end
    ]
    hits.sort(key=lambda r: (r[0], r[1]))

    if spec.template == "time_range":
        return hits

    if spec.template == "filtered":
        c = spec.cond
        cmp = _CMP[c.op]
        try:
            keep_ts = {t for s, t, v in hits if s == c.sensor and cmp(v, c.value)}
        except TypeError:
            raise QueryError("condition value type does not match sensor values") from None
        return [r for r in hits if r[1] in keep_ts]

    by_sensor: dict[str, list] = {}
    for s, t, v in hits:
        by_sensor.setdefault(s, []).append((t, v))

    rows = []
    if spec.template == "aggregation":
        for s in sorted(by_sensor):
            vals = [v for _, v in by_sensor[s]]
            for f in spec.agg_functions:
                rows.append((s, f, _agg(f, vals)))
        return rows

    # downsample: buckets of width unit anchored at t_start
    for s in sorted(by_sensor):
        buckets: dict[int, list] = {}
        for t, v in by_sensor[s]:
            buckets.setdefault((t - spec.t_start) // spec.unit, []).append(v)
        for b in sorted(buckets):
            rows.append((s, spec.t_start + b * spec.unit, _agg(spec.bucket_agg, buckets[b])))
    return rows
