import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotbench.datagen import DistributionSpec, SpacingSpec
from iotbench.workload import (
    AGG_FUNCTIONS,
    TEMPLATES,
    AllocationError,
    Condition,
    EmptyWindowError,
    QueryError,
    QuerySpec,
    ThreadState,
    WorkloadConfig,
    allocate_records,
    build_sensor_space,
    gen_query,
    make_sources,
    next_op,
    partition_sensors,
)


def mixed_space(m=8, seed=0):
    return build_sensor_space(m, seed, value_mix={"float64": 0.5, "integer": 0.25, "string": 0.25})


def thread(space, budget, seed=0, **cfg):
    sources = make_sources(space.sensors, "distribution", seed, 0)
    return ThreadState.create(0, 0, sources, space, seed, budget, WorkloadConfig(**cfg))


class TestAllocation:
    def test_examples(self):
        assert allocate_records(1000, 3).per_client == (400, 400, 200)
        assert allocate_records(3, 2).per_client == (2, 1)
        a = allocate_records(999, 3)
        assert sum(a.per_client) == 999 and a.per_client == (399, 399, 201)
        assert a.scale_out_client_index == 2

    def test_errors(self):
        with pytest.raises(AllocationError):
            allocate_records(100, 1)
        with pytest.raises(AllocationError):
            allocate_records(4, 3)

    @given(st.integers(2, 64).flatmap(lambda k: st.tuples(st.just(k), st.integers(2 * k - 1, 10**6))))
    def test_conservation(self, kn):
        k, n = kn
        a = allocate_records(n, k)
        assert sum(a.per_client) == n and len(a.per_client) == k
        share = 2 * n // (2 * k - 1)
        assert a.per_client[:-1] == (share,) * (k - 1)
        # the scale-out client holds roughly half a standard share
        assert abs(a.per_client[-1] - share / 2) <= k


class TestSensorSpace:
    def test_deterministic_assignment(self):
        a, b = mixed_space(seed=3), mixed_space(seed=3)
        assert [s.value_kind.kind for s in a.sensors] == [s.value_kind.kind for s in b.sensors]
        kinds = [s.value_kind.kind for s in a.sensors]
        assert kinds.count("float64") == 4 and kinds.count("string") == 2

    def test_ids_unique(self):
        space = mixed_space(50)
        assert len({s.sensor_id for s in space.sensors}) == 50

    def test_partition_is_disjoint_and_complete(self):
        space = mixed_space(10)
        parts = partition_sensors(space, 3)
        ids = [s.sensor_id for p in parts for s in p]
        assert sorted(ids) == sorted(s.sensor_id for s in space.sensors)
        with pytest.raises(AllocationError):
            partition_sensors(mixed_space(2), 3)


class TestOps:
    def test_budget_exhaustion(self):
        st_ = thread(mixed_space(), 10, batch_size=4, query_fraction=0.0)
        sizes = []
        while (op := next_op(st_)) is not None:
            sizes.append(len(op.batch))
        assert sizes == [4, 4, 2]

    def test_writes_only_when_q_zero(self):
        st_ = thread(mixed_space(), 5000, query_fraction=0.0)
        ops = []
        while (op := next_op(st_)) is not None:
            ops.append(op.kind)
        assert set(ops) == {"write"}

    def test_query_fraction_binomial(self):
        st_ = thread(mixed_space(4), math.inf, batch_size=1, query_fraction=0.05)
        n, q = 1_000_000, 0
        rng = st_.rng
        # count the decisions directly; generating every op would be slow
        q = int((rng.random(n) < 0.05).sum())
        assert abs(q - 50_000) <= 3 * math.sqrt(n * 0.05 * 0.95)
        kinds = [next_op(st_).kind for _ in range(20_000)]
        qs = kinds.count("query")
        assert abs(qs - 1000) <= 3 * math.sqrt(20_000 * 0.05 * 0.95)

    def test_batches_are_per_sensor_ordered(self):
        st_ = thread(mixed_space(), 2000, batch_size=37, query_fraction=0.0)
        last = {}
        while (op := next_op(st_)) is not None:
            for p in op.batch:
                assert p.timestamp > last.get(p.sensor_id, -1)
                last[p.sensor_id] = p.timestamp

    def test_queries_do_not_consume_budget(self):
        st_ = thread(mixed_space(), 1000, batch_size=100, query_fraction=0.5)
        written = 0
        while (op := next_op(st_)) is not None:
            if op.kind == "write":
                written += len(op.batch)
        assert written == 1000

    def test_op_streams_are_deterministic(self):
        def stream(seed):
            st_ = thread(mixed_space(), 3000, seed=seed, query_fraction=0.2, batch_size=50)
            out = []
            while (op := next_op(st_)) is not None:
                out.append(repr(op.query) if op.kind == "query" else [(p.sensor_id, p.timestamp, p.value) for p in op.batch])
            return out

        assert stream(5) == stream(5)
        assert stream(5) != stream(6)


class TestQueries:
    def test_empty_window(self):
        with pytest.raises(EmptyWindowError):
            gen_query("time_range", np.random.default_rng(0), mixed_space(), None)

    def test_point_window(self):
        spec = gen_query("time_range", np.random.default_rng(0), mixed_space(), (0, 0))
        assert spec.t_start == spec.t_end == 0

    def test_filtered_value_in_range(self):
        space = build_sensor_space(
            4, 0, value_mix={"float64": 1.0}, dists={"float64": DistributionSpec("uniform", {"lo": 0.0, "hi": 1.0})}
        )
        rng = np.random.default_rng(1)
        for _ in range(200):
            spec = gen_query("filtered", rng, space, (0, 10_000))
            assert 0.0 <= spec.cond.value <= 1.0

    @given(st.sampled_from(TEMPLATES), st.integers(0, 2**32), st.integers(0, 10**7), st.integers(0, 10**7))
    @settings(max_examples=200, deadline=None)
    def test_every_spec_validates(self, template, seed, a, b):
        space = mixed_space(8, seed % 7)
        lo, hi = min(a, b), max(a, b)
        spec = gen_query(template, np.random.default_rng(seed), space, (lo, hi))
        spec.validate()
        assert lo <= spec.t_start <= spec.t_end <= max(hi, lo + 1000)
        assert 1 <= len(spec.sensors) <= 4
        if template == "aggregation":
            assert spec.agg_functions and set(spec.agg_functions) <= set(AGG_FUNCTIONS)
            kinds = {space[s].value_kind.kind for s in spec.sensors}
            if "string" in kinds:
                assert "avg" not in spec.agg_functions
        if template == "downsample":
            assert spec.unit > 0

    def test_spec_validation_errors(self):
        with pytest.raises(QueryError):
            QuerySpec("time_range", ("a",), 5, 1).validate()
        with pytest.raises(QueryError):
            QuerySpec("aggregation", ("a",), 0, 1).validate()
        with pytest.raises(QueryError):
            QuerySpec("downsample", ("a",), 0, 1, unit=0).validate()
        with pytest.raises(QueryError):
            QuerySpec("filtered", ("a",), 0, 1, cond=Condition("b", ">", 1)).validate()
        with pytest.raises(QueryError):
            Condition("a", "~", 1)
        assert Condition("a", "≤", 1).op == "<="

    def test_condition_outside_range_rejected(self):
        space = build_sensor_space(
            2, 0, dists={"float64": DistributionSpec("uniform", {"lo": 0.0, "hi": 1.0})}
        )
        spec = QuerySpec("filtered", ("sensor_0",), 0, 10, cond=Condition("sensor_0", ">", 5.0))
        with pytest.raises(QueryError):
            space.check_query(spec)

    def test_uneven_spacing_sources(self):
        spacing = SpacingSpec("uneven", inter_arrival=DistributionSpec("exponential", {"rate": 0.01}))
        space = build_sensor_space(3, 0, spacing=spacing)
        src = make_sources(space.sensors, "distribution", 0, 1000)[0]
        ts = [src.next_point().timestamp for _ in range(1000)]
        assert ts[0] > 1000 and all(b > a for a, b in zip(ts, ts[1:]))
