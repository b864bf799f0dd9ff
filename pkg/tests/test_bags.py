"""Bag relations, the two delta perspectives, and the merge/inverse family."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incplan.bags import (
    AVG,
    AggSpec,
    BagRelation,
    Combiner,
    COUNT,
    FLOAT,
    INT,
    MAX,
    MergeKind,
    MergeOperator,
    MIN,
    ROWS_COL,
    SUM,
    TEXT,
    additive_union,
    agg_final,
    attribute_inverse,
    attribute_merge,
    bag_difference,
    bags_equal,
    normalize_state,
    schema,
)
from incplan.errors import ContractError, NotInvertibleError, SchemaError

from .example_data import (
    RETURNS_SCHEMA,
    SALES_SCHEMA,
    SALES_T0,
    SALES_T1,
    STATUS_AT_T0,
    STATUS_AT_T1,
    STATUS_CHANGES,
)

XY = schema([("x", TEXT, False)])


def bag(entries: dict) -> BagRelation:
    return BagRelation(XY, {(k,): v for k, v in entries.items()})


class TestAdditiveUnion:
    def test_annihilation(self):
        assert additive_union(bag({"x": 1}), bag({"x": -1})).is_empty()

    def test_multiplicity_addition(self):
        assert additive_union(bag({"x": 2}), bag({"x": 3, "y": 1})) == bag({"x": 5, "y": 1})

    def test_status_snapshot_plus_changes(self):
        status_schema = schema(
            [("o_id", TEXT, False), ("cat", TEXT, False), ("price", INT, False), ("cost", INT, True)]
        )
        at_t0 = BagRelation.from_rows(status_schema, STATUS_AT_T0)
        changes = BagRelation(status_schema, STATUS_CHANGES)
        assert additive_union(at_t0, changes) == BagRelation.from_rows(status_schema, STATUS_AT_T1)

    def test_schema_mismatch(self):
        with pytest.raises(SchemaError):
            additive_union(bag({"x": 1}), BagRelation.from_rows(SALES_SCHEMA, SALES_T0))


class TestBagDifference:
    def test_self_difference_is_empty(self):
        a = BagRelation.from_rows(SALES_SCHEMA, SALES_T0)
        assert bag_difference(a, a).is_empty()

    def test_sales_snapshot_difference(self):
        t0 = BagRelation.from_rows(SALES_SCHEMA, SALES_T0)
        t1 = BagRelation.from_rows(SALES_SCHEMA, SALES_T0 + SALES_T1)
        diff = bag_difference(t1, t0)
        assert diff == BagRelation.from_rows(SALES_SCHEMA, SALES_T1)

    def test_difference_from_empty(self):
        assert bag_difference(bag({}), bag({"x": 1})) == bag({"x": -1})


entry_values = st.text(alphabet="abcde", min_size=1, max_size=2)
bag_dicts = st.dictionaries(entry_values, st.integers(-4, 4).filter(bool), max_size=6)


@given(bag_dicts, bag_dicts)
@settings(max_examples=200, deadline=None)
def test_union_commutes_and_round_trips(da, db):
    a, b = bag(da), bag(db)
    assert additive_union(a, b) == additive_union(b, a)
    assert additive_union(b, bag_difference(a, b)) == a


@given(bag_dicts, bag_dicts, bag_dicts)
@settings(max_examples=200, deadline=None)
def test_union_associative_with_identity(da, db, dc):
    a, b, c = bag(da), bag(db), bag(dc)
    assert additive_union(additive_union(a, b), c) == additive_union(a, additive_union(b, c))
    assert additive_union(a, bag({})) == a


GAMMA_SCHEMA = schema([("cat", TEXT, False), ("gross", INT, True), (ROWS_COL, INT, False)], key=["cat"])
SUM_MERGE = MergeOperator(
    MergeKind.ATTRIBUTE_MERGE, ("cat",), {"gross": Combiner.SUM, ROWS_COL: Combiner.COUNT}
)


def gamma_state(entries):
    return BagRelation.from_rows(GAMMA_SCHEMA, entries)


class TestAttributeMerge:
    def test_paper_sum_merge(self):
        # 280 + (-15) = 265 and 150 + 350 = 500
        at_t0 = gamma_state([("c1", 280, 3), ("c2", 150, 1)])
        delta = gamma_state([("c1", -15, 1), ("c2", 350, 2)])
        merged = attribute_merge(at_t0, delta, SUM_MERGE)
        assert merged == gamma_state([("c1", 265, 4), ("c2", 500, 3)])

    def test_identity(self):
        a = gamma_state([("c1", 280, 3)])
        assert attribute_merge(a, BagRelation(GAMMA_SCHEMA), SUM_MERGE) == a

    def test_avg_pair_merge(self):
        s = schema([("g", TEXT, False), ("a", "state", True), (ROWS_COL, INT, False)], key=["g"])
        m = MergeOperator(
            MergeKind.ATTRIBUTE_MERGE, ("g",), {"a": Combiner.AVG_PAIR, ROWS_COL: Combiner.COUNT}
        )
        a = BagRelation.from_rows(s, [("g", (10, 2), 2)])
        b = BagRelation.from_rows(s, [("g", (2, 1), 1)])
        assert attribute_merge(a, b, m) == BagRelation.from_rows(s, [("g", (12, 3), 3)])

    def test_missing_key(self):
        m = MergeOperator(MergeKind.ATTRIBUTE_MERGE, (), {"gross": Combiner.SUM})
        with pytest.raises(KeyError):
            attribute_merge(gamma_state([]), gamma_state([]), m)


class TestAttributeInverse:
    def test_paper_delta_recovered(self):
        at_t1 = gamma_state([("c1", 265, 4), ("c2", 500, 3)])
        at_t0 = gamma_state([("c1", 280, 3), ("c2", 150, 1)])
        delta = attribute_inverse(at_t1, at_t0, SUM_MERGE)
        assert delta == gamma_state([("c1", -15, 1), ("c2", 350, 2)])
        assert attribute_merge(at_t0, delta, SUM_MERGE) == at_t1

    def test_self_inverse_keeps_zero_states(self):
        a = gamma_state([("c1", 280, 3)])
        assert attribute_inverse(a, a, SUM_MERGE) == gamma_state([("c1", 0, 0)])

    def test_max_column_not_invertible(self):
        m = MergeOperator(
            MergeKind.ATTRIBUTE_MERGE, ("cat",), {"gross": Combiner.MAX, ROWS_COL: Combiner.COUNT}
        )
        with pytest.raises(NotInvertibleError):
            attribute_inverse(gamma_state([("c1", 3, 1)]), gamma_state([("c1", 2, 1)]), m)


@given(
    st.dictionaries(entry_values, st.tuples(st.integers(-50, 50), st.integers(0, 9)), max_size=5),
    st.dictionaries(entry_values, st.tuples(st.integers(-50, 50), st.integers(0, 9)), max_size=5),
)
@settings(max_examples=200, deadline=None)
def test_attribute_merge_inverse_round_trip(da, db):
    a = gamma_state([(k, v, n) for k, (v, n) in da.items()])
    b = gamma_state([(k, v, n) for k, (v, n) in db.items()])
    merged = attribute_merge(b, attribute_inverse(a, b, SUM_MERGE), SUM_MERGE)
    # zero-count groups persist through merges; they disappear only at Final
    assert normalize_state(merged, SUM_MERGE) == normalize_state(a, SUM_MERGE)


SPEC = AggSpec(("cat",), (("gross", SUM, "rev"),))
REV_SCHEMA = schema([("cat", TEXT, False), ("rev", INT, True)])


class TestAggSpec:
    def test_final_drops_zero_count_groups(self):
        state = BagRelation.from_rows(
            SPEC.state_schema(REV_SCHEMA), [("c1", 265, 4), ("c2", 500, 3), ("g", 0, 0)]
        )
        out = agg_final(state, SPEC)
        assert out == BagRelation.from_rows(SPEC.output_schema(REV_SCHEMA), [("c1", 265), ("c2", 500)])

    def test_avg_finalizes_as_division(self):
        spec = AggSpec((), (("a", AVG, "rev"),))
        in_schema = schema([("rev", INT, True)])
        state = spec.iterate(BagRelation.from_rows(in_schema, [(3,), (4,), (5,)]))
        out = agg_final(state, spec)
        assert list(out.rows) == [(4.0,)]

    def test_final_requires_count_column(self):
        with pytest.raises(ContractError):
            agg_final(BagRelation.from_rows(REV_SCHEMA, [("c1", 1)]), SPEC)

    def test_iterate_handles_retractions(self):
        spec = AggSpec(("cat",), (("n", COUNT, "rev"), ("s", SUM, "rev")))
        delta = BagRelation(REV_SCHEMA, {("c1", 7): -2, ("c1", 3): 1})
        state = spec.iterate(delta)
        assert list(state.rows) == [("c1", -1, -11, -1)]

    def test_min_max_reject_retractions(self):
        spec = AggSpec((), (("m", MIN, "rev"),))
        with pytest.raises(NotInvertibleError):
            spec.iterate(BagRelation(REV_SCHEMA, {("c1", 7): -1}))
        assert not AggSpec((), (("m", MAX, "rev"),)).invertible
        assert AggSpec((), (("m", AVG, "rev"),)).invertible


@given(
    st.lists(
        st.tuples(st.sampled_from(["c1", "c2", "c3"]), st.integers(-30, 30)),
        max_size=12,
    ),
    st.integers(0, 12),
    st.sampled_from([SUM, COUNT, AVG, MIN, MAX]),
)
@settings(max_examples=300, deadline=None)
def test_split_iterate_merge_matches_whole(rows, cut, fn):
    """Iterate over the whole input == merge of Iterates over any split."""
    spec = AggSpec(("cat",), (("v", fn, "rev"),))
    cut = min(cut, len(rows))
    whole = BagRelation.from_rows(REV_SCHEMA, rows)
    part1 = BagRelation.from_rows(REV_SCHEMA, rows[:cut])
    part2 = BagRelation.from_rows(REV_SCHEMA, rows[cut:])
    merged = spec.merge(spec.iterate(part1), spec.iterate(part2))
    assert bags_equal(agg_final(merged, spec), agg_final(spec.iterate(whole), spec))


def test_random_keyed_state_merge_inverse():
    rng = random.Random(7)
    for _ in range(100):
        a = gamma_state(
            [(f"k{i}", rng.randint(-99, 99), rng.randint(0, 5)) for i in range(rng.randint(0, 6))]
        )
        b = gamma_state(
            [(f"k{i}", rng.randint(-99, 99), rng.randint(0, 5)) for i in rng.sample(range(8), rng.randint(0, 6))]
        )
        merged = attribute_merge(b, attribute_inverse(a, b, SUM_MERGE), SUM_MERGE)
        assert normalize_state(merged, SUM_MERGE) == normalize_state(a, SUM_MERGE)


def test_snapshot_flag_and_counts():
    d = BagRelation(XY, {("a",): 2, ("b",): -1})
    assert not d.is_snapshot()
    assert d.tuple_count() == 3
    s = BagRelation(XY, {("a",): 2})
    assert s.is_snapshot()


def test_full_state_merges_but_never_inverts():
    s = schema([("g", TEXT, False), ("vals", "state", True)], key=["g"])
    m = MergeOperator(MergeKind.ATTRIBUTE_MERGE, ("g",), {"vals": Combiner.FULL_STATE})
    a = BagRelation.from_rows(s, [("g", (1, 5))])
    b = BagRelation.from_rows(s, [("g", (2,))])
    assert attribute_merge(a, b, m) == BagRelation.from_rows(s, [("g", (1, 2, 5))])
    assert not m.invertible
    with pytest.raises(NotInvertibleError):
        attribute_inverse(a, b, m)
