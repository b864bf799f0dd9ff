"""Snapshot/delta views of arrival scripts and the merge law."""

from __future__ import annotations

import random

import pytest

from incplan.bags import BagRelation, INT, additive_union, schema
from incplan.errors import ContractError, RangeError
from incplan.tvr import ArrivalSet, OutputRequirement, Timeline, TvrInput, delta_between, snapshot_at

from .example_data import (
    RETURNS_SCHEMA,
    SALES_SCHEMA,
    SALES_T0,
    SALES_T1,
    arrivals,
)


def test_sales_snapshots_match_arrival_tags():
    arr = arrivals()
    assert sorted(arr.snapshot("sales", 0).rows) == sorted(SALES_T0)
    assert sorted(arr.snapshot("sales", 1).rows) == sorted(SALES_T0 + SALES_T1)
    assert sorted(arr.snapshot("returns", 1).rows) == [("o1", 10), ("o2", 20), ("o6", 15)]


def test_snapshot_with_no_arrivals_is_empty():
    tl = Timeline(2)
    inp = TvrInput("t", SALES_SCHEMA)
    assert snapshot_at(inp, 0, tl).is_empty()


def test_delta_between_matches_figure():
    arr = arrivals()
    d = arr.delta("sales", 0, 1)
    assert d == BagRelation.from_rows(SALES_SCHEMA, SALES_T1)


def test_delta_requires_increasing_points():
    arr = arrivals()
    with pytest.raises(RangeError):
        arr.delta("sales", 1, 1)
    with pytest.raises(RangeError):
        arr.snapshot("sales", 5)


def random_input(rng, k):
    s = schema([("v", INT, False)])
    inp = TvrInput("x", s)
    live = []
    for t in range(k):
        d = BagRelation(s)
        for _ in range(rng.randrange(4)):
            row = (rng.randrange(6),)
            d.add(row, 1)
            live.append(row)
        if live and rng.random() < 0.5:
            victim = live.pop(rng.randrange(len(live)))
            d.add(victim, -1)
        inp.deltas[t] = d
    return inp


def test_merge_law_and_delta_composition():
    rng = random.Random(42)
    tl = Timeline(4)
    for _ in range(200):
        inp = random_input(rng, tl.k)
        for t in range(tl.k - 1):
            for t2 in range(t + 1, tl.k):
                snap = snapshot_at(inp, t, tl)
                d = delta_between(inp, t, t2, tl)
                assert inp.perspective.merge(snap, d) == snapshot_at(inp, t2, tl)
        # adjacent deltas compose to the delta over the union interval
        d01 = delta_between(inp, 0, 1, tl)
        d12 = delta_between(inp, 1, 2, tl)
        assert additive_union(d01, d12) == delta_between(inp, 0, 2, tl)


def test_over_retraction_rejected():
    s = schema([("v", INT, False)])
    tl = Timeline(2)
    inp = TvrInput("x", s, {0: BagRelation(s, {(1,): 1}), 1: BagRelation(s, {(1,): -2})})
    with pytest.raises(ContractError):
        ArrivalSet(tl, {"x": inp})


def test_output_requirement_needs_an_entry():
    with pytest.raises(ContractError):
        OutputRequirement({})
    req = OutputRequirement({1: object()})
    assert req.points() == [1]
    assert req.at(0) is None
