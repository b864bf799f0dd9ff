"""Memo dedup, TVR slots, and merge cascades."""

from __future__ import annotations

import random

import pytest

from incplan.bags import INT, TEXT, schema
from incplan.errors import ContractError
from incplan.memo import (
    DeltaSlot,
    InterKind,
    Memo,
    MULTIPLICITY,
    Operator,
    SnapshotSlot,
)

S = schema([("a", INT, False)])
T = schema([("b", TEXT, False)])


def scan(table, t):
    return Operator("table_scan", (table, t))


def test_register_expr_dedups():
    m = Memo()
    g0, fresh0 = m.register_expr(scan("sales", 1), (), S)
    g1, fresh1 = m.register_expr(scan("returns", 1), (), T)
    j, fresh2 = m.register_expr(Operator("left_outer_join", (("a",), ("b",))), (g0, g1), S)
    assert (fresh0, fresh1, fresh2) == (True, True, True)
    assert len(m.groups()) == 3
    j2, fresh3 = m.register_expr(Operator("left_outer_join", (("a",), ("b",))), (g0, g1), S)
    assert j2 == j and not fresh3


def test_dangling_child_rejected():
    m = Memo()
    with pytest.raises(ContractError):
        m.register_expr(Operator("filter", ()), (99,), S)


def test_tvr_link_and_relink():
    m = Memo()
    g, _ = m.register_expr(scan("sales", 0), (), S)
    v = m.new_tvr(MULTIPLICITY)
    assert m.register_tvr_link(v, SnapshotSlot(0), g)
    assert not m.register_tvr_link(v, SnapshotSlot(0), g)
    assert m.snapshot_group(v, 0) == g


def test_conflicting_slot_merges_groups():
    m = Memo()
    g1, _ = m.register_expr(scan("sales", 0), (), S)
    g2, _ = m.register_expr(Operator("filter", ("p",)), (g1,), S)
    v = m.new_tvr(MULTIPLICITY)
    m.register_tvr_link(v, SnapshotSlot(1), g1)
    m.register_tvr_link(v, SnapshotSlot(1), g2)
    assert m.find(g1) == m.find(g2)
    assert len(m.group(g1).exprs) == 2
    m.check_invariants()


def test_tvr_dedup_by_shared_snapshot():
    m = Memo()
    g, _ = m.register_expr(scan("sales", 0), (), S)
    v1 = m.new_tvr(MULTIPLICITY)
    v2 = m.new_tvr(MULTIPLICITY)
    m.register_tvr_link(v1, SnapshotSlot(0), g)
    m.register_tvr_link(v2, SnapshotSlot(0), g)
    assert m.find_tvr(v1) == m.find_tvr(v2)


def test_inter_edges_resolve_transitively():
    m = Memo()
    g_full, _ = m.register_expr(scan("q", 1), (), S)
    g_pos, _ = m.register_expr(Operator("inner_join", ()), (g_full, g_full), S)
    parent = m.new_tvr(MULTIPLICITY)
    pos = m.new_tvr(MULTIPLICITY)
    m.register_tvr_link(parent, SnapshotSlot(1), g_full)
    m.register_tvr_link(pos, SnapshotSlot(1), g_pos)
    assert m.register_inter_tvr(parent, InterKind.POSITIVE, pos)
    assert not m.register_inter_tvr(parent, InterKind.POSITIVE, pos)
    resolved = m.resolve_inter(parent, [InterKind.POSITIVE])
    assert resolved == m.find_tvr(pos)
    assert m.snapshot_group(resolved, 1) == m.find(g_pos)


def test_merge_preserves_expr_dedup():
    m = Memo()
    a, _ = m.register_expr(scan("x", 0), (), S)
    b, _ = m.register_expr(scan("y", 0), (), S)
    fa, _ = m.register_expr(Operator("filter", ("p",)), (a,), S)
    fb, _ = m.register_expr(Operator("filter", ("p",)), (b,), S)
    m.merge_groups(a, b)
    # the two filters now alias and their groups must have collapsed
    assert m.find(fa) == m.find(fb)
    assert len([e for e in m.group(fa).exprs]) == 1
    m.check_invariants()


def test_randomized_merge_storm_terminates_and_stays_sound():
    rng = random.Random(5)
    for trial in range(30):
        m = Memo()
        gids = []
        for i in range(8):
            g, _ = m.register_expr(scan(f"t{i}", 0), (), S)
            gids.append(g)
        for _ in range(12):
            l, r = rng.sample(gids, 2)
            g, _ = m.register_expr(Operator("union", ()), (l, r), S)
            gids.append(g)
        tvrs = [m.new_tvr(MULTIPLICITY) for _ in range(4)]
        for _ in range(10):
            v = rng.choice(tvrs)
            g = rng.choice(gids)
            slot = SnapshotSlot(rng.randrange(2)) if rng.random() < 0.6 else DeltaSlot(0, 1)
            m.register_tvr_link(v, slot, g)
        for _ in range(6):
            a, b = rng.sample(gids, 2)
            m.merge_groups(a, b)
        m.check_invariants()
        for v in tvrs:
            node = m.tvr(v)
            for gid in list(node.snapshots.values()) + list(node.deltas.values()):
                assert m.find(gid) in [g.gid for g in m.groups()]


def test_dump_is_deterministic():
    def build():
        m = Memo()
        g0, _ = m.register_expr(scan("sales", 1), (), S)
        g1, _ = m.register_expr(scan("returns", 1), (), T)
        m.register_expr(Operator("left_outer_join", ()), (g0, g1), S)
        v = m.new_tvr(MULTIPLICITY)
        m.register_tvr_link(v, SnapshotSlot(1), g0)
        return m.dump()

    assert build() == build()
    assert "TVR-0" in build()
