"""Rewrite-rule engine over operators, TVR nodes, and their edges.

Rules are graph patterns over the memo: operator operands that match
expressions, TVR operands, and operator/intra-TVR/inter-TVR edges.  A
firing queue orders matches by a boosted score; every (rule, binding)
pair fires at most once.

Three exploration speed-ups are built in: delta-producing structures are
explored on one seed interval and copied along the timeline (translation
symmetry), snapshot-difference rules are deferred and skipped once a
generated delta exists (pruning non-promising alternatives), and merges
are restricted to a snapshot with its immediately following delta
(guided exploration, left-deep merge order).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from . import ops
from .algebra import (
    Col,
    InnerJoin,
    LeftAntiJoin,
    LeftOuterJoin,
    NullOf,
    Project,
    output_schema,
)
from .bags import MergeKind, Schema
from .errors import ContractError
from .memo import (
    DeltaSlot,
    Event,
    InterKind,
    Memo,
    MULTIPLICITY,
    Operator,
    SnapshotSlot,
)
from .session import Session

LOGICAL_UNARY = (ops.FILTER, ops.PROJECT, ops.AGG_STATE, ops.AGG_FINAL)
LOGICAL_BINARY_JOINS = (ops.INNER_JOIN, ops.LEFT_OUTER_JOIN, ops.SEMI_JOIN, ops.ANTI_JOIN)
PROPAGATES = LOGICAL_UNARY + LOGICAL_BINARY_JOINS + (ops.UNION,)


# ---------------------------------------------------------------------------
# Rule-pattern language
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpOperand:
    """Binds a group; with ``kinds`` it also binds a concrete expression."""

    name: str
    kinds: tuple[str, ...] | None = None


@dataclass(frozen=True)
class TvrOperand:
    name: str
    perspective: str | None = None  # "multiplicity" | "attribute"


@dataclass(frozen=True)
class OperatorEdge:
    parent: str
    index: int
    child: str


@dataclass(frozen=True)
class IntraEdge:
    tvr: str
    slot: tuple  # ("snap", tvar) or ("delta", tvar, tvar2)
    group: str


@dataclass(frozen=True)
class InterEdge:
    parent: str
    kind: InterKind
    child: str


@dataclass(frozen=True)
class RulePattern:
    root: str
    op_operands: tuple[OpOperand, ...]
    tvr_operands: tuple[TvrOperand, ...] = ()
    op_edges: tuple[OperatorEdge, ...] = ()
    intra_edges: tuple[IntraEdge, ...] = ()
    inter_edges: tuple[InterEdge, ...] = ()

    def __post_init__(self):
        names = {o.name for o in self.op_operands} | {t.name for t in self.tvr_operands}
        reachable = {self.root}
        frontier = True
        while frontier:
            frontier = False
            for e in self.op_edges:
                for a, b in ((e.parent, e.child), (e.child, e.parent)):
                    if a in reachable and b not in reachable:
                        reachable.add(b)
                        frontier = True
            for e in self.intra_edges:
                for a, b in ((e.tvr, e.group), (e.group, e.tvr)):
                    if a in reachable and b not in reachable:
                        reachable.add(b)
                        frontier = True
            for e in self.inter_edges:
                for a, b in ((e.parent, e.child), (e.child, e.parent)):
                    if a in reachable and b not in reachable:
                        reachable.add(b)
                        frontier = True
        if reachable != names:
            raise ContractError(
                f"pattern is not connected from {self.root!r}: {sorted(names - reachable)}"
            )


class Binding(dict):
    """operand name -> bound id; time variables -> int."""


def _slot_matches(template: tuple, slot, binding: Binding) -> Binding | None:
    if template[0] == "snap":
        if not isinstance(slot, SnapshotSlot):
            return None
        pairs = [(template[1], slot.t)]
    else:
        if not isinstance(slot, DeltaSlot):
            return None
        pairs = [(template[1], slot.t), (template[2], slot.t2)]
    out = Binding(binding)
    for var, val in pairs:
        if var in out and out[var] != val:
            return None
        out[var] = val
    return out


class PatternMatcher:
    """Completes partial bindings against the memo by edge propagation."""

    def __init__(self, engine: "RuleEngine", pattern: RulePattern):
        self.engine = engine
        self.pattern = pattern
        self.ops = {o.name: o for o in pattern.op_operands}
        self.tvrs = {t.name: t for t in pattern.tvr_operands}

    def _expr_ok(self, operand: OpOperand, gid: int, eid) -> bool:
        if operand.kinds is None:
            return True
        expr = self.engine.expr(gid, eid)
        return expr is not None and expr.op.kind in operand.kinds

    def _tvr_ok(self, operand: TvrOperand, tid: int) -> bool:
        if operand.perspective is None:
            return True
        node = self.engine.memo.tvr(tid)
        return node.perspective.kind.value == operand.perspective

    def solve(self, binding: Binding) -> list[Binding]:
        edges = list(self.pattern.op_edges) + list(self.pattern.intra_edges) + list(
            self.pattern.inter_edges
        )
        return self._solve(edges, binding)

    def _solve(self, edges: list, binding: Binding) -> list[Binding]:
        memo = self.engine.memo
        if not edges:
            if all(name in binding for name in self.ops) and all(
                name in binding for name in self.tvrs
            ):
                return [binding]
            return []
        # pick the first edge with a bound endpoint
        for i, e in enumerate(edges):
            rest = edges[:i] + edges[i + 1 :]
            if isinstance(e, OperatorEdge):
                if e.parent in binding:
                    gid, eid = binding[e.parent]
                    expr = self.engine.expr(gid, eid)
                    if expr is None or e.index >= len(expr.children):
                        return []
                    child = memo.find(expr.children[e.index])
                    return self._bind_group(e.child, child, rest, binding)
                if e.child in binding:
                    out = []
                    child_gid = self._gid(binding[e.child])
                    for pgid, peid in self.engine.parents_of(child_gid):
                        expr = self.engine.expr(pgid, peid)
                        if expr is None or e.index >= len(expr.children):
                            continue
                        if memo.find(expr.children[e.index]) != child_gid:
                            continue
                        if not self._expr_ok(self.ops[e.parent], pgid, peid):
                            continue
                        nb = Binding(binding)
                        nb[e.parent] = (pgid, peid)
                        out.extend(self._solve(rest, nb))
                    return out
            elif isinstance(e, IntraEdge):
                if e.tvr in binding:
                    node = memo.tvr(binding[e.tvr])
                    out = []
                    slots = [(SnapshotSlot(t), g) for t, g in node.snapshots.items()]
                    slots += [(DeltaSlot(t, t2), g) for (t, t2), g in node.deltas.items()]
                    for slot, gid in slots:
                        nb = _slot_matches(e.slot, slot, binding)
                        if nb is None:
                            continue
                        out.extend(self._bind_group(e.group, memo.find(gid), rest, nb))
                    return out
                if e.group in binding:
                    gid = self._gid(binding[e.group])
                    out = []
                    for tid, slot in sorted(
                        memo.group(gid).slots, key=lambda x: (x[0], repr(x[1]))
                    ):
                        tid = memo.find_tvr(tid)
                        if not self._tvr_ok(self.tvrs[e.tvr], tid):
                            continue
                        nb = _slot_matches(e.slot, slot, binding)
                        if nb is None:
                            continue
                        if e.tvr in nb and nb[e.tvr] != tid:
                            continue
                        nb[e.tvr] = tid
                        out.extend(self._solve(rest, nb))
                    return out
            else:  # InterEdge
                if e.parent in binding:
                    node = memo.tvr(binding[e.parent])
                    child = node.inter.get(e.kind)
                    if child is None:
                        return []
                    child = memo.find_tvr(child)
                    if not self._tvr_ok(self.tvrs[e.child], child):
                        return []
                    nb = Binding(binding)
                    if e.child in nb and nb[e.child] != child:
                        return []
                    nb[e.child] = child
                    return self._solve(rest, nb)
                if e.child in binding:
                    child = binding[e.child]
                    out = []
                    for node in memo.live_tvrs():
                        got = node.inter.get(e.kind)
                        if got is None or memo.find_tvr(got) != child:
                            continue
                        if not self._tvr_ok(self.tvrs[e.parent], node.tid):
                            continue
                        nb = Binding(binding)
                        if e.parent in nb and nb[e.parent] != node.tid:
                            continue
                        nb[e.parent] = node.tid
                        out.extend(self._solve(rest, nb))
                    return out
        return []

    def _gid(self, bound) -> int:
        gid = bound[0] if isinstance(bound, tuple) else bound
        return self.engine.memo.find(gid)

    def _bind_group(self, name: str, gid: int, rest: list, binding: Binding) -> list[Binding]:
        operand = self.ops[name]
        out = []
        if operand.kinds is None:
            nb = Binding(binding)
            if name in nb and self._gid(nb[name]) != gid:
                return []
            nb[name] = gid
            return self._solve(rest, nb)
        for expr in self.engine.memo.group(gid).exprs:
            if expr.op.kind not in operand.kinds:
                continue
            nb = Binding(binding)
            if name in nb and nb[name] != (gid, expr.eid):
                continue
            nb[name] = (gid, expr.eid)
            out.extend(self._solve(rest, nb))
        return out

    def anchors(self, event: Event) -> list[Binding]:
        """Partial bindings that pin the changed element to some operand."""
        memo = self.engine.memo
        seeds: list[Binding] = []
        if event.kind == "expr":
            gid = memo.find(event.a)
            if gid not in [g.gid for g in memo.groups()]:
                return []
            for name, operand in self.ops.items():
                b = Binding()
                if operand.kinds is not None:
                    if self._expr_ok(operand, gid, event.b):
                        b[name] = (gid, event.b)
                        seeds.append(b)
                else:
                    b[name] = gid
                    seeds.append(b)
        elif event.kind == "intra":
            tid = memo.find_tvr(event.a)
            gid = memo.find(event.c)
            for e in self.pattern.intra_edges:
                nb = _slot_matches(e.slot, event.b, Binding())
                if nb is None or not self._tvr_ok(self.tvrs[e.tvr], tid):
                    continue
                nb[e.tvr] = tid
                operand = self.ops[e.group]
                if operand.kinds is None:
                    nb2 = Binding(nb)
                    nb2[e.group] = gid
                    seeds.append(nb2)
                else:
                    for expr in memo.group(gid).exprs:
                        if expr.op.kind in operand.kinds:
                            nb2 = Binding(nb)
                            nb2[e.group] = (gid, expr.eid)
                            seeds.append(nb2)
        elif event.kind == "inter":
            for e in self.pattern.inter_edges:
                if e.kind != event.b:
                    continue
                nb = Binding()
                nb[e.parent] = memo.find_tvr(event.a)
                nb[e.child] = memo.find_tvr(event.c)
                seeds.append(nb)
        return seeds

    def match_event(self, event: Event) -> list[Binding]:
        out = []
        for seed in self.anchors(event):
            out.extend(self.solve(seed))
        return out
