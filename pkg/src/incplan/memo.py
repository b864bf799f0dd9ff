"""The plan-space memo: equivalence groups plus explicit TVR bookkeeping.

Beyond the usual logical/physical equivalence classes, the memo tracks
which group is which snapshot or delta of which time-varying relation
(intra edges), and how TVRs decompose into parts (inter edges).  Group
identity goes through a union-find so that merges cascade: two groups
claiming the same (tvr, slot) pair collapse into one, as do two TVRs
sharing a snapshot group under the same perspective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .bags import MergeKind, MergeOperator, Schema
from .errors import ContractError


@dataclass(frozen=True)
class Operator:
    """An operator instance: node kind plus canonical (hashable) parameters."""

    kind: str
    params: tuple = ()

    def __repr__(self):
        if not self.params:
            return self.kind
        inner = ",".join(_short(p) for p in self.params)
        return f"{self.kind}[{inner}]"


def _short(p) -> str:
    s = repr(p)
    return s if len(s) <= 40 else s[:37] + "..."


@dataclass(frozen=True)
class SnapshotSlot:
    t: int

    def __repr__(self):
        return f"snap@t{self.t}"


@dataclass(frozen=True)
class DeltaSlot:
    t: int
    t2: int

    def __repr__(self):
        return f"delta@(t{self.t},t{self.t2})"


Slot = SnapshotSlot | DeltaSlot


class InterKind(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    DIRECT = "direct"
    INDIRECT = "indirect"
    UNAFFECTED = "unaffected"


@dataclass
class GroupExpr:
    eid: int
    op: Operator
    children: tuple[int, ...]

    def key(self, find) -> tuple:
        return (self.op, tuple(find(c) for c in self.children))


@dataclass
class Group:
    gid: int
    schema: Schema
    exprs: list[GroupExpr] = field(default_factory=list)
    slots: set[tuple[int, Slot]] = field(default_factory=set)  # (tvr id, slot)


@dataclass
class TvrNode:
    """Handle for one time-varying relation.

    ``query`` is the defining logical expression of the relation's rows;
    for attribute-perspective TVRs ``state_spec`` names the aggregate
    whose keyed running state the snapshots carry.
    """

    tid: int
    perspective: MergeOperator
    query: object = None
    state_spec: object = None
    snapshots: dict[int, int] = field(default_factory=dict)
    deltas: dict[tuple[int, int], int] = field(default_factory=dict)
    inter: dict[InterKind, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Event:
    kind: str  # "expr" | "intra" | "inter"
    a: int
    b: object = None
    c: object = None


class Memo:
    def __init__(self):
        self._groups: dict[int, Group] = {}
        self._parent: dict[int, int] = {}
        self._tvr_parent: dict[int, int] = {}
        self._expr_index: dict[tuple, int] = {}
        self.tvrs: dict[int, TvrNode] = {}
        self.events: list[Event] = []
        self._pending: list[tuple[int, int]] = []
        self._next_gid = 0
        self._next_eid = 0
        self._next_tid = 0

    # -- identity ----------------------------------------------------------

    def find(self, gid: int) -> int:
        root = gid
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[gid] != root:
            self._parent[gid], gid = root, self._parent[gid]
        return root

    def find_tvr(self, tid: int) -> int:
        root = tid
        while self._tvr_parent[root] != root:
            root = self._tvr_parent[root]
        while self._tvr_parent[tid] != root:
            self._tvr_parent[tid], tid = root, self._tvr_parent[tid]
        return root

    def group(self, gid: int) -> Group:
        return self._groups[self.find(gid)]

    def tvr(self, tid: int) -> TvrNode:
        return self.tvrs[self.find_tvr(tid)]

    def groups(self) -> list[Group]:
        return [g for gid, g in sorted(self._groups.items()) if self.find(gid) == gid]

    def live_tvrs(self) -> list[TvrNode]:
        return [t for tid, t in sorted(self.tvrs.items()) if self.find_tvr(tid) == tid]

    # -- registration ------------------------------------------------------

    def register_expr(
        self,
        op: Operator,
        children: Iterable[int],
        schema: Schema | None = None,
        group: int | None = None,
    ) -> tuple[int, bool]:
        """Add an operator instance; dedup against every existing expr.

        With ``group`` set the expr joins that group (merging if the expr
        already lives elsewhere); otherwise a fresh group is created unless
        the expr is already known.
        """
        for c in children:
            if c not in self._parent:
                raise ContractError(f"dangling child group {c}")
        children = tuple(self.find(c) for c in children)
        key = (op, children)
        existing = self._expr_index.get(key)
        if existing is not None:
            existing = self.find(existing)
            if group is not None and self.find(group) != existing:
                self.merge_groups(existing, group)
                return self.find(existing), False
            return existing, False
        if group is None:
            if schema is None:
                raise ContractError("new group needs a schema")
            gid = self._new_group(schema)
        else:
            gid = self.find(group)
        expr = GroupExpr(self._next_eid, op, children)
        self._next_eid += 1
        self._groups[gid].exprs.append(expr)
        self._expr_index[key] = gid
        self.events.append(Event("expr", gid, expr.eid))
        return gid, True

    def _new_group(self, schema: Schema) -> int:
        gid = self._next_gid
        self._next_gid += 1
        self._groups[gid] = Group(gid, schema)
        self._parent[gid] = gid
        return gid

    def new_tvr(self, perspective: MergeOperator, query=None, state_spec=None) -> int:
        tid = self._next_tid
        self._next_tid += 1
        self.tvrs[tid] = TvrNode(tid, perspective, query, state_spec)
        self._tvr_parent[tid] = tid
        return tid

    def register_tvr_link(self, tid: int, slot: Slot, gid: int) -> bool:
        """Bind a group as a snapshot or delta of a TVR.

        A second group claiming an occupied slot triggers a group merge; a
        second TVR sharing a snapshot group under the same perspective kind
        triggers a TVR merge (deduplication).
        """
        tid, gid = self.find_tvr(tid), self.find(gid)
        node = self.tvrs[tid]
        table = node.snapshots if isinstance(slot, SnapshotSlot) else node.deltas
        key = slot.t if isinstance(slot, SnapshotSlot) else (slot.t, slot.t2)
        held = table.get(key)
        if held is not None:
            held = self.find(held)
            if held == gid:
                return False
            self.merge_groups(held, gid)
            return False
        if isinstance(slot, SnapshotSlot):
            twin = self._snapshot_twin(tid, slot.t, gid)
            if twin is not None:
                self._merge_tvrs(twin, tid)
                tid = self.find_tvr(tid)
                node = self.tvrs[tid]
                if slot.t in node.snapshots:
                    return False
                table = node.snapshots
        table[key] = gid
        self._groups[gid].slots.add((tid, slot))
        self.events.append(Event("intra", tid, slot, gid))
        self._flush_merges()
        return True

    def _snapshot_twin(self, tid: int, t: int, gid: int) -> int | None:
        node = self.tvrs[tid]
        for other_tid, slot in self._groups[gid].slots:
            other_tid = self.find_tvr(other_tid)
            if other_tid == tid:
                continue
            if isinstance(slot, SnapshotSlot) and slot.t == t:
                if self.tvrs[other_tid].perspective.kind is node.perspective.kind:
                    return other_tid
        return None

    def register_inter_tvr(self, parent: int, kind: InterKind, child: int) -> bool:
        parent, child = self.find_tvr(parent), self.find_tvr(child)
        node = self.tvrs[parent]
        held = node.inter.get(kind)
        if held is not None:
            held = self.find_tvr(held)
            if held != child:
                self._merge_tvrs(held, child)
                self._flush_merges()
            return False
        node.inter[kind] = child
        self.events.append(Event("inter", parent, kind, child))
        return True

    def resolve_inter(self, tid: int, path: Iterable[InterKind]) -> int | None:
        """Follow inter edges transitively: e.g. the positive part of a part."""
        cur = self.find_tvr(tid)
        for kind in path:
            nxt = self.tvrs[cur].inter.get(kind)
            if nxt is None:
                return None
            cur = self.find_tvr(nxt)
        return cur

    def snapshot_group(self, tid: int, t: int) -> int | None:
        gid = self.tvr(tid).snapshots.get(t)
        return None if gid is None else self.find(gid)

    def delta_group(self, tid: int, t: int, t2: int) -> int | None:
        gid = self.tvr(tid).deltas.get((t, t2))
        return None if gid is None else self.find(gid)

    # -- merging -----------------------------------------------------------

    def merge_groups(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        self._pending.append((a, b))
        self._flush_merges()
        return self.find(a)

    def _flush_merges(self):
        while self._pending:
            a, b = self._pending.pop()
            a, b = self.find(a), self.find(b)
            if a == b:
                continue
            keep, gone = min(a, b), max(a, b)
            self._do_merge(keep, gone, self._pending)

    def _do_merge(self, keep: int, gone: int, pending: list):
        gk, gg = self._groups[keep], self._groups[gone]
        if not gk.schema.compatible(gg.schema):
            raise ContractError(
                f"merging groups with different schemas: {gk.schema.names} vs {gg.schema.names}"
            )
        self._parent[gone] = keep
        gk.exprs.extend(gg.exprs)
        slots = gk.slots | gg.slots
        gk.slots = set()
        del self._groups[gone]
        # re-canonicalize every expr index entry and collapse duplicates
        self._reindex(pending)
        # re-bind TVR slots; conflicts enqueue further merges
        for tid, slot in sorted(slots, key=lambda x: (x[0], repr(x[1]))):
            tid = self.find_tvr(tid)
            node = self.tvrs[tid]
            table = node.snapshots if isinstance(slot, SnapshotSlot) else node.deltas
            key = slot.t if isinstance(slot, SnapshotSlot) else (slot.t, slot.t2)
            held = table.get(key)
            if held is None or self.find(held) == keep:
                table[key] = keep
                self._groups[keep].slots.add((tid, slot))
            else:
                self._groups[keep].slots.add((tid, slot))
                pending.append((self.find(held), keep))
                continue
            if isinstance(slot, SnapshotSlot):
                twin = self._snapshot_twin(tid, slot.t, keep)
                if twin is not None:
                    self._merge_tvrs(twin, tid)

    def _reindex(self, pending: list):
        self._expr_index = {}
        for gid, group in sorted(self._groups.items()):
            if self.find(gid) != gid:
                continue
            seen: dict[tuple, GroupExpr] = {}
            for expr in group.exprs:
                expr.children = tuple(self.find(c) for c in expr.children)
                key = (expr.op, expr.children)
                if key in seen:
                    continue
                seen[key] = expr
                other = self._expr_index.get(key)
                if other is not None and self.find(other) != gid:
                    pending.append((self.find(other), gid))
                else:
                    self._expr_index[key] = gid
            group.exprs = sorted(seen.values(), key=lambda e: e.eid)

    def _merge_tvrs(self, a: int, b: int):
        a, b = self.find_tvr(a), self.find_tvr(b)
        if a == b:
            return
        keep, gone = min(a, b), max(a, b)
        nk, ng = self.tvrs[keep], self.tvrs[gone]
        self._tvr_parent[gone] = keep
        if nk.query is None:
            nk.query = ng.query
        if nk.state_spec is None:
            nk.state_spec = ng.state_spec
        pending = self._pending
        for t, gid in ng.snapshots.items():
            held = nk.snapshots.get(t)
            if held is None:
                nk.snapshots[t] = gid
                self._groups[self.find(gid)].slots.add((keep, SnapshotSlot(t)))
            elif self.find(held) != self.find(gid):
                pending.append((self.find(held), self.find(gid)))
        for span, gid in ng.deltas.items():
            held = nk.deltas.get(span)
            if held is None:
                nk.deltas[span] = gid
                self._groups[self.find(gid)].slots.add((keep, DeltaSlot(*span)))
            elif self.find(held) != self.find(gid):
                pending.append((self.find(held), self.find(gid)))
        for kind, other in ng.inter.items():
            if kind in nk.inter:
                if self.find_tvr(nk.inter[kind]) != self.find_tvr(other):
                    self._merge_tvrs(nk.inter[kind], other)
            else:
                nk.inter[kind] = other
        del self.tvrs[gone]

    # -- inspection --------------------------------------------------------

    def check_invariants(self):
        for group in self.groups():
            keys = set()
            for expr in group.exprs:
                for c in expr.children:
                    if self.find(c) not in self._groups:
                        raise ContractError("expr child does not resolve to a live group")
                key = expr.key(self.find)
                if key in keys:
                    raise ContractError(f"duplicate expr {key} in group {group.gid}")
                keys.add(key)
        for node in self.live_tvrs():
            for gid in list(node.snapshots.values()) + list(node.deltas.values()):
                if self.find(gid) not in self._groups:
                    raise ContractError("TVR slot points at a dead group")

    def dump(self) -> str:
        lines = []
        for group in self.groups():
            slots = sorted(
                f"TVR-{self.find_tvr(t)}:{s!r}" for t, s in group.slots
            )
            head = f"G{group.gid} ({','.join(group.schema.names)})"
            if slots:
                head += "  [" + " ".join(slots) + "]"
            lines.append(head)
            for expr in sorted(group.exprs, key=lambda e: e.eid):
                kids = ",".join(f"G{c}" for c in expr.children)
                lines.append(f"  e{expr.eid}: {expr.op!r}({kids})")
        for node in self.live_tvrs():
            kind = node.perspective.kind.value
            lines.append(f"TVR-{node.tid} ({kind})")
            for t in sorted(node.snapshots):
                lines.append(f"  snap@t{t} -> G{self.find(node.snapshots[t])}")
            for (t, t2) in sorted(node.deltas):
                lines.append(f"  delta@(t{t},t{t2}) -> G{self.find(node.deltas[(t, t2)])}")
            for kind in sorted(node.inter, key=lambda k: k.value):
                lines.append(f"  {kind.value} -> TVR-{self.find_tvr(node.inter[kind])}")
        return "\n".join(lines)


MULTIPLICITY = MergeOperator(MergeKind.MULTIPLICITY_UNION)
