"""Planning sessions: problem instance, memo seeding, and exact statistics.

A session owns the quadruple of timeline, arrivals, required outputs, and
cost objective, plus the memo being explored.  Cardinality statistics are
exact at this scale: every group's relation is derived either from its
TVR slot (snapshot or delta of a known defining query, evaluated by the
batch oracle) or by evaluating one representative expression.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ops
from .algebra import (
    Aggregate,
    Filter,
    InnerJoin,
    LeftAntiJoin,
    LeftOuterJoin,
    LeftSemiJoin,
    Project,
    Scan,
    UnionAll,
    evaluate_on_accumulated,
    output_schema,
)
from .bags import BagRelation, MergeKind, MergeOperator, Schema, bag_difference, attribute_inverse
from .errors import ContractError, SchemaError
from .memo import (
    DeltaSlot,
    Memo,
    MULTIPLICITY,
    Operator,
    SnapshotSlot,
    TvrNode,
)
from .ops import CostFactors, EvalContext, evaluate_op, op_base_cost
from .physical import CostFunction, WeightedSum
from .tvr import ArrivalSet, OutputRequirement


@dataclass
class SessionConfig:
    rule_families: frozenset = frozenset({"im1", "im2", "ojv"})
    cost_fn: CostFunction | None = None  # defaults to uniform weights
    factors: CostFactors = field(default_factory=CostFactors)
    distributed: bool = False
    ojv_virtual_points: bool = True
    translation_copy: bool = True
    seed_interval: int = 0
    fire_budget: int = 20000
    score_shuffle_seed: int | None = None  # confluence testing only


@dataclass
class MaterializedInput:
    """A state carried over from an earlier run, usable as a free scan."""

    state_id: str
    relation: BagRelation
    available_from: int
    table: str | None = None  # optional TVR declaration: snapshot of a base table
    snapshot_t: int | None = None


class Session:
    def __init__(
        self,
        arrivals: ArrivalSet,
        requirement: OutputRequirement,
        config: SessionConfig | None = None,
    ):
        self.arrivals = arrivals
        self.requirement = requirement
        self.config = config or SessionConfig()
        if self.config.cost_fn is None:
            self.config.cost_fn = WeightedSum(tuple([1.0] * arrivals.timeline.k))
        self.memo = Memo()
        self.base_tvrs: dict[str, int] = {}
        self.query_tvrs: dict[int, int] = {}  # requirement point -> root TVR id
        self.materialized: dict[str, MaterializedInput] = {}
        self.stats = StatsProvider(self)
        self.explored_intervals: set[tuple[int, int]] = set()
        for t in requirement.points():
            arrivals.timeline.check(t)

    @property
    def k(self) -> int:
        return self.arrivals.timeline.k

    @property
    def final(self) -> int:
        return self.arrivals.timeline.final

    def intervals(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i in range(self.k - 1)]

    # -- registering the original logical plans -----------------------------

    def register_query(self, expr) -> int:
        """Register a logical plan; each node becomes a group linked as the
        final-point snapshot of a TVR carrying the defining query."""
        gid, tvr = self._register_node(expr)
        return tvr

    def _register_node(self, expr) -> tuple[int, int]:
        m = self.memo
        tf = self.final
        if isinstance(expr, Scan):
            return self._base_scan(expr.table)
        if isinstance(expr, Aggregate):
            cgid, ctvr = self._register_node(expr.child)
            child_schema = m.group(cgid).schema
            spec = expr.spec
            state_schema = spec.state_schema(child_schema)
            sgid, _ = m.register_expr(
                Operator(ops.AGG_STATE, (spec,)), (cgid,), state_schema
            )
            stvr = self._tvr_for_group(
                sgid,
                perspective=spec.merge_operator(),
                query=expr.child,
                state_spec=spec,
            )
            fgid, _ = m.register_expr(
                Operator(ops.AGG_FINAL, (spec,)), (sgid,), output_schema(expr, self.arrivals.schemas())
            )
            ftvr = self._tvr_for_group(fgid, MULTIPLICITY, query=expr)
            return fgid, ftvr
        kids = []
        if isinstance(expr, Filter):
            kids = [self._register_node(expr.child)]
            op = Operator(ops.FILTER, (expr.pred,))
        elif isinstance(expr, Project):
            kids = [self._register_node(expr.child)]
            op = Operator(ops.PROJECT, (tuple(expr.cols),))
        elif isinstance(expr, (InnerJoin, LeftOuterJoin, LeftSemiJoin, LeftAntiJoin)):
            kids = [self._register_node(expr.left), self._register_node(expr.right)]
            on = (tuple(expr.left_on), tuple(expr.right_on))
            kind = {
                InnerJoin: ops.INNER_JOIN,
                LeftOuterJoin: ops.LEFT_OUTER_JOIN,
                LeftSemiJoin: ops.SEMI_JOIN,
                LeftAntiJoin: ops.ANTI_JOIN,
            }[type(expr)]
            params = (on, False, False) if kind == ops.ANTI_JOIN else (on,)
            op = Operator(kind, params)
        elif isinstance(expr, UnionAll):
            kids = [self._register_node(expr.left), self._register_node(expr.right)]
            op = Operator(ops.UNION, ())
        else:
            raise ContractError(f"cannot register {expr!r}")
        gid, _ = self.memo.register_expr(
            op, [g for g, _ in kids], output_schema(expr, self.arrivals.schemas())
        )
        tvr = self._tvr_for_group(gid, MULTIPLICITY, query=expr)
        return gid, tvr

    def _base_scan(self, table: str) -> tuple[int, int]:
        tf = self.final
        gid, _ = self.memo.register_expr(
            Operator(ops.TABLE_SCAN, (table, tf)), (), self.arrivals.schema(table)
        )
        if table in self.base_tvrs:
            tvr = self.base_tvrs[table]
            self.memo.register_tvr_link(tvr, SnapshotSlot(tf), gid)
        else:
            tvr = self._tvr_for_group(gid, MULTIPLICITY, query=Scan(table))
            self.base_tvrs[table] = tvr
        return gid, self.memo.find_tvr(tvr)

    def _tvr_for_group(self, gid, perspective, query=None, state_spec=None) -> int:
        """Associate a group with a TVR at the final snapshot, deduplicating."""
        m = self.memo
        for tid, slot in m.group(gid).slots:
            if isinstance(slot, SnapshotSlot) and slot.t == self.final:
                node = m.tvr(tid)
                if node.perspective.kind is perspective.kind:
                    if node.query is None:
                        node.query = query
                    if node.state_spec is None:
                        node.state_spec = state_spec
                    return m.find_tvr(tid)
        tvr = m.new_tvr(perspective, query, state_spec)
        m.register_tvr_link(tvr, SnapshotSlot(self.final), gid)
        return m.find_tvr(tvr)

    # -- materialized states -------------------------------------------------

    def register_materialized_state(self, state: MaterializedInput) -> int:
        if state.state_id in self.materialized:
            raise ContractError(f"duplicate materialized state id {state.state_id!r}")
        self.materialized[state.state_id] = state
        gid, _ = self.memo.register_expr(
            Operator(ops.STATE_SCAN, (state.state_id,)), (), state.relation.schema
        )
        if state.table is not None and state.snapshot_t is not None:
            declared = self.arrivals.schema(state.table)
            if not state.relation.schema.compatible(declared):
                raise SchemaError(
                    f"materialized state {state.state_id!r} does not match table "
                    f"{state.table!r} schema"
                )
            tvr = self.base_tvrs.get(state.table)
            if tvr is None:
                sg, _ = self._base_scan(state.table)
                tvr = self.base_tvrs[state.table]
            self.memo.register_tvr_link(tvr, SnapshotSlot(state.snapshot_t), gid)
        return gid

    def state_times(self) -> dict[str, int]:
        return {sid: s.available_from for sid, s in self.materialized.items()}

    def state_relations(self) -> dict[str, BagRelation]:
        return {sid: s.relation for sid, s in self.materialized.items()}

    # -- requirement roots ---------------------------------------------------

    def root_group(self, t: int) -> int:
        tvr = self.query_tvrs.get(t)
        if tvr is None:
            raise ContractError(f"no registered query for required point t{t}")
        gid = self.memo.snapshot_group(tvr, t)
        if gid is None:
            raise ContractError(f"exploration produced no snapshot at t{t} for the output query")
        return gid


class StatsProvider:
    """Exact per-group relations, derived from TVR slots or representative exprs."""

    def __init__(self, session: Session):
        self.session = session
        self._cache: dict[int, BagRelation] = {}
        self._overrides: dict[tuple, int] = {}

    def add_override(self, table: str, tuples: int, snapshot: int | None = None, delta: tuple | None = None):
        if snapshot is not None:
            self._overrides[(table, "snap", snapshot)] = tuples
        elif delta is not None:
            self._overrides[(table, "delta", tuple(delta))] = tuples
        else:
            raise ContractError("override needs a snapshot or delta slot")

    def relation(self, gid: int) -> BagRelation:
        m = self.session.memo
        gid = m.find(gid)
        if gid in self._cache:
            return self._cache[gid]
        rel = self._from_slots(gid)
        if rel is None:
            rel = self._from_exprs(gid, set())
        if rel is None:
            raise ContractError(f"cannot derive a relation for group {gid}")
        self._cache[gid] = rel
        return rel

    def tuple_count(self, gid: int) -> int:
        m = self.session.memo
        gid = m.find(gid)
        override = self._slot_override(gid)
        if override is not None:
            return override
        return self.relation(gid).tuple_count()

    def _slot_override(self, gid: int) -> int | None:
        if not self._overrides:
            return None
        m = self.session.memo
        for tid, slot in m.group(gid).slots:
            node = m.tvr(tid)
            if not isinstance(node.query, Scan):
                continue
            table = node.query.table
            if isinstance(slot, SnapshotSlot):
                key = (table, "snap", slot.t)
            else:
                key = (table, "delta", (slot.t, slot.t2))
            if key in self._overrides:
                return self._overrides[key]
        return None

    def _from_slots(self, gid: int) -> BagRelation | None:
        m = self.session.memo
        for tid, slot in sorted(m.group(gid).slots, key=lambda x: (x[0], repr(x[1]))):
            node = m.tvr(tid)
            rel = self._slot_relation(node, slot)
            if rel is not None:
                return rel
        return None

    def _slot_relation(self, node: TvrNode, slot) -> BagRelation | None:
        if node.query is None:
            return None
        arr = self.session.arrivals
        if isinstance(slot, SnapshotSlot):
            return self._tvr_snapshot(node, slot.t)
        newer = self._tvr_snapshot(node, slot.t2)
        older = self._tvr_snapshot(node, slot.t)
        if node.perspective.kind is MergeKind.MULTIPLICITY_UNION:
            return bag_difference(newer, older)
        if not node.perspective.invertible:
            return None
        return attribute_inverse(newer, older, node.perspective)

    def _tvr_snapshot(self, node: TvrNode, t: int) -> BagRelation:
        rows = evaluate_on_accumulated(node.query, self.session.arrivals, t)
        if node.state_spec is not None:
            return node.state_spec.iterate(rows)
        return rows

    def _from_exprs(self, gid: int, on_path: set[int]) -> BagRelation | None:
        m = self.session.memo
        gid = m.find(gid)
        if gid in self._cache:
            return self._cache[gid]
        if gid in on_path:
            return None
        rel = self._from_slots(gid)
        if rel is None:
            on_path = on_path | {gid}
            group = m.group(gid)
            ctx = EvalContext(self.session.arrivals, self.session.state_relations())
            for expr in sorted(group.exprs, key=lambda e: e.eid):
                child_rels = []
                ok = True
                for c in expr.children:
                    cr = self._from_exprs(c, on_path)
                    if cr is None:
                        ok = False
                        break
                    child_rels.append(cr)
                if not ok:
                    continue
                try:
                    rel = evaluate_op(expr.op, group.schema, child_rels, ctx)
                    break
                except ContractError:
                    continue
        if rel is not None:
            self._cache[gid] = rel
        return rel

    def op_cost(self, op: Operator, child_gids: tuple[int, ...]) -> float:
        child_rels = [self.relation(c) for c in child_gids]
        counts = [self.tuple_count(c) for c in child_gids]
        base = op_base_cost(op, child_rels, self.session.config.factors)
        # honor overrides for the simple linear cases
        if op.kind in (ops.HASH_INNER_JOIN, ops.HASH_LOUTER_JOIN, ops.HASH_SEMI_JOIN):
            base = float(counts[0] + counts[1])
        elif op.kind in (ops.INCR_HASH_INNER_JOIN, ops.INCR_HASH_LOUTER_JOIN):
            base = float(counts[2] + counts[3])
        elif op.kind == ops.HASH_AGGREGATE:
            base = float(counts[0])
        elif op.kind == ops.EXCHANGE:
            base = self.session.config.factors.exchange * counts[0]
        return base
