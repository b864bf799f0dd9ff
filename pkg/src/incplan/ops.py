"""Executable operator catalog shared by the planner, stats, and runtime.

Each memo operator kind has a bag-level implementation here.  Joins and
aggregates are hash-based, which keeps them an independent code path from
the nested-loop reference evaluator used as the oracle.

Incremental join variants consume previous snapshots as retained state
plus fresh deltas and emit the output delta directly; they are the
executable form of the delta rewrite rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .algebra import eval_scalar, scalar_kind
from .bags import (
    AggSpec,
    BagRelation,
    Column,
    Schema,
    additive_union,
    agg_final,
    attribute_inverse,
    attribute_merge,
    bag_difference,
)
from .errors import ContractError
from .memo import Operator

# operator kinds ------------------------------------------------------------

# leaves
TABLE_SCAN = "table_scan_at"      # (table, t)
DELTA_SCAN = "delta_scan_at"      # (table, t, t2)
STATE_SCAN = "state_scan"         # (state id,)
EMPTY_SCAN = "empty_scan"         # (tag,)

# logical operators
FILTER = "filter"                 # (pred,)
PROJECT = "project"               # (cols,)
INNER_JOIN = "inner_join"         # (left_on, right_on)
LEFT_OUTER_JOIN = "left_outer_join"
SEMI_JOIN = "semi_join"
ANTI_JOIN = "anti_join"           # (left_on, right_on, pad, from_state)
AGG_STATE = "aggregate_state"     # (spec,)
AGG_FINAL = "aggregate_final"     # (spec,)
UNION = "union"                   # ()
MERGE = "merge"                   # (perspective tag, spec?)  children: acc, delta
DIFF = "diff"                     # (perspective tag, spec?)  children: newer, older
DELTA_INNER_JOIN = "delta_inner_join"    # (on)  children: L, R, dL, dR
DELTA_LOUTER_JOIN = "delta_louter_join"  # (on)  children: L, R, dL, dR
OJV_DELTA_LOUTER = "ojv_delta_louter"    # (on)  children: L, R, dL, dR, prev view

# physical operators
FILTER_EXEC = "filter_exec"
PROJECT_EXEC = "project_exec"
HASH_INNER_JOIN = "hash_inner_join"
HASH_LOUTER_JOIN = "hash_left_outer_join"
HASH_SEMI_JOIN = "hash_semi_join"
HASH_ANTI_JOIN = "hash_anti_join"        # (left_on, right_on, pad, from_state)
INCR_HASH_INNER_JOIN = "incr_hash_inner_join"
INCR_HASH_LOUTER_JOIN = "incr_hash_louter_join"
OJV_INCR_LOUTER = "ojv_incr_louter"
HASH_AGGREGATE = "hash_aggregate"        # (spec,)
INCR_AGG_MERGE = "incr_aggregate_merge"  # (spec,)
FINAL_EXEC = "final_exec"                # (spec,)
MERGE_UNION = "merge_union"              # (role,)  role: "merge" | "union"
DIFF_UNION = "diff_union"
DIFF_STATE = "diff_state"                # (spec,)
EXCHANGE = "exchange"                    # (keys,)

PHYSICAL_KINDS = {
    TABLE_SCAN,
    DELTA_SCAN,
    STATE_SCAN,
    EMPTY_SCAN,
    FILTER_EXEC,
    PROJECT_EXEC,
    HASH_INNER_JOIN,
    HASH_LOUTER_JOIN,
    HASH_SEMI_JOIN,
    HASH_ANTI_JOIN,
    INCR_HASH_INNER_JOIN,
    INCR_HASH_LOUTER_JOIN,
    OJV_INCR_LOUTER,
    HASH_AGGREGATE,
    INCR_AGG_MERGE,
    FINAL_EXEC,
    MERGE_UNION,
    DIFF_UNION,
    DIFF_STATE,
    EXCHANGE,
}

#: physical implementation kind for each logical kind (1:1 here; enforcers
#: and state-reusing variants are added separately by the rules)
IMPLEMENTS = {
    FILTER: FILTER_EXEC,
    PROJECT: PROJECT_EXEC,
    INNER_JOIN: HASH_INNER_JOIN,
    LEFT_OUTER_JOIN: HASH_LOUTER_JOIN,
    SEMI_JOIN: HASH_SEMI_JOIN,
    ANTI_JOIN: HASH_ANTI_JOIN,
    AGG_STATE: HASH_AGGREGATE,
    AGG_FINAL: FINAL_EXEC,
    UNION: MERGE_UNION,
    MERGE: None,  # specialized by perspective
    DIFF: None,
    DELTA_INNER_JOIN: INCR_HASH_INNER_JOIN,
    DELTA_LOUTER_JOIN: INCR_HASH_LOUTER_JOIN,
    OJV_DELTA_LOUTER: OJV_INCR_LOUTER,
}


def is_physical(op: Operator) -> bool:
    return op.kind in PHYSICAL_KINDS


def state_input_positions(op: Operator) -> frozenset[int]:
    """Child positions consumed as retained state rather than fresh flow.

    A cross-time edge into a state position is persisted as a by-product
    of incremental execution and carries no Save/Load cost.
    """
    if op.kind in (INCR_HASH_INNER_JOIN, INCR_HASH_LOUTER_JOIN):
        return frozenset((0, 1))
    if op.kind == OJV_INCR_LOUTER:
        return frozenset((0, 1, 4))
    if op.kind == MERGE_UNION and op.params and op.params[0] == "merge":
        return frozenset((0,))
    if op.kind == INCR_AGG_MERGE:
        return frozenset((0,))
    if op.kind == HASH_ANTI_JOIN and len(op.params) >= 4 and op.params[3]:
        return frozenset((0, 1))
    return frozenset()


def persists_by_product(op: Operator) -> bool:
    """Producers whose output survives across time points for free."""
    return op.kind == EXCHANGE


# evaluation ------------------------------------------------------------------


@dataclass
class EvalContext:
    arrivals: object = None  # ArrivalSet
    states: Mapping[str, BagRelation] = field(default_factory=dict)


def _hash_index(rel: BagRelation, keys: tuple[str, ...]):
    idx_pos = [rel.schema.index(k) for k in keys]
    table: dict[tuple, list[tuple[tuple, int]]] = {}
    for t, m in rel.rows.items():
        kv = tuple(t[i] for i in idx_pos)
        if any(v is None for v in kv):
            continue
        table.setdefault(kv, []).append((t, m))
    return table


def _keep_positions(right_schema: Schema, right_on: tuple[str, ...]) -> list[int]:
    return [i for i, c in enumerate(right_schema.columns) if c.name not in right_on]


def _join_parts(left: BagRelation, right: BagRelation, on) -> tuple[BagRelation, dict]:
    """Hash inner join plus per-left-key match weights."""
    left_on, right_on = on
    table = _hash_index(right, right_on)
    keep = _keep_positions(right.schema, right_on)
    lpos = [left.schema.index(k) for k in left_on]
    out_cols = left.schema.columns + tuple(
        Column(right.schema.columns[i].name, right.schema.columns[i].kind, True) for i in keep
    )
    out = BagRelation(Schema(out_cols))
    weights: dict[tuple, int] = {}
    for kv, entries in table.items():
        weights[kv] = sum(m for _, m in entries)
    for lt, lm in left.rows.items():
        kv = tuple(lt[i] for i in lpos)
        if any(v is None for v in kv):
            continue
        for rt, rm in table.get(kv, ()):
            out.add(lt + tuple(rt[i] for i in keep), lm * rm)
    return out, weights


def hash_inner_join(left: BagRelation, right: BagRelation, on) -> BagRelation:
    return _join_parts(left, right, on)[0]


def _pad_width(left: BagRelation, right: BagRelation, on) -> int:
    return len(_keep_positions(right.schema, on[1]))


def hash_louter_join(left: BagRelation, right: BagRelation, on) -> BagRelation:
    inner, weights = _join_parts(left, right, on)
    lpos = [left.schema.index(k) for k in on[0]]
    width = _pad_width(left, right, on)
    out = inner
    for lt, lm in left.rows.items():
        kv = tuple(lt[i] for i in lpos)
        if any(v is None for v in kv) or weights.get(kv, 0) == 0:
            out.add(lt + (None,) * width, lm)
    return out


def hash_semi_join(left: BagRelation, right: BagRelation, on, anti=False, pad_width=0):
    _, weights = _join_parts(left, right, on)
    lpos = [left.schema.index(k) for k in on[0]]
    cols = left.schema.columns
    if pad_width:
        cols = cols + tuple(
            Column(c.name, c.kind, True)
            for c in _padded_right_cols(right.schema, on[1])
        )
    out = BagRelation(Schema(cols))
    for lt, lm in left.rows.items():
        kv = tuple(lt[i] for i in lpos)
        matched = not any(v is None for v in kv) and weights.get(kv, 0) != 0
        if matched != anti:
            out.add(lt + (None,) * pad_width, lm)
    return out


def _padded_right_cols(right_schema: Schema, right_on) -> list[Column]:
    return [c for c in right_schema.columns if c.name not in right_on]


def delta_inner_join(L, R, dL, dR, on) -> BagRelation:
    """delta(L join R) = dL*R + L*dR + dL*dR."""
    a = hash_inner_join(dL, R, on)
    b = hash_inner_join(L, dR, on)
    c = hash_inner_join(dL, dR, on)
    return additive_union(additive_union(a, b), c)


def _weights_of(rel: BagRelation, keys) -> dict[tuple, int]:
    pos = [rel.schema.index(k) for k in keys]
    w: dict[tuple, int] = {}
    for t, m in rel.rows.items():
        kv = tuple(t[i] for i in pos)
        if any(v is None for v in kv):
            continue
        w[kv] = w.get(kv, 0) + m
    return w


def delta_louter_join(L, R, dL, dR, on) -> BagRelation:
    """Delta of a left outer join: matched delta plus padding corrections.

    A left row's null-padded copy appears while its match weight is zero;
    the correction term emits the signed difference of that indicator
    between the old and new right snapshots, scaled by the row's old and
    new multiplicities.
    """
    inner = delta_inner_join(L, R, dL, dR, on)
    left_on = on[0]
    w_old = _weights_of(R, on[1])
    w_new = _weights_of(additive_union(R, dR), on[1])
    lpos = [L.schema.index(k) for k in left_on]
    width = _pad_width(L, R, on)
    out = inner
    seen = set(L.rows) | set(dL.rows)
    new_left = additive_union(L, dL)
    for lt in seen:
        kv = tuple(lt[i] for i in lpos)
        m_old = L.rows.get(lt, 0)
        m_new = new_left.rows.get(lt, 0)
        if any(v is None for v in kv):
            pad_old = m_old
            pad_new = m_new
        else:
            pad_old = m_old if w_old.get(kv, 0) == 0 else 0
            pad_new = m_new if w_new.get(kv, 0) == 0 else 0
        if pad_new - pad_old:
            out.add(lt + (None,) * width, pad_new - pad_old)
    return out


def ojv_delta_louter(L, R, dL, dR, prev_view, on) -> BagRelation:
    """Outer-join view maintenance delta with one table updated at a time.

    Phase one applies the right-side update: the directly affected part is
    the inner join of the old left snapshot with the right delta, and the
    indirectly affected part retracts or restores null-padded rows whose
    match status flipped.  Phase two applies the left-side update directly
    as a left outer join against the updated right snapshot.
    """
    width = _pad_width(L, R, on)
    lpos = [L.schema.index(k) for k in on[0]]
    # phase 1: right table updated
    d_direct = hash_inner_join(L, dR, on)
    w_old = _weights_of(R, on[1])
    w_mid = _weights_of(additive_union(R, dR), on[1])
    out = d_direct
    for lt, lm in L.rows.items():
        kv = tuple(lt[i] for i in lpos)
        if any(v is None for v in kv):
            continue
        was = w_old.get(kv, 0) == 0
        now = w_mid.get(kv, 0) == 0
        if was and not now:
            out.add(lt + (None,) * width, -lm)
        elif now and not was:
            out.add(lt + (None,) * width, lm)
    # phase 2: left table updated against the settled right snapshot
    r_mid = additive_union(R, dR)
    out = additive_union(out, hash_louter_join(dL, r_mid, on))
    return out


def evaluate_op(op: Operator, out_schema: Schema, child_bags: list[BagRelation], ctx: EvalContext) -> BagRelation:
    kind = op.kind
    if kind == TABLE_SCAN:
        return ctx.arrivals.snapshot(op.params[0], op.params[1])
    if kind == DELTA_SCAN:
        return ctx.arrivals.delta(op.params[0], op.params[1], op.params[2])
    if kind == STATE_SCAN:
        sid = op.params[0]
        if sid not in ctx.states:
            raise ContractError(f"unknown materialized state {sid!r}")
        return ctx.states[sid]
    if kind == EMPTY_SCAN:
        return BagRelation(out_schema)
    if kind in (FILTER, FILTER_EXEC):
        pred = op.params[0]
        child = child_bags[0]
        out = BagRelation(out_schema)
        for t, m in child.rows.items():
            if eval_scalar(pred, dict(zip(child.schema.names, t))):
                out.add(t, m)
        return out
    if kind in (PROJECT, PROJECT_EXEC):
        cols = op.params[0]
        child = child_bags[0]
        out = BagRelation(out_schema)
        for t, m in child.rows.items():
            row = dict(zip(child.schema.names, t))
            out.add(tuple(eval_scalar(e, row) for _, e in cols), m)
        return out
    if kind in (INNER_JOIN, HASH_INNER_JOIN):
        return hash_inner_join(child_bags[0], child_bags[1], op.params[0])
    if kind in (LEFT_OUTER_JOIN, HASH_LOUTER_JOIN):
        return hash_louter_join(child_bags[0], child_bags[1], op.params[0])
    if kind in (SEMI_JOIN, HASH_SEMI_JOIN):
        return hash_semi_join(child_bags[0], child_bags[1], op.params[0])
    if kind in (ANTI_JOIN, HASH_ANTI_JOIN):
        on, pad = op.params[0], op.params[1]
        width = _pad_width(child_bags[0], child_bags[1], on) if pad else 0
        return hash_semi_join(child_bags[0], child_bags[1], on, anti=True, pad_width=width)
    if kind in (AGG_STATE, HASH_AGGREGATE):
        return op.params[0].iterate(child_bags[0])
    if kind in (AGG_FINAL, FINAL_EXEC):
        return agg_final(child_bags[0], op.params[0])
    if kind in (UNION, MERGE_UNION) or (kind == MERGE and op.params[0] == "multiplicity"):
        return additive_union(
            BagRelation(out_schema, dict(child_bags[0].rows)),
            BagRelation(out_schema, dict(child_bags[1].rows)),
        )
    if kind in (MERGE, INCR_AGG_MERGE):
        spec: AggSpec = op.params[1] if kind == MERGE else op.params[0]
        return attribute_merge(child_bags[0], child_bags[1], spec.merge_operator())
    if kind == DIFF_UNION or (kind == DIFF and op.params[0] == "multiplicity"):
        return bag_difference(child_bags[0], child_bags[1])
    if kind in (DIFF, DIFF_STATE):
        spec = op.params[1] if kind == DIFF else op.params[0]
        return attribute_inverse(child_bags[0], child_bags[1], spec.merge_operator())
    if kind in (DELTA_INNER_JOIN, INCR_HASH_INNER_JOIN):
        return delta_inner_join(*child_bags[:4], op.params[0])
    if kind in (DELTA_LOUTER_JOIN, INCR_HASH_LOUTER_JOIN):
        return delta_louter_join(*child_bags[:4], op.params[0])
    if kind in (OJV_DELTA_LOUTER, OJV_INCR_LOUTER):
        return ojv_delta_louter(*child_bags[:5], op.params[0])
    if kind == EXCHANGE:
        return child_bags[0]
    raise ContractError(f"no evaluation for operator kind {kind!r}")


# cost model ------------------------------------------------------------------


@dataclass(frozen=True)
class CostFactors:
    """Knobs of the tuple-count cost model.

    The defaults reproduce the worked two-point arithmetic exactly: joins
    charge the fresh tuples they consume, aggregates charge their input,
    scans and pipelined or state-merging operators are free, and movement
    operators charge per tuple moved.
    """

    save: float = 0.5
    load: float = 0.4
    exchange: float = 0.3
    filter_project: float = 0.0

    def as_dict(self):
        return {
            "save": self.save,
            "load": self.load,
            "exchange": self.exchange,
            "filter_project": self.filter_project,
        }


def op_base_cost(op: Operator, child_rels: list[BagRelation], factors: CostFactors) -> float:
    """Work charged to one execution of the operator, in tuples processed."""
    kind = op.kind
    counts = [r.tuple_count() for r in child_rels]
    if kind in (TABLE_SCAN, DELTA_SCAN, STATE_SCAN, EMPTY_SCAN):
        return 0.0
    if kind in (FILTER_EXEC, PROJECT_EXEC):
        return factors.filter_project * counts[0]
    if kind in (HASH_INNER_JOIN, HASH_LOUTER_JOIN, HASH_SEMI_JOIN):
        return float(counts[0] + counts[1])
    if kind == HASH_ANTI_JOIN:
        from_state = len(op.params) >= 4 and op.params[3]
        return 0.0 if from_state else float(counts[0] + counts[1])
    if kind in (INCR_HASH_INNER_JOIN, INCR_HASH_LOUTER_JOIN):
        return float(counts[2] + counts[3])
    if kind == OJV_INCR_LOUTER:
        d_direct = hash_inner_join(child_rels[0], child_rels[3], op.params[0])
        return float(counts[2] + counts[3] + d_direct.tuple_count())
    if kind == HASH_AGGREGATE:
        return float(counts[0])
    if kind in (INCR_AGG_MERGE, MERGE_UNION, FINAL_EXEC):
        return 0.0
    if kind in (DIFF_UNION, DIFF_STATE):
        return float(counts[0] + counts[1])
    if kind == EXCHANGE:
        return factors.exchange * counts[0]
    raise ContractError(f"no cost for operator kind {kind!r} (logical operators are not costed)")
