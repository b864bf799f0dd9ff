"""Logical operator algebra and the reference batch evaluator.

The evaluator is the correctness oracle for everything the planner and
runtime produce, so it favors obviousness: joins are nested loops over
bag entries, predicates are tiny interpreted ASTs.  Join predicates are
conjunctions of column equalities (``left_on``/``right_on``); richer
scalar expressions live in Filter and Project nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .bags import (
    AggSpec,
    BagRelation,
    Column,
    FLOAT,
    INT,
    Schema,
    TEXT,
    additive_union,
    agg_final,
)
from .errors import SchemaError

# ---------------------------------------------------------------------------
# Scalar expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Lit:
    value: object


@dataclass(frozen=True)
class NullOf:
    """A typed null literal, used for padding projections."""

    kind: str


@dataclass(frozen=True)
class Cmp:
    op: str  # = != < <= > >=
    left: object
    right: object


@dataclass(frozen=True)
class And:
    parts: tuple


@dataclass(frozen=True)
class Or:
    parts: tuple


@dataclass(frozen=True)
class Not:
    part: object


@dataclass(frozen=True)
class IsNull:
    part: object


@dataclass(frozen=True)
class If:
    cond: object
    then: object
    other: object


@dataclass(frozen=True)
class Arith:
    op: str  # + - *
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    part: object


_CMP = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}

_ARITH = {"+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b}


def eval_scalar(expr, row: Mapping[str, object]):
    """Evaluate a scalar expression; null never satisfies a comparison."""
    if isinstance(expr, Col):
        return row[expr.name]
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, NullOf):
        return None
    if isinstance(expr, Cmp):
        a = eval_scalar(expr.left, row)
        b = eval_scalar(expr.right, row)
        if a is None or b is None:
            return False
        return _CMP[expr.op](a, b)
    if isinstance(expr, And):
        return all(eval_scalar(p, row) for p in expr.parts)
    if isinstance(expr, Or):
        return any(eval_scalar(p, row) for p in expr.parts)
    if isinstance(expr, Not):
        return not eval_scalar(expr.part, row)
    if isinstance(expr, IsNull):
        return eval_scalar(expr.part, row) is None
    if isinstance(expr, If):
        return eval_scalar(
            expr.then if eval_scalar(expr.cond, row) else expr.other, row
        )
    if isinstance(expr, Arith):
        a = eval_scalar(expr.left, row)
        b = eval_scalar(expr.right, row)
        if a is None or b is None:
            return None
        return _ARITH[expr.op](a, b)
    if isinstance(expr, Neg):
        v = eval_scalar(expr.part, row)
        return None if v is None else -v
    raise TypeError(f"not a scalar expression: {expr!r}")


def scalar_kind(expr, s: Schema) -> str:
    """Best-effort output kind used to type Project columns."""
    if isinstance(expr, Col):
        return s.column(expr.name).kind
    if isinstance(expr, NullOf):
        return expr.kind
    if isinstance(expr, Lit):
        if isinstance(expr.value, bool) or isinstance(expr.value, int):
            return INT
        if isinstance(expr.value, float):
            return FLOAT
        return TEXT
    if isinstance(expr, (Cmp, And, Or, Not, IsNull)):
        return INT
    if isinstance(expr, If):
        a = scalar_kind(expr.then, s)
        b = scalar_kind(expr.other, s)
        return a if a == b else FLOAT if FLOAT in (a, b) else a
    if isinstance(expr, (Arith, Neg)):
        kinds = (
            [scalar_kind(expr.part, s)]
            if isinstance(expr, Neg)
            else [scalar_kind(expr.left, s), scalar_kind(expr.right, s)]
        )
        return FLOAT if FLOAT in kinds else INT
    raise TypeError(f"not a scalar expression: {expr!r}")


# ---------------------------------------------------------------------------
# Logical operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scan:
    table: str


@dataclass(frozen=True)
class Filter:
    pred: object
    child: object


@dataclass(frozen=True)
class Project:
    cols: tuple  # (name, scalar expr) pairs
    child: object


@dataclass(frozen=True)
class InnerJoin:
    left_on: tuple
    right_on: tuple
    left: object
    right: object


@dataclass(frozen=True)
class LeftOuterJoin:
    left_on: tuple
    right_on: tuple
    left: object
    right: object


@dataclass(frozen=True)
class LeftSemiJoin:
    left_on: tuple
    right_on: tuple
    left: object
    right: object


@dataclass(frozen=True)
class LeftAntiJoin:
    left_on: tuple
    right_on: tuple
    left: object
    right: object


@dataclass(frozen=True)
class Aggregate:
    spec: AggSpec
    child: object


@dataclass(frozen=True)
class UnionAll:
    left: object
    right: object


JOINS = (InnerJoin, LeftOuterJoin, LeftSemiJoin, LeftAntiJoin)


class Database:
    def __init__(self, tables: Mapping[str, BagRelation] | None = None):
        self.tables: dict[str, BagRelation] = dict(tables or {})

    def __getitem__(self, name: str) -> BagRelation:
        if name not in self.tables:
            raise NameError(f"unknown table {name!r}")
        return self.tables[name]

    def __setitem__(self, name: str, rel: BagRelation) -> None:
        self.tables[name] = rel


def _schema_for_table(expr: Scan, schemas: Mapping[str, Schema]) -> Schema:
    if expr.table not in schemas:
        raise NameError(f"unknown table {expr.table!r}")
    return schemas[expr.table]


def output_schema(expr, schemas: Mapping[str, Schema]) -> Schema:
    """Static output schema of a logical expression.

    Inner/left-outer joins emit the left columns followed by the right
    columns minus the right join keys (they duplicate the left keys on a
    match and are null on padding); semi/anti joins emit the left schema.
    """
    if isinstance(expr, Scan):
        return _schema_for_table(expr, schemas)
    if isinstance(expr, Filter):
        return output_schema(expr.child, schemas)
    if isinstance(expr, Project):
        child = output_schema(expr.child, schemas)
        cols = tuple(
            Column(name, scalar_kind(e, child), True) for name, e in expr.cols
        )
        return Schema(cols)
    if isinstance(expr, (LeftSemiJoin, LeftAntiJoin)):
        return output_schema(expr.left, schemas)
    if isinstance(expr, (InnerJoin, LeftOuterJoin)):
        ls = output_schema(expr.left, schemas)
        rs = output_schema(expr.right, schemas)
        keep = [c for c in rs.columns if c.name not in expr.right_on]
        clash = set(ls.names) & {c.name for c in keep}
        if clash:
            raise SchemaError(f"join output column collision: {sorted(clash)}")
        padded = isinstance(expr, LeftOuterJoin)
        right_cols = tuple(
            Column(c.name, c.kind, True if padded else c.nullable) for c in keep
        )
        return Schema(ls.columns + right_cols)
    if isinstance(expr, Aggregate):
        return expr.spec.output_schema(output_schema(expr.child, schemas))
    if isinstance(expr, UnionAll):
        ls = output_schema(expr.left, schemas)
        rs = output_schema(expr.right, schemas)
        if not ls.compatible(rs):
            raise SchemaError("union operands have different schemas")
        return ls
    raise TypeError(f"not a logical expression: {expr!r}")


def children(expr) -> tuple:
    if isinstance(expr, Scan):
        return ()
    if isinstance(expr, (Filter, Project, Aggregate)):
        return (expr.child,)
    if isinstance(expr, JOINS) or isinstance(expr, UnionAll):
        return (expr.left, expr.right)
    raise TypeError(f"not a logical expression: {expr!r}")


def tables_of(expr) -> set[str]:
    if isinstance(expr, Scan):
        return {expr.table}
    out: set[str] = set()
    for c in children(expr):
        out |= tables_of(c)
    return out


# ---------------------------------------------------------------------------
# Batch evaluation (the oracle)
# ---------------------------------------------------------------------------


def _row_map(s: Schema, t: tuple) -> dict:
    return dict(zip(s.names, t))


def _match_weight(lrow, lkeys, right: BagRelation, rkeys) -> int:
    """Total multiplicity of right rows joining the given left row."""
    lv = [lrow[i] for i in lkeys]
    if any(v is None for v in lv):
        return 0
    w = 0
    for rt, rm in right.rows.items():
        rv = [rt[i] for i in rkeys]
        if any(v is None for v in rv):
            continue
        if lv == rv:
            w += rm
    return w


def evaluate_batch(expr, db: Database, schemas: Mapping[str, Schema] | None = None) -> BagRelation:
    """Evaluate a logical expression over concrete tables, bag semantics."""
    if schemas is None:
        schemas = {name: rel.schema for name, rel in db.tables.items()}
    out_schema = output_schema(expr, schemas)

    if isinstance(expr, Scan):
        return db[expr.table]

    if isinstance(expr, Filter):
        child = evaluate_batch(expr.child, db, schemas)
        out = BagRelation(out_schema)
        for t, m in child.rows.items():
            if eval_scalar(expr.pred, _row_map(child.schema, t)):
                out.add(t, m)
        return out

    if isinstance(expr, Project):
        child = evaluate_batch(expr.child, db, schemas)
        out = BagRelation(out_schema)
        for t, m in child.rows.items():
            row = _row_map(child.schema, t)
            out.add(tuple(eval_scalar(e, row) for _, e in expr.cols), m)
        return out

    if isinstance(expr, JOINS):
        left = evaluate_batch(expr.left, db, schemas)
        right = evaluate_batch(expr.right, db, schemas)
        lkeys = [left.schema.index(k) for k in expr.left_on]
        rkeys = [right.schema.index(k) for k in expr.right_on]
        keep = [
            i
            for i, c in enumerate(right.schema.columns)
            if c.name not in expr.right_on
        ]
        out = BagRelation(out_schema)
        for lt, lm in left.rows.items():
            lv = [lt[i] for i in lkeys]
            if isinstance(expr, InnerJoin) or isinstance(expr, LeftOuterJoin):
                if not any(v is None for v in lv):
                    for rt, rm in right.rows.items():
                        if [rt[i] for i in rkeys] == lv and not any(
                            rt[i] is None for i in rkeys
                        ):
                            out.add(lt + tuple(rt[i] for i in keep), lm * rm)
            w = _match_weight(lt, lkeys, right, rkeys)
            if isinstance(expr, LeftOuterJoin) and w == 0:
                out.add(lt + (None,) * len(keep), lm)
            elif isinstance(expr, LeftSemiJoin) and w != 0:
                out.add(lt, lm)
            elif isinstance(expr, LeftAntiJoin) and w == 0:
                out.add(lt, lm)
        return out

    if isinstance(expr, Aggregate):
        child = evaluate_batch(expr.child, db, schemas)
        state = expr.spec.iterate(child)
        return agg_final(state, expr.spec)

    if isinstance(expr, UnionAll):
        left = evaluate_batch(expr.left, db, schemas)
        right = evaluate_batch(expr.right, db, schemas)
        renamed = BagRelation(out_schema, dict(right.rows))
        return additive_union(BagRelation(out_schema, dict(left.rows)), renamed)

    raise TypeError(f"not a logical expression: {expr!r}")


def evaluate_on_accumulated(expr, arrivals, t) -> BagRelation:
    """Evaluate over the snapshots of every base table at time ``t``."""
    from .tvr import snapshot_at  # local import to avoid a cycle

    db = Database()
    schemas = {}
    for name, inp in arrivals.inputs.items():
        db[name] = snapshot_at(inp, t, arrivals.timeline)
        schemas[name] = inp.schema
    return evaluate_batch(expr, db, schemas)
