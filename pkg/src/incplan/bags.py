"""Bag-semantics relations and the snapshot/delta merge operator family.

Relations are finite maps from row tuples to signed multiplicities.  A
snapshot keeps all multiplicities positive; a delta may carry negative
entries (retractions).  Two delta encodings coexist: the multiplicity
perspective merged by additive union, and the attribute perspective in
which keyed aggregate states are merged column-wise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping

from .errors import ContractError, NotInvertibleError, SchemaError

INT = "int"
FLOAT = "float"
TEXT = "text"

#: Name of the contributing-tuple count column carried by aggregate states.
ROWS_COL = "_rows"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = INT
    nullable: bool = False

    def __post_init__(self):
        if self.kind not in (INT, FLOAT, TEXT, "state"):
            raise SchemaError(f"unknown column kind {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    key: tuple[str, ...] | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        if self.key is not None:
            missing = set(self.key) - set(names)
            if missing:
                raise SchemaError(f"key columns {sorted(missing)} not in schema")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise SchemaError(f"no column {name!r} in {self.names}")

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    @property
    def arity(self) -> int:
        return len(self.columns)

    def compatible(self, other: "Schema") -> bool:
        """Same column names and kinds; key and nullability may differ."""
        return [(c.name, c.kind) for c in self.columns] == [
            (c.name, c.kind) for c in other.columns
        ]


def schema(cols: Iterable[tuple], key: Iterable[str] | None = None) -> Schema:
    """Shorthand: ``schema([("o_id", TEXT), ("price", INT)])``."""
    built = []
    for spec in cols:
        if isinstance(spec, Column):
            built.append(spec)
        else:
            name, kind = spec[0], spec[1]
            nullable = spec[2] if len(spec) > 2 else True
            built.append(Column(name, kind, nullable))
    return Schema(tuple(built), tuple(key) if key is not None else None)


def check_row(s: Schema, row: tuple) -> tuple:
    if len(row) != s.arity:
        raise SchemaError(f"row arity {len(row)} != schema arity {s.arity}")
    for v, col in zip(row, s.columns):
        if v is None and not col.nullable:
            raise SchemaError(f"null in non-nullable column {col.name!r}")
    return tuple(row)


class BagRelation:
    """A normalized bag: no entry has multiplicity zero."""

    __slots__ = ("schema", "rows")

    def __init__(self, schema: Schema, rows: Mapping[tuple, int] | None = None):
        self.schema = schema
        self.rows: dict[tuple, int] = {}
        if rows:
            for t, m in rows.items():
                if m:
                    self.rows[tuple(t)] = self.rows.get(tuple(t), 0) + m
            self.rows = {t: m for t, m in self.rows.items() if m}

    @classmethod
    def from_rows(cls, s: Schema, rows: Iterable[tuple], mults: Iterable[int] | None = None):
        rel = cls(s)
        rows = list(rows)
        if mults is None:
            mults = [1] * len(rows)
        for t, m in zip(rows, mults):
            rel.add(check_row(s, t), m)
        return rel

    def add(self, row: tuple, mult: int = 1) -> None:
        if not mult:
            return
        row = tuple(row)
        m = self.rows.get(row, 0) + mult
        if m:
            self.rows[row] = m
        else:
            self.rows.pop(row, None)

    def is_snapshot(self) -> bool:
        return all(m > 0 for m in self.rows.values())

    def is_empty(self) -> bool:
        return not self.rows

    def tuple_count(self) -> int:
        """Total tuples counting multiplicities; retractions count once each."""
        return sum(abs(m) for m in self.rows.values())

    def copy(self) -> "BagRelation":
        return BagRelation(self.schema, dict(self.rows))

    def sorted_entries(self) -> list[tuple[tuple, int]]:
        return sorted(self.rows.items(), key=lambda kv: (_sort_key(kv[0]), kv[1]))

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows.items())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BagRelation)
            and self.schema.names == other.schema.names
            and self.rows == other.rows
        )

    def __repr__(self) -> str:
        inner = ", ".join(f"{t}:{m:+d}" for t, m in self.sorted_entries())
        return f"Bag[{'|'.join(self.schema.names)}]{{{inner}}}"


def _sort_key(row: tuple):
    return tuple((v is None, str(type(v).__name__), str(v)) for v in row)


def bags_equal(a: BagRelation, b: BagRelation, tol: float = 1e-9) -> bool:
    """Equality with absolute tolerance on float fields."""
    if a.schema.names != b.schema.names:
        return False
    if len(a.rows) != len(b.rows):
        return False
    if a.rows == b.rows:
        return True
    bv = list(b.rows.items())
    matched = [False] * len(bv)
    for t, m in a.rows.items():
        hit = False
        for i, (u, n) in enumerate(bv):
            if matched[i] or m != n:
                continue
            if _rows_close(t, u, tol):
                matched[i] = True
                hit = True
                break
        if not hit:
            return False
    return True


def _rows_close(t: tuple, u: tuple, tol: float) -> bool:
    if len(t) != len(u):
        return False
    for x, y in zip(t, u):
        if isinstance(x, float) or isinstance(y, float):
            if x is None or y is None:
                if x is not y:
                    return False
            elif not math.isclose(x, y, rel_tol=0.0, abs_tol=tol):
                return False
        elif x != y:
            return False
    return True


# ---------------------------------------------------------------------------
# Multiplicity-perspective merge and inverse
# ---------------------------------------------------------------------------

def additive_union(a: BagRelation, b: BagRelation) -> BagRelation:
    """Merge two bags by adding up per-tuple multiplicities."""
    if not a.schema.compatible(b.schema):
        raise SchemaError(f"schema mismatch: {a.schema.names} vs {b.schema.names}")
    out = a.copy()
    for t, m in b.rows.items():
        out.add(t, m)
    return out


def bag_difference(a: BagRelation, b: BagRelation) -> BagRelation:
    """Inverse of additive_union: additive_union(b, result) == a."""
    if not a.schema.compatible(b.schema):
        raise SchemaError(f"schema mismatch: {a.schema.names} vs {b.schema.names}")
    out = a.copy()
    for t, m in b.rows.items():
        out.add(t, -m)
    return out


# ---------------------------------------------------------------------------
# Attribute-perspective merge and inverse
# ---------------------------------------------------------------------------

class Combiner(Enum):
    SUM = "sum"
    COUNT = "count"
    AVG_PAIR = "avg_pair"  # column value is a (running sum, running count) pair
    MIN = "min"
    MAX = "max"
    FULL_STATE = "full_state"  # column value is the full multiset of inputs

    @property
    def invertible(self) -> bool:
        return self in (Combiner.SUM, Combiner.COUNT, Combiner.AVG_PAIR)


class MergeKind(Enum):
    MULTIPLICITY_UNION = "multiplicity"
    ATTRIBUTE_MERGE = "attribute"


@dataclass(frozen=True)
class MergeOperator:
    """Either additive union or a per-key column-wise merge of states."""

    kind: MergeKind
    key: tuple[str, ...] = ()
    combiners: Mapping[str, Combiner] = field(default_factory=dict)

    @property
    def invertible(self) -> bool:
        if self.kind is MergeKind.MULTIPLICITY_UNION:
            return True
        return all(c.invertible for c in self.combiners.values())

    def merge(self, a: BagRelation, b: BagRelation) -> BagRelation:
        if self.kind is MergeKind.MULTIPLICITY_UNION:
            return additive_union(a, b)
        return attribute_merge(a, b, self)

    def inverse(self, a: BagRelation, b: BagRelation) -> BagRelation:
        if self.kind is MergeKind.MULTIPLICITY_UNION:
            return bag_difference(a, b)
        return attribute_inverse(a, b, self)


def _combine(comb: Combiner, x, y, negate_y: bool = False):
    if comb is Combiner.SUM or comb is Combiner.COUNT:
        return x + (-y if negate_y else y)
    if comb is Combiner.AVG_PAIR:
        xs, xc = x
        ys, yc = y
        if negate_y:
            ys, yc = -ys, -yc
        return (xs + ys, xc + yc)
    if comb is Combiner.MIN:
        if negate_y:
            raise NotInvertibleError("MIN state has no inverse")
        return x if x <= y else y
    if comb is Combiner.MAX:
        if negate_y:
            raise NotInvertibleError("MAX state has no inverse")
        return x if x >= y else y
    if comb is Combiner.FULL_STATE:
        if negate_y:
            raise NotInvertibleError("full-state aggregate has no inverse")
        return tuple(sorted(x + y))
    raise TypeError(f"column cannot be combined with {comb}")


def _keyed(rel: BagRelation, key: tuple[str, ...]) -> dict[tuple, tuple]:
    idx = [rel.schema.index(k) for k in key]
    out: dict[tuple, tuple] = {}
    for t, m in rel.rows.items():
        if m != 1:
            raise ContractError("attribute-perspective states carry multiplicity 1")
        k = tuple(t[i] for i in idx)
        if k in out:
            raise ContractError(f"duplicate key {k} in attribute-perspective state")
        out[k] = t
    return out


def attribute_merge(a: BagRelation, b: BagRelation, m: MergeOperator) -> BagRelation:
    """Join states on key and combine aggregate columns; unmatched rows pass through."""
    if m.kind is not MergeKind.ATTRIBUTE_MERGE:
        raise ContractError("attribute_merge requires an AttributeMerge operator")
    if not m.key:
        raise KeyError("attribute merge requires a key")
    if not a.schema.compatible(b.schema):
        raise SchemaError(f"schema mismatch: {a.schema.names} vs {b.schema.names}")
    ka, kb = _keyed(a, m.key), _keyed(b, m.key)
    out = BagRelation(a.schema)
    names = a.schema.names
    for k in list(ka.keys()) + [k for k in kb if k not in ka]:
        ta, tb = ka.get(k), kb.get(k)
        if ta is None:
            out.add(tb, 1)
        elif tb is None:
            out.add(ta, 1)
        else:
            merged = []
            for name, x, y in zip(names, ta, tb):
                if name in m.combiners:
                    merged.append(_combine(m.combiners[name], x, y))
                elif x == y:
                    merged.append(x)
                else:
                    raise TypeError(f"non-combined column {name!r} disagrees: {x} vs {y}")
            out.add(tuple(merged), 1)
    return out


def attribute_inverse(a: BagRelation, b: BagRelation, m: MergeOperator) -> BagRelation:
    """Per-key subtraction: attribute_merge(b, result, m) == a."""
    if m.kind is not MergeKind.ATTRIBUTE_MERGE:
        raise ContractError("attribute_inverse requires an AttributeMerge operator")
    bad = [n for n, c in m.combiners.items() if not c.invertible]
    if bad:
        raise NotInvertibleError(f"combiners for {bad} have no inverse")
    ka, kb = _keyed(a, m.key), _keyed(b, m.key)
    out = BagRelation(a.schema)
    names = a.schema.names
    for k in list(ka.keys()) + [k for k in kb if k not in ka]:
        ta, tb = ka.get(k), kb.get(k)
        if tb is None:
            out.add(ta, 1)
            continue
        if ta is None:
            # key present only in the subtrahend: result must cancel it
            ta = _zero_like(tb, names, m)
        diff = []
        for name, x, y in zip(names, ta, tb):
            if name in m.combiners:
                diff.append(_combine(m.combiners[name], x, y, negate_y=True))
            elif x == y:
                diff.append(x)
            else:
                raise TypeError(f"non-combined column {name!r} disagrees: {x} vs {y}")
        out.add(tuple(diff), 1)
    return out


def _zero_like(t: tuple, names: tuple[str, ...], m: MergeOperator) -> tuple:
    zeroed = []
    for name, v in zip(names, t):
        comb = m.combiners.get(name)
        if comb is None:
            zeroed.append(v)
        elif comb is Combiner.AVG_PAIR:
            zeroed.append((0, 0))
        else:
            zeroed.append(0)
    return tuple(zeroed)


def _is_zero_value(comb: Combiner, v) -> bool:
    if comb is Combiner.AVG_PAIR:
        return v == (0, 0)
    if comb in (Combiner.SUM, Combiner.COUNT):
        return v == 0
    return False


def normalize_state(rel: BagRelation, m: MergeOperator) -> BagRelation:
    """Drop rows whose combined columns are all zero.

    State rows persist with zero counts through merges and inverses; for
    comparing two states as TVR snapshots those rows carry no content.
    """
    if m.kind is MergeKind.MULTIPLICITY_UNION:
        return rel
    names = rel.schema.names
    out = BagRelation(rel.schema)
    for t, mult in rel.rows.items():
        combined = [
            (m.combiners[name], v) for name, v in zip(names, t) if name in m.combiners
        ]
        if combined and all(_is_zero_value(c, v) for c, v in combined):
            continue
        out.add(t, mult)
    return out


# ---------------------------------------------------------------------------
# Aggregate specifications (Initialize / Iterate / Merge / Final)
# ---------------------------------------------------------------------------

SUM = "sum"
COUNT = "count"
AVG = "avg"
MIN = "min"
MAX = "max"

_STATE_KIND = {SUM: FLOAT, COUNT: INT, AVG: "state", MIN: FLOAT, MAX: FLOAT}
_COMBINER = {
    SUM: Combiner.SUM,
    COUNT: Combiner.COUNT,
    AVG: Combiner.AVG_PAIR,
    MIN: Combiner.MIN,
    MAX: Combiner.MAX,
}


@dataclass(frozen=True)
class AggSpec:
    """Group-by aggregation described by the four-method distributed protocol.

    ``aggregates`` holds (output name, function, input column) triples.
    States are keyed bags: group keys, one state column per aggregate, and
    a trailing contributing-tuple count column.
    """

    group_keys: tuple[str, ...]
    aggregates: tuple[tuple[str, str, str], ...]

    def __post_init__(self):
        for _, fn, _ in self.aggregates:
            if fn not in (SUM, COUNT, AVG, MIN, MAX):
                raise ContractError(f"unknown aggregate function {fn!r}")
        names = list(self.group_keys) + [a[0] for a in self.aggregates]
        if len(set(names)) != len(names) or ROWS_COL in names:
            raise ContractError(f"aggregate output names collide: {names}")

    @property
    def invertible(self) -> bool:
        return all(fn not in (MIN, MAX) for _, fn, _ in self.aggregates)

    def state_schema(self, input_schema: Schema) -> Schema:
        cols = [input_schema.column(k) for k in self.group_keys]
        cols += [Column(name, _STATE_KIND[fn], True) for name, fn, _ in self.aggregates]
        cols.append(Column(ROWS_COL, INT, False))
        return Schema(tuple(cols), key=tuple(self.group_keys))

    def output_schema(self, input_schema: Schema) -> Schema:
        cols = [input_schema.column(k) for k in self.group_keys]
        for name, fn, col in self.aggregates:
            if fn == COUNT:
                kind = INT
            elif fn == AVG:
                kind = FLOAT
            else:
                kind = input_schema.column(col).kind
            cols.append(Column(name, kind, True))
        return Schema(tuple(cols), key=tuple(self.group_keys))

    def merge_operator(self) -> MergeOperator:
        combiners = {name: _COMBINER[fn] for name, fn, _ in self.aggregates}
        combiners[ROWS_COL] = Combiner.COUNT
        return MergeOperator(MergeKind.ATTRIBUTE_MERGE, tuple(self.group_keys), combiners)

    def initialize(self, input_schema: Schema) -> BagRelation:
        """Called once before any data is supplied: the empty state."""
        return BagRelation(self.state_schema(input_schema))

    def iterate(self, input_rel: BagRelation) -> BagRelation:
        """Fold an input bag into a fresh state; negative multiplicities retract."""
        s = input_rel.schema
        key_idx = [s.index(k) for k in self.group_keys]
        col_idx = [s.index(c) for _, _, c in self.aggregates]
        groups: dict[tuple, list] = {}
        for t, m in input_rel.rows.items():
            k = tuple(t[i] for i in key_idx)
            st = groups.get(k)
            if st is None:
                st = [self._init_value(fn) for _, fn, _ in self.aggregates] + [0]
                groups[k] = st
            for j, (name, fn, _) in enumerate(self.aggregates):
                v = t[col_idx[j]]
                st[j] = self._iterate_value(fn, st[j], v, m)
            st[-1] += m
        out = BagRelation(self.state_schema(s))
        for k, st in groups.items():
            out.add(k + tuple(st), 1)
        return out

    @staticmethod
    def _init_value(fn: str):
        if fn == AVG:
            return (0, 0)
        if fn in (MIN, MAX):
            return None
        return 0

    @staticmethod
    def _iterate_value(fn: str, acc, v, m: int):
        if v is None:
            return acc
        if fn == SUM:
            return acc + m * v
        if fn == COUNT:
            return acc + m
        if fn == AVG:
            return (acc[0] + m * v, acc[1] + m)
        if m < 0:
            raise NotInvertibleError(f"{fn.upper()} cannot retract inputs")
        if acc is None:
            return v
        return min(acc, v) if fn == MIN else max(acc, v)

    def merge(self, a: BagRelation, b: BagRelation) -> BagRelation:
        return attribute_merge(a, b, self.merge_operator())

    def final(self, state: BagRelation) -> BagRelation:
        return agg_final(state, self)


def agg_final(state: BagRelation, spec: AggSpec) -> BagRelation:
    """Convert an attribute-perspective state into plain result rows.

    Groups whose contributing-tuple count is zero are dropped; AVG states
    finalize as sum/count.
    """
    s = state.schema
    if ROWS_COL not in s.names:
        raise ContractError("aggregate state lacks the contributing-count column")
    rows_idx = s.index(ROWS_COL)
    key_idx = [s.index(k) for k in spec.group_keys]
    agg_idx = [s.index(name) for name, _, _ in spec.aggregates]
    # reconstruct the input-column kinds as far as the state records them
    out_cols = [s.column(k) for k in spec.group_keys]
    for name, fn, _ in spec.aggregates:
        kind = INT if fn == COUNT else (FLOAT if fn == AVG else s.column(name).kind)
        out_cols.append(Column(name, kind, True))
    out = BagRelation(Schema(tuple(out_cols), key=tuple(spec.group_keys)))
    for t, m in state.rows.items():
        if m != 1:
            raise ContractError("aggregate state rows must carry multiplicity 1")
        if t[rows_idx] == 0:
            continue
        vals = [t[i] for i in key_idx]
        for j, (_, fn, _) in enumerate(spec.aggregates):
            v = t[agg_idx[j]]
            if fn == AVG:
                sm, cnt = v
                vals.append(sm / cnt if cnt else None)
            else:
                vals.append(v)
        out.add(tuple(vals), 1)
    return out
