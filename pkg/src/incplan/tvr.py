"""Timelines, per-table arrival scripts, and snapshot/delta views.

A time-varying relation is presented here through its arrival script:
the delta newly available at each time point.  Snapshots accumulate the
deltas; deltas between two points recombine recorded arrivals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .bags import BagRelation, MergeKind, MergeOperator, Schema, additive_union
from .errors import ContractError, RangeError


@dataclass(frozen=True)
class TimePoint:
    index: int
    label: str | None = None

    def __repr__(self):
        return f"t{self.index}" if self.label is None else f"t{self.index}({self.label})"


class Timeline:
    def __init__(self, labels_or_k):
        if isinstance(labels_or_k, int):
            labels = [None] * labels_or_k
        else:
            labels = list(labels_or_k)
        if not labels:
            raise ContractError("a timeline needs at least one point")
        self.points = [TimePoint(i, lbl) for i, lbl in enumerate(labels)]

    @property
    def k(self) -> int:
        return len(self.points)

    @property
    def indices(self) -> list[int]:
        return list(range(self.k))

    @property
    def final(self) -> int:
        return self.k - 1

    def check(self, t: int) -> int:
        if not 0 <= t < self.k:
            raise RangeError(f"time point {t} outside timeline of {self.k} points")
        return t

    def label(self, t: int) -> str:
        p = self.points[self.check(t)]
        return p.label if p.label is not None else f"t{t}"

    def __repr__(self):
        return f"Timeline({[self.label(i) for i in self.indices]})"


@dataclass
class TvrInput:
    """Arrival script of one base table: the delta available at each point."""

    table: str
    schema: Schema
    deltas: dict[int, BagRelation] = field(default_factory=dict)
    perspective: MergeOperator = MergeOperator(MergeKind.MULTIPLICITY_UNION)

    def delta_at(self, t: int) -> BagRelation:
        rel = self.deltas.get(t)
        return rel if rel is not None else BagRelation(self.schema)

    def validate(self, timeline: Timeline) -> None:
        for t, rel in self.deltas.items():
            timeline.check(t)
            if not rel.schema.compatible(self.schema):
                raise ContractError(f"delta schema mismatch for table {self.table!r}")
        for t in timeline.indices:
            if not snapshot_at(self, t, timeline).is_snapshot():
                raise ContractError(
                    f"arrivals over-retract: snapshot of {self.table!r} at t{t} "
                    "has a negative multiplicity"
                )


def snapshot_at(inp: TvrInput, t: int, timeline: Timeline) -> BagRelation:
    """Merge of all deltas at points <= t."""
    timeline.check(t)
    acc = BagRelation(inp.schema)
    for i in range(t + 1):
        acc = inp.perspective.merge(acc, inp.delta_at(i))
    return acc


def delta_between(inp: TvrInput, t: int, t2: int, timeline: Timeline) -> BagRelation:
    """The delta carrying snapshot_at(t) to snapshot_at(t2) under the merge operator."""
    timeline.check(t)
    timeline.check(t2)
    if not t < t2:
        raise RangeError(f"delta requires t < t2, got {t} >= {t2}")
    if inp.perspective.kind is MergeKind.MULTIPLICITY_UNION:
        acc = BagRelation(inp.schema)
        for i in range(t + 1, t2 + 1):
            acc = additive_union(acc, inp.delta_at(i))
        return acc
    if not inp.perspective.invertible:
        raise ContractError("attribute perspective without an inverse cannot rebuild deltas")
    acc = inp.delta_at(t + 1)
    for i in range(t + 2, t2 + 1):
        acc = inp.perspective.merge(acc, inp.delta_at(i))
    return acc


class ArrivalSet:
    """All base-table arrival scripts of one planning session."""

    def __init__(self, timeline: Timeline, inputs: Mapping[str, TvrInput]):
        self.timeline = timeline
        self.inputs: dict[str, TvrInput] = dict(inputs)
        for inp in self.inputs.values():
            inp.validate(timeline)

    def snapshot(self, table: str, t: int) -> BagRelation:
        return snapshot_at(self._get(table), t, self.timeline)

    def delta(self, table: str, t: int, t2: int) -> BagRelation:
        return delta_between(self._get(table), t, t2, self.timeline)

    def schema(self, table: str) -> Schema:
        return self._get(table).schema

    def schemas(self) -> dict[str, Schema]:
        return {name: inp.schema for name, inp in self.inputs.items()}

    def availability(self, table: str) -> int:
        """First point at or after which the table may be scanned (always 0:
        an empty prefix is a valid snapshot)."""
        self._get(table)
        return 0

    def _get(self, table: str) -> TvrInput:
        if table not in self.inputs:
            raise NameError(f"unknown table {table!r}")
        return self.inputs[table]


@dataclass
class OutputRequirement:
    """Required query per time point; points without an entry demand nothing."""

    queries: dict[int, object]

    def __post_init__(self):
        if not self.queries:
            raise ContractError("at least one output requirement is needed")

    def points(self) -> list[int]:
        return sorted(self.queries)

    def at(self, t: int):
        return self.queries.get(t)
