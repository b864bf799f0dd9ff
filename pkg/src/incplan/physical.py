"""Timed physical plans, temporal domains, and time-indexed cost functions.

A plan node carries its execution time; an edge whose producer runs
earlier than its consumer implies a Save at the producer's time and a
Load at the consumer's, unless the edge hands over retained state or the
producer persists its output as a by-product (Exchange).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bags import Schema
from .errors import ContractError
from .memo import Operator
from .ops import (
    CostFactors,
    DELTA_SCAN,
    EMPTY_SCAN,
    STATE_SCAN,
    TABLE_SCAN,
    persists_by_product,
    state_input_positions,
)


class CostVector:
    """Per-time-point nonnegative work, index-aligned with the timeline."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        self.entries = list(entries)
        if any(e < -1e-12 for e in self.entries):
            raise ContractError("cost entries must be nonnegative")

    @classmethod
    def zero(cls, k: int) -> "CostVector":
        return cls([0.0] * k)

    @classmethod
    def at(cls, k: int, t: int, value: float) -> "CostVector":
        v = [0.0] * k
        v[t] = value
        return cls(v)

    def __add__(self, other: "CostVector") -> "CostVector":
        if len(self.entries) != len(other.entries):
            raise ContractError("cost vector length mismatch")
        return CostVector([a + b for a, b in zip(self.entries, other.entries)])

    def __eq__(self, other):
        return isinstance(other, CostVector) and self.entries == other.entries

    def __repr__(self):
        return "(" + ", ".join(f"{e:g}" for e in self.entries) + ")"


@dataclass(frozen=True)
class WeightedSum:
    weights: tuple[float, ...]

    def __post_init__(self):
        if any(w < 0 for w in self.weights):
            raise ContractError("weights must be nonnegative")

    @property
    def strictly_increasing(self) -> bool:
        return all(a < b for a, b in zip(self.weights, self.weights[1:]))

    def key(self, v: CostVector):
        if len(v.entries) != len(self.weights):
            raise ContractError("cost vector length mismatch")
        return sum(w * c for w, c in zip(self.weights, v.entries))


@dataclass(frozen=True)
class ReverseLexical:
    """Compare entry-wise from the last time point backwards.

    The vector with the smaller cost at the latest differing point wins,
    so (100, 3) < (0, 4).
    """

    def key(self, v: CostVector):
        return tuple(reversed(v.entries))


CostFunction = WeightedSum | ReverseLexical


def reduce_cost(v: CostVector, f: CostFunction):
    return f.key(v)


def better(f: CostFunction, a: CostVector, b: CostVector) -> bool:
    return f.key(a) < f.key(b)


# ---------------------------------------------------------------------------
# Timed plans
# ---------------------------------------------------------------------------


@dataclass
class PlanNode:
    op: Operator
    schema: Schema
    children: list["PlanNode"]
    time: int
    group: int | None = None
    base_cost: float = 0.0
    nid: int = -1

    def assign_ids(self, start: int = 0) -> int:
        self.nid = start
        nxt = start + 1
        for c in self.children:
            nxt = c.assign_ids(nxt)
        return nxt

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass
class ImpliedTransfer:
    """A Save/Load pair implied by a cross-time edge."""

    producer: int  # node id
    consumer: int
    save_time: int
    load_time: int
    tuples: int
    by_product: bool


@dataclass
class MaterializedChoice:
    state_id: str
    node: PlanNode
    time: int
    group: int | None = None


@dataclass
class TimedPlan:
    k: int
    roots: list[tuple[int, PlanNode]]  # (required output point, tree)
    materialized: list[MaterializedChoice] = field(default_factory=list)
    cost_vector: CostVector | None = None

    def all_nodes(self):
        for _, root in self.roots:
            yield from root.walk()
        for m in self.materialized:
            yield from m.node.walk()

    def assign_ids(self):
        nxt = 0
        for m in self.materialized:
            nxt = m.node.assign_ids(nxt)
        for _, root in self.roots:
            nxt = root.assign_ids(nxt)
        return nxt


def availability(op: Operator, state_times: dict[str, int] | None = None) -> int | None:
    """Earliest time the operator's own data exists, None for interior ops."""
    if op.kind == TABLE_SCAN:
        return op.params[1]
    if op.kind == DELTA_SCAN:
        return op.params[2]
    if op.kind == STATE_SCAN:
        if state_times and op.params[0] in state_times:
            return state_times[op.params[0]]
        return 0
    if op.kind == EMPTY_SCAN:
        return 0
    return None


def temporal_domain(node: PlanNode, k: int, state_times: dict[str, int] | None = None) -> list[int]:
    """All timeline points at which the subtree's inputs are available."""
    avail = availability(node.op, state_times)
    lo = 0 if avail is None else avail
    for c in node.children:
        dom = temporal_domain(c, k, state_times)
        if not dom:
            return []
        lo = max(lo, dom[0])
    return list(range(lo, k))


@dataclass
class Violation:
    node: int
    reason: str


def validate_assignment(plan: TimedPlan, state_times: dict[str, int] | None = None) -> list[Violation]:
    """Check every node runs within its temporal domain, after its children."""
    plan.assign_ids()
    times = dict(state_times or {})
    for m in plan.materialized:
        times[m.state_id] = m.time
    bad: list[Violation] = []
    for _, root in plan.roots:
        _validate(root, plan.k, times, bad)
    for m in plan.materialized:
        _validate(m.node, plan.k, times, bad)
        if m.time != m.node.time:
            bad.append(Violation(m.node.nid, "materialization time disagrees with node time"))
    return bad


def _validate(node: PlanNode, k: int, state_times, bad: list[Violation]):
    dom = temporal_domain(node, k, state_times)
    if node.time not in dom:
        bad.append(Violation(node.nid, f"time t{node.time} outside temporal domain {dom}"))
    for c in node.children:
        if c.time > node.time:
            bad.append(Violation(node.nid, f"executes at t{node.time} before child at t{c.time}"))
        _validate(c, k, state_times, bad)


def implied_transfers(plan: TimedPlan, tuple_count_of) -> list[ImpliedTransfer]:
    """Save/Load pairs for every cross-time edge, flagging by-product ones."""
    plan.assign_ids()
    out: list[ImpliedTransfer] = []

    def visit(node: PlanNode):
        state_pos = state_input_positions(node.op)
        for i, c in enumerate(node.children):
            if c.time < node.time:
                free = i in state_pos or persists_by_product(c.op)
                out.append(
                    ImpliedTransfer(
                        c.nid, node.nid, c.time, node.time, tuple_count_of(c), free
                    )
                )
            visit(c)

    for _, root in plan.roots:
        visit(root)
    for m in plan.materialized:
        visit(m.node)
    return out


def plan_cost_vector(
    plan: TimedPlan,
    tuple_count_of,
    factors: CostFactors,
) -> CostVector:
    """Execution cost plus Save/Load charges at every non-by-product crossing."""
    vec = [0.0] * plan.k
    for node in plan.all_nodes():
        vec[node.time] += node.base_cost
    for tr in implied_transfers(plan, tuple_count_of):
        if tr.by_product:
            continue
        vec[tr.save_time] += factors.save * tr.tuples
        vec[tr.load_time] += factors.load * tr.tuples
    return CostVector(vec)
