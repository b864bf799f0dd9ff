"""The running sales/returns example shared by many tests.

Arrivals:
    sales(o_id, cat, price):  o1..o4 at t0, o5..o7 at t1
    returns(o_id, cost):      o1 at t0, o2/o6 at t1
Queries:
    status  = sales left-outer-join returns on o_id
    summary = select cat, sum(if(cost is null, price, -cost)) group by cat
"""

from __future__ import annotations

from incplan.algebra import (
    Aggregate,
    Col,
    If,
    IsNull,
    LeftOuterJoin,
    Neg,
    Project,
    Scan,
)
from incplan.bags import AggSpec, BagRelation, INT, SUM, TEXT, schema
from incplan.tvr import ArrivalSet, Timeline, TvrInput

SALES_SCHEMA = schema([("o_id", TEXT, False), ("cat", TEXT, False), ("price", INT, False)])
RETURNS_SCHEMA = schema([("o_id", TEXT, False), ("cost", INT, False)])

SALES_T0 = [("o1", "c1", 100), ("o2", "c2", 150), ("o3", "c1", 120), ("o4", "c1", 170)]
SALES_T1 = [("o5", "c2", 300), ("o6", "c1", 150), ("o7", "c2", 220)]
RETURNS_T0 = [("o1", 10)]
RETURNS_T1 = [("o2", 20), ("o6", 15)]


def arrivals(sales_retraction_at_t1: bool = False) -> ArrivalSet:
    """The two-point arrival script; optionally retract the o4 sale at t1."""
    sales_d1 = BagRelation.from_rows(SALES_SCHEMA, SALES_T1)
    if sales_retraction_at_t1:
        sales_d1.add(("o4", "c1", 170), -1)
    return ArrivalSet(
        Timeline(["14:00", "24:00"]),
        {
            "sales": TvrInput(
                "sales",
                SALES_SCHEMA,
                {0: BagRelation.from_rows(SALES_SCHEMA, SALES_T0), 1: sales_d1},
            ),
            "returns": TvrInput(
                "returns",
                RETURNS_SCHEMA,
                {0: BagRelation.from_rows(RETURNS_SCHEMA, RETURNS_T0), 1: BagRelation.from_rows(RETURNS_SCHEMA, RETURNS_T1)},
            ),
        },
    )


def status_query():
    return LeftOuterJoin(("o_id",), ("o_id",), Scan("sales"), Scan("returns"))


def summary_spec() -> AggSpec:
    return AggSpec(("cat",), (("gross", SUM, "rev"),))


def summary_query():
    rev = If(IsNull(Col("cost")), Col("price"), Neg(Col("cost")))
    proj = Project((("cat", Col("cat")), ("rev", rev)), status_query())
    return Aggregate(summary_spec(), proj)


STATUS_AT_T1 = [
    ("o1", "c1", 100, 10),
    ("o2", "c2", 150, 20),
    ("o3", "c1", 120, None),
    ("o4", "c1", 170, None),
    ("o5", "c2", 300, None),
    ("o6", "c1", 150, 15),
    ("o7", "c2", 220, None),
]

STATUS_AT_T0 = [
    ("o1", "c1", 100, 10),
    ("o2", "c2", 150, None),
    ("o3", "c1", 120, None),
    ("o4", "c1", 170, None),
]

# the view-maintenance change set between the two points, retraction shaded
STATUS_CHANGES = {
    ("o2", "c2", 150, None): -1,
    ("o2", "c2", 150, 20): +1,
    ("o5", "c2", 300, None): +1,
    ("o6", "c1", 150, 15): +1,
    ("o7", "c2", 220, None): +1,
}

SUMMARY_AT_T0 = [("c1", 280), ("c2", 150)]
SUMMARY_AT_T1 = [("c1", 265), ("c2", 500)]
