"""The recursive query benchmark.

Sixteen recursive queries drawn from Datalog, program analysis, recursive SQL
and graph workloads, each with the property row it is expected to exhibit and
the datasets it runs on. ``write_corpus``/``read_corpus`` move the whole suite
to and from a directory (manifest, ir-v1 documents, CSV data).
"""

import json
import re
from dataclasses import dataclass, field
from enum import Enum, auto
from pathlib import Path
from typing import Any, Callable, Mapping

from fixql import logger
from fixql.checker import Property, check_all, violated_properties
from fixql.configs import (
    BENCH_ORACLE_CAP,
    CORPUS_DATA_DIR,
    CORPUS_MANIFEST,
    CORPUS_QUERIES_DIR,
    IR_VERSION,
)
from fixql.datasets import SCHEMAS, DatasetKind, DatasetSpec, gen_dataset
from fixql.dialects import Dialect, get_profile
from fixql.errors import ParseError, UncheckedQuery, UnsupportedFeature
from fixql.evalengine import Database, DiffReport, diff_test
from fixql.ir import (
    ExprLike,
    QueryNode,
    RowVar,
    ValueExpr,
    agg,
    and_,
    build_fix,
    build_table,
    op,
)
from fixql.models import Category
from fixql.serializers import deserialize_ir, serialize_ir
from fixql.sqlgen import emit
from fixql.utils import write_database


class Monotonicity(Enum):
    YES = auto()
    STRATIFIED = auto()
    NO = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "Monotonicity":
        return Monotonicity[value.upper()]

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(monotonicity) for monotonicity in Monotonicity]


@dataclass(frozen=True)
class Expectation:
    """One benchmark row: which restrictions a query satisfies.

    ``mutual`` is true when the query uses mutual recursion.
    """

    linear: bool
    monotone: Monotonicity
    set_semantic: bool
    mutual: bool
    constructor_free: bool

    def violated(self) -> set[Property]:
        violated = set()
        if not self.linear:
            violated.add(Property.LINEAR)
        if self.monotone == Monotonicity.NO:
            violated.add(Property.MONOTONE)
        if not self.set_semantic:
            violated.add(Property.SET)
        if self.mutual:
            violated.add(Property.MUTUAL)
        if not self.constructor_free:
            violated.add(Property.CF)
        return violated

    def to_dict(self) -> dict[str, Any]:
        return {
            "linear": self.linear,
            "monotone": str(self.monotone),
            "set": self.set_semantic,
            "mutual": self.mutual,
            "constructor_free": self.constructor_free,
        }

    @classmethod
    def from_dict(cls, value: Mapping[str, Any]) -> "Expectation":
        return Expectation(
            linear=bool(value["linear"]),
            monotone=Monotonicity.from_str(value["monotone"]),
            set_semantic=bool(value["set"]),
            mutual=bool(value["mutual"]),
            constructor_free=bool(value["constructor_free"]),
        )


@dataclass
class BenchQuery:
    name: str
    description: str
    ir: QueryNode
    expected: Expectation
    datasets: list[DatasetSpec] = field(default_factory=list)

    def __str__(self) -> str:
        return self.name

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "-", self.name.lower()).strip("-")

    @property
    def acyclic_datasets(self) -> list[DatasetSpec]:
        return [spec for spec in self.datasets if not spec.cyclic]

    @property
    def cyclic_datasets(self) -> list[DatasetSpec]:
        return [spec for spec in self.datasets if spec.cyclic]


@dataclass(frozen=True)
class Verdict:
    query: str
    expected: set[Property]
    actual: set[Property]

    @property
    def matches(self) -> bool:
        return self.expected == self.actual

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "expected": sorted(str(prop) for prop in self.expected),
            "actual": sorted(str(prop) for prop in self.actual),
            "match": self.matches,
        }


def verdict(entry: BenchQuery) -> Verdict:
    report = check_all(entry.ir, get_profile("full"))
    return Verdict(entry.name, entry.expected.violated(), violated_properties(report))


# builder shorthands


def table(name: str) -> QueryNode:
    return build_table(name, SCHEMAS[name])


def eq(left: ExprLike, right: ExprLike) -> ValueExpr:
    return op("==", left, right)


def joins(
    *sources: QueryNode,
    on: Callable[..., ValueExpr],
    select: Callable[..., Mapping[str, ExprLike]],
) -> QueryNode:
    """Join ``sources`` left to right as nested flatMaps.

    ``on`` and ``select`` receive one row variable per source; the predicate
    sits on the innermost source so the chain flattens into a single join.
    """

    def nest(bound: list[RowVar], rest: list[QueryNode]) -> QueryNode:
        head, *tail = rest
        if not tail:
            return head.filter(lambda var: on(*bound, var)).map(
                lambda var: select(*bound, var)
            )
        return head.flat_map(lambda var: nest(bound + [var], tail))

    return nest([], list(sources))


def empty(name: str) -> QueryNode:
    """A base with no rows, shaped like ``name``."""
    column = SCHEMAS[name].names()[0]
    return table(name).filter(lambda var: op("!=", var[column], var[column]))


# reference queries


def transitive_closure(category: Category = Category.SET) -> QueryNode:
    """Linear reachability over ``edges``, deduplicated per iteration when SET."""

    def step(path: QueryNode) -> QueryNode:
        reached = joins(
            path,
            table("edges"),
            on=lambda p, e: eq(p["y"], e["x"]),
            select=lambda p, e: {"x": p["x"], "y": e["y"]},
        )
        return reached.distinct() if category == Category.SET else reached

    return build_fix([table("edges")], step, names=["path"])


def nonlinear_transitive_closure() -> QueryNode:
    return build_fix(
        [table("edges")],
        lambda path: joins(
            path,
            path,
            on=lambda p1, p2: eq(p1["y"], p2["x"]),
            select=lambda p1, p2: {"x": p1["x"], "y": p2["y"]},
        ).distinct(),
        names=["path"],
    )


def all_subparts(part: str = "p0") -> QueryNode:
    return build_fix(
        [table("subparts").filter(lambda sp: eq(sp["part"], part))],
        lambda asp: joins(
            asp,
            table("subparts"),
            on=lambda a, sp: eq(sp["part"], a["sub"]),
            select=lambda a, sp: {"part": sp["part"], "sub": sp["sub"]},
        ),
        names=["allsubparts"],
    )


def bom_naive() -> QueryNode:
    """Delivery days per part with the MAX taken inside the recursion."""
    return build_fix(
        [table("basicparts")],
        lambda waitfor: joins(
            table("subparts"),
            waitfor,
            on=lambda sp, wf: eq(sp["sub"], wf["part"]),
            select=lambda sp, wf: {"part": sp["part"], "days": wf["days"]},
        )
        .group_by(
            lambda r: {"part": r["part"]},
            lambda r: {"part": r["part"], "days": agg("max", r["days"])},
        )
        .distinct(),
        names=["waitfor"],
    )


# benchmark queries


def even_odd() -> QueryNode:
    numbers = table("numbers")

    def successor(source: QueryNode) -> QueryNode:
        return joins(
            source,
            numbers,
            on=lambda s, num: eq(num["n"], op("+", s["n"], 1)),
            select=lambda s, num: {"n": num["n"]},
        ).distinct()

    return build_fix(
        [numbers.filter(lambda num: eq(num["n"], 0)), empty("numbers")],
        lambda even, odd: (successor(odd), successor(even)),
        names=["even", "odd"],
    )


def cspa() -> QueryNode:
    assign = table("assign")
    dereference = table("dereference")

    def reflexive() -> QueryNode:
        return assign.map(lambda a: {"x": a["x"], "y": a["x"]}).union(
            assign.map(lambda a: {"x": a["y"], "y": a["y"]})
        )

    def defs(
        value_flow: QueryNode, memory_alias: QueryNode, value_alias: QueryNode
    ) -> tuple[QueryNode, ...]:
        flow = joins(
            assign,
            memory_alias,
            on=lambda a, m: eq(a["y"], m["x"]),
            select=lambda a, m: {"x": a["x"], "y": m["y"]},
        ).union(
            joins(
                value_flow,
                value_flow,
                on=lambda f1, f2: eq(f1["y"], f2["x"]),
                select=lambda f1, f2: {"x": f1["x"], "y": f2["y"]},
            )
        )
        memory = joins(
            dereference,
            value_alias,
            dereference,
            on=lambda d1, va, d2: and_(eq(d1["x"], va["x"]), eq(va["y"], d2["x"])),
            select=lambda d1, va, d2: {"x": d1["y"], "y": d2["y"]},
        ).distinct()
        alias = joins(
            value_flow,
            value_flow,
            on=lambda f1, f2: eq(f1["x"], f2["x"]),
            select=lambda f1, f2: {"x": f1["y"], "y": f2["y"]},
        ).union(
            joins(
                value_flow,
                memory_alias,
                value_flow,
                on=lambda f1, m, f2: and_(eq(f1["x"], m["x"]), eq(m["y"], f2["x"])),
                select=lambda f1, m, f2: {"x": f1["y"], "y": f2["y"]},
            )
        )
        return flow, memory, alias

    return build_fix(
        [
            assign.map(lambda a: {"x": a["y"], "y": a["x"]}).union(reflexive()),
            reflexive(),
            reflexive(),
        ],
        defs,
        names=["valueflow", "memoryalias", "valuealias"],
    )


def company_control() -> QueryNode:
    owns = table("owns")

    def percent(o: RowVar) -> ValueExpr:
        return op("/", op("*", o["shares"], 100), o["outstanding"])

    def defs(shares: QueryNode, control: QueryNode) -> tuple[QueryNode, ...]:
        indirect = joins(
            control,
            owns,
            on=lambda c, o: eq(c["dst"], o["src"]),
            select=lambda c, o: {"src": c["src"], "dst": o["dst"], "pct": percent(o)},
        ).distinct()
        controlled = shares.group_by(
            lambda s: {"src": s["src"], "dst": s["dst"]},
            lambda s: {"src": s["src"], "dst": s["dst"]},
            having=lambda s: op(">", agg("sum", s["pct"]), 50),
        ).distinct()
        return indirect, controlled

    return build_fix(
        [
            owns.map(lambda o: {"src": o["src"], "dst": o["dst"], "pct": percent(o)}),
            owns.filter(lambda o: op(">", percent(o), 50)).map(
                lambda o: {"src": o["src"], "dst": o["dst"]}
            ),
        ],
        defs,
        names=["cshares", "control"],
        result=2,
    )


def _points_to(category: Category) -> QueryNode:
    assign, loads, stores = table("assign"), table("loads"), table("stores")

    def defs(points_to: QueryNode, heap: QueryNode) -> tuple[QueryNode, ...]:
        copied = joins(
            assign,
            points_to,
            on=lambda a, p: eq(a["y"], p["x"]),
            select=lambda a, p: {"x": a["x"], "y": p["y"]},
        )
        loaded = joins(
            loads,
            points_to,
            heap,
            on=lambda ld, p, h: and_(eq(ld["y"], p["x"]), eq(p["y"], h["x"]), eq(ld["f"], h["f"])),
            select=lambda ld, p, h: {"x": ld["x"], "y": h["y"]},
        )
        stored = joins(
            stores,
            points_to,
            points_to,
            on=lambda s, p1, p2: and_(eq(s["x"], p1["x"]), eq(s["y"], p2["x"])),
            select=lambda s, p1, p2: {"x": p1["y"], "f": s["f"], "y": p2["y"]},
        )
        if category == Category.SET:
            return copied.union(loaded), stored.distinct()
        return copied.union_all(loaded), stored

    return build_fix(
        [table("allocs"), empty("stores")],
        defs,
        names=["pointsto", "heappointsto"],
    )


def points_to_count() -> QueryNode:
    return _points_to(Category.SET).group_by(
        lambda p: {"x": p["x"]},
        lambda p: {"x": p["x"], "objects": agg("count", p["y"])},
    )


def java_points_to() -> QueryNode:
    return _points_to(Category.BAG)


def chain_of_trust() -> QueryNode:
    friends, colleagues = table("friends"), table("colleagues")
    return build_fix(
        [friends, colleagues],
        lambda trust, vouch: (
            joins(
                friends,
                vouch,
                on=lambda f, v: eq(f["dst"], v["src"]),
                select=lambda f, v: {"src": f["src"], "dst": v["dst"]},
            ),
            joins(
                trust,
                colleagues,
                on=lambda t, c: eq(t["dst"], c["src"]),
                select=lambda t, c: {"src": t["src"], "dst": c["dst"]},
            ),
        ),
        names=["trust", "vouch"],
    )


def party() -> QueryNode:
    organizers, friends, degree = table("organizers"), table("friends"), table("degree")

    def defs(attend: QueryNode, counted: QueryNode) -> tuple[QueryNode, ...]:
        joining = joins(
            counted,
            degree,
            on=lambda c, d: and_(
                eq(c["person"], d["person"]), op(">=", op("*", c["n"], 2), d["total"])
            ),
            select=lambda c, d: {"person": c["person"]},
        ).distinct()
        invited = joins(
            attend,
            friends,
            on=lambda a, f: eq(a["person"], f["src"]),
            select=lambda a, f: {"person": f["dst"]},
        ).group_by(
            lambda r: {"person": r["person"]},
            lambda r: {"person": r["person"], "n": agg("count", r["person"])},
        )
        return joining, invited

    return build_fix(
        [organizers, organizers.map(lambda o: {"person": o["person"], "n": 0})],
        defs,
        names=["attend", "cnt"],
    )


def constraint_based_analysis() -> QueryNode:
    assign, invokes = table("assign"), table("invokes")

    def defs(flows: QueryNode, calls: QueryNode) -> tuple[QueryNode, ...]:
        flowing = joins(
            flows,
            flows,
            on=lambda f1, f2: eq(f1["y"], f2["x"]),
            select=lambda f1, f2: {"x": f1["x"], "y": f2["y"]},
        ).union_all(
            joins(
                calls,
                assign,
                on=lambda c, a: eq(c["y"], a["x"]),
                select=lambda c, a: {"x": c["x"], "y": a["y"]},
            )
        )
        calling = joins(
            flows,
            invokes,
            on=lambda f, i: eq(f["y"], i["x"]),
            select=lambda f, i: {"x": f["x"], "y": i["y"]},
        )
        return flowing, calling

    return build_fix([assign, invokes], defs, names=["flows", "calls"]).group_by(
        lambda f: {"x": f["x"]},
        lambda f: {"x": f["x"], "reached": agg("count", f["y"])},
    )


def sssp() -> QueryNode:
    shortest = build_fix(
        [table("base")],
        lambda path: joins(
            table("edge"),
            path,
            on=lambda e, p: eq(p["dst"], e["src"]),
            select=lambda e, p: {"dst": e["dst"], "cst": op("+", p["cst"], e["cst"])},
        ).distinct(),
        names=["path"],
    )
    return shortest.group_by(
        lambda p: {"dst": p["dst"]},
        lambda p: {"dst": p["dst"], "cst": agg("min", p["cst"])},
    )


def ancestry(person: int = 0) -> QueryNode:
    parent = table("parent")
    return build_fix(
        [
            parent.filter(lambda p: eq(p["parent"], person)).map(
                lambda p: {"person": p["child"], "gen": 1}
            )
        ],
        lambda descendants: joins(
            descendants,
            parent,
            on=lambda d, p: eq(d["person"], p["parent"]),
            select=lambda d, p: {"person": p["child"], "gen": op("+", d["gen"], 1)},
        ).distinct(),
        names=["descendants"],
    )


def andersen_points_to() -> QueryNode:
    assign, dereference = table("assign"), table("dereference")
    return build_fix(
        [table("allocs")],
        lambda points_to: joins(
            assign,
            points_to,
            on=lambda a, p: eq(a["y"], p["x"]),
            select=lambda a, p: {"x": a["x"], "y": p["y"]},
        ).union(
            joins(
                dereference,
                points_to,
                points_to,
                on=lambda d, p1, p2: and_(eq(d["y"], p1["x"]), eq(p1["y"], p2["x"])),
                select=lambda d, p1, p2: {"x": d["x"], "y": p2["y"]},
            )
        ),
        names=["pointsto"],
    )


def apsp() -> QueryNode:
    edge = table("edge")
    return build_fix(
        [edge],
        lambda path: joins(
            path,
            path,
            on=lambda p1, p2: eq(p1["dst"], p2["src"]),
            select=lambda p1, p2: {
                "src": p1["src"],
                "dst": p2["dst"],
                "cst": op("+", p1["cst"], p2["cst"]),
            },
        )
        .group_by(
            lambda p: {"src": p["src"], "dst": p["dst"]},
            lambda p: {"src": p["src"], "dst": p["dst"], "cst": agg("min", p["cst"])},
        )
        .distinct(),
        names=["path"],
    )


def _node_marker(node: ValueExpr) -> ValueExpr:
    return op("||", op("to_text", node), "/")


def graphalytics_tc() -> QueryNode:
    """Reachability that carries the visited nodes as ``/a/b/.../`` text."""
    edges = table("edges")
    return build_fix(
        [
            edges.map(
                lambda e: {
                    "x": e["x"],
                    "y": e["y"],
                    "visited": op("||", op("||", "/", _node_marker(e["x"])), _node_marker(e["y"])),
                }
            )
        ],
        lambda path: joins(
            path,
            edges,
            on=lambda p, e: and_(
                eq(p["y"], e["x"]),
                op("not", op("contains", p["visited"], op("||", "/", _node_marker(e["y"])))),
            ),
            select=lambda p, e: {
                "x": p["x"],
                "y": e["y"],
                "visited": op("||", p["visited"], _node_marker(e["y"])),
            },
        ),
        names=["path"],
    )


def bom() -> QueryNode:
    waitfor = build_fix(
        [table("basicparts")],
        lambda waitfor: joins(
            table("subparts"),
            waitfor,
            on=lambda sp, wf: eq(sp["sub"], wf["part"]),
            select=lambda sp, wf: {"part": sp["part"], "days": wf["days"]},
        ),
        names=["waitfor"],
    )
    return waitfor.group_by(
        lambda w: {"part": w["part"]},
        lambda w: {"part": w["part"], "days": agg("max", w["days"])},
    )


def orbits() -> QueryNode:
    orbiting = build_fix(
        [table("edges")],
        lambda orbit: joins(
            orbit,
            orbit,
            on=lambda o1, o2: eq(o1["y"], o2["x"]),
            select=lambda o1, o2: {"x": o1["x"], "y": o2["y"]},
        ),
        names=["orbits"],
    )
    return orbiting.group_by(
        lambda o: {"x": o["x"]},
        lambda o: {"x": o["x"], "around": agg("count", o["y"])},
    )


def data_flow() -> QueryNode:
    flow = build_fix(
        [table("jumps")],
        lambda flow: joins(
            flow,
            flow,
            on=lambda f1, f2: eq(f1["y"], f2["x"]),
            select=lambda f1, f2: {"x": f1["x"], "y": f2["y"]},
        ),
        names=["flow"],
    )
    return joins(
        table("writes"),
        flow,
        table("reads"),
        on=lambda w, f, r: and_(eq(w["x"], f["x"]), eq(f["y"], r["x"]), eq(w["v"], r["v"])),
        select=lambda w, f, r: {"writer": w["x"], "reader": r["x"], "v": w["v"]},
    )


def _datasets(kind: DatasetKind, size: int, cyclic: bool = True) -> list[DatasetSpec]:
    specs = [DatasetSpec(kind, size, seed) for seed in (1, 2, 3)]
    if cyclic:
        specs.append(DatasetSpec(kind, size, 1, cyclic=True))
    return specs


# columns: linear, monotone, set, uses mutual recursion, constructor-free
Y, N = True, False
YES, STRATIFIED, NO = Monotonicity.YES, Monotonicity.STRATIFIED, Monotonicity.NO

BENCHMARK: list[tuple[str, str, Callable[[], QueryNode], Expectation, list[DatasetSpec]]] = [
    (
        "Even-Odd",
        "Even and odd numbers defined in terms of each other.",
        even_odd,
        Expectation(Y, YES, Y, Y, N),
        _datasets(DatasetKind.NUMBER_RANGE, 12, cyclic=False),
    ),
    (
        "CSPA",
        "Value-flow and alias analysis over assignments and dereferences.",
        cspa,
        Expectation(N, YES, Y, Y, Y),
        _datasets(DatasetKind.ASSIGN_GRAPH, 10),
    ),
    (
        "CC",
        "Companies controlled directly or through controlled companies.",
        company_control,
        Expectation(Y, NO, Y, Y, N),
        _datasets(DatasetKind.OWNERSHIP_GRAPH, 8),
    ),
    (
        "PTC",
        "Number of heap objects each variable may point to.",
        points_to_count,
        Expectation(N, STRATIFIED, Y, Y, Y),
        _datasets(DatasetKind.ASSIGN_GRAPH, 10),
    ),
    (
        "COT",
        "Trust through friends and colleagues who vouch for each other.",
        chain_of_trust,
        Expectation(Y, YES, N, Y, Y),
        _datasets(DatasetKind.SOCIAL_GRAPH, 8),
    ),
    (
        "JPT",
        "Field-sensitive points-to analysis keeping every derivation.",
        java_points_to,
        Expectation(N, YES, N, Y, Y),
        _datasets(DatasetKind.ASSIGN_GRAPH, 8),
    ),
    (
        "Party",
        "People attend once enough of their friends attend.",
        party,
        Expectation(Y, NO, N, Y, N),
        _datasets(DatasetKind.SOCIAL_GRAPH, 8),
    ),
    (
        "CBA",
        "Value flows through assignments and calls, counted per source.",
        constraint_based_analysis,
        Expectation(N, STRATIFIED, N, Y, Y),
        _datasets(DatasetKind.ASSIGN_GRAPH, 8),
    ),
    (
        "SSSP",
        "Cheapest path cost from node 0 to every reachable node.",
        sssp,
        Expectation(Y, STRATIFIED, Y, N, N),
        _datasets(DatasetKind.WEIGHTED_GRAPH, 10),
    ),
    (
        "Ancestry",
        "Descendants of a person together with their generation.",
        ancestry,
        Expectation(Y, YES, Y, N, N),
        _datasets(DatasetKind.FAMILY_TREE, 12, cyclic=False),
    ),
    (
        "APT",
        "Flow-insensitive points-to analysis over one relation.",
        andersen_points_to,
        Expectation(N, YES, Y, N, Y),
        _datasets(DatasetKind.ASSIGN_GRAPH, 10),
    ),
    (
        "APSP",
        "Cheapest path cost between every pair of nodes.",
        apsp,
        Expectation(N, NO, Y, N, N),
        _datasets(DatasetKind.WEIGHTED_GRAPH, 6),
    ),
    (
        "TC",
        "Reachability on cyclic graphs that tracks visited nodes.",
        graphalytics_tc,
        Expectation(Y, YES, N, N, N),
        [DatasetSpec(DatasetKind.RANDOM_DAG, 12, seed) for seed in (1, 2, 3)]
        + [DatasetSpec(DatasetKind.CYCLE_GRAPH, 4)],
    ),
    (
        "BOM",
        "Days until a product and all its subparts can be delivered.",
        bom,
        Expectation(Y, STRATIFIED, N, N, Y),
        _datasets(DatasetKind.BOM_HIERARCHY, 10),
    ),
    (
        "Orbits",
        "Objects orbiting other objects, directly or indirectly.",
        orbits,
        Expectation(N, STRATIFIED, N, N, Y),
        [DatasetSpec(DatasetKind.RANDOM_DAG, 8, seed) for seed in (1, 2, 3)]
        + [DatasetSpec(DatasetKind.CYCLE_GRAPH, 3)],
    ),
    (
        "Data Flow",
        "Writes that reach reads of the same variable along jumps.",
        data_flow,
        Expectation(N, YES, N, N, Y),
        _datasets(DatasetKind.ASSIGN_GRAPH, 8),
    ),
]


def build_corpus() -> list[BenchQuery]:
    return [
        BenchQuery(name, description, builder(), expected, list(specs))
        for name, description, builder, expected, specs in BENCHMARK
    ]


def corpus_names() -> list[str]:
    return [name for name, *_ in BENCHMARK]


def get_query(name: str) -> BenchQuery:
    for entry in build_corpus():
        if entry.name.lower() == name.lower() or entry.slug == name.lower():
            return entry
    raise KeyError(f"Unknown benchmark query '{name}', valid: {corpus_names()}")


def write_corpus(directory: str | Path, entries: list[BenchQuery] | None = None) -> Path:
    """Materialize the manifest, one ir-v1 document per query and every dataset."""

    root = Path(directory).expanduser()
    queries_dir = root.joinpath(CORPUS_QUERIES_DIR)
    queries_dir.mkdir(parents=True, exist_ok=True)
    entries = build_corpus() if entries is None else entries

    written: set[str] = set()
    manifest: list[dict[str, Any]] = []
    for entry in entries:
        ir_path = queries_dir.joinpath(f"{entry.slug}.json")
        ir_path.write_text(serialize_ir(entry.ir), encoding="utf-8")
        datasets = []
        for spec in entry.datasets:
            data_path = f"{CORPUS_DATA_DIR}/{spec}"
            if data_path not in written:
                write_database(gen_dataset(spec), root.joinpath(data_path))
                written.add(data_path)
            datasets.append({**spec.to_dict(), "path": data_path})
        manifest.append(
            {
                "name": entry.name,
                "description": entry.description,
                "ir": f"{CORPUS_QUERIES_DIR}/{ir_path.name}",
                "expected": entry.expected.to_dict(),
                "datasets": datasets,
            }
        )

    root.joinpath(CORPUS_MANIFEST).write_text(
        json.dumps({"version": IR_VERSION, "queries": manifest}, indent=2) + "\n",
        encoding="utf-8",
    )
    logger.info("Wrote %d benchmark queries to %s", len(manifest), root)
    return root


def read_corpus(directory: str | Path) -> list[BenchQuery]:
    root = Path(directory).expanduser()
    manifest_path = root.joinpath(CORPUS_MANIFEST)
    if not manifest_path.exists():
        raise FileNotFoundError(f"No {CORPUS_MANIFEST} in {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        entries = []
        for item in manifest["queries"]:
            ir = deserialize_ir(root.joinpath(item["ir"]).read_text(encoding="utf-8"))
            specs = [
                DatasetSpec(
                    DatasetKind.from_str(spec["kind"]),
                    int(spec["size"]),
                    int(spec["seed"]),
                    bool(spec["cyclic"]),
                )
                for spec in item["datasets"]
            ]
            entries.append(
                BenchQuery(
                    item["name"],
                    item.get("description", ""),
                    ir,
                    Expectation.from_dict(item["expected"]),
                    specs,
                )
            )
    except (KeyError, TypeError, ValueError) as ex:
        raise ParseError(f"Malformed corpus manifest: {ex}", str(manifest_path))
    if not entries:
        raise ParseError("The corpus manifest lists no queries", str(manifest_path))
    return entries


def dataset_dir(directory: str | Path, spec: DatasetSpec) -> Path:
    return Path(directory).expanduser().joinpath(CORPUS_DATA_DIR, str(spec))


# bench


class EmitStatus(Enum):
    OK = auto()
    REFUSED = auto()
    UNSUPPORTED = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)


def emit_status(q: QueryNode) -> dict[Dialect, EmitStatus]:
    statuses = {}
    for dialect in Dialect:
        try:
            emit(q, dialect)
            statuses[dialect] = EmitStatus.OK
        except UnsupportedFeature:
            statuses[dialect] = EmitStatus.UNSUPPORTED
        except UncheckedQuery:
            statuses[dialect] = EmitStatus.REFUSED
    return statuses


@dataclass
class BenchResult:
    entry: BenchQuery
    verdict: Verdict
    oracle: DiffReport | None
    emits: dict[Dialect, EmitStatus]

    @property
    def passed(self) -> bool:
        return self.verdict.matches and (self.oracle is None or self.oracle.passed)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.verdict.to_dict(),
            "oracle": (
                None
                if self.oracle is None
                else {
                    "datasets": self.oracle.datasets,
                    "passed": self.oracle.passed,
                    "mismatches": self.oracle.mismatches,
                }
            ),
            "emit": {str(dialect): str(status) for dialect, status in self.emits.items()},
            "passed": self.passed,
        }


def runs_oracle(entry: BenchQuery) -> bool:
    return entry.expected.set_semantic and entry.expected.monotone != Monotonicity.NO


def bench_entry(
    entry: BenchQuery, load: Callable[[DatasetSpec], Database], cap: int = BENCH_ORACLE_CAP
) -> BenchResult:
    oracle = None
    if runs_oracle(entry):
        databases = [load(spec) for spec in entry.acyclic_datasets]
        oracle = diff_test(entry.ir, databases, cap, require_witness=False)
    result = BenchResult(entry, verdict(entry), oracle, emit_status(entry.ir))
    logger.info("Bench %s: %s", entry.name, "passed" if result.passed else "mismatch")
    return result


def run_bench(
    entries: list[BenchQuery], load: Callable[[DatasetSpec], Database] = gen_dataset
) -> list[BenchResult]:
    return [bench_entry(entry, load) for entry in entries]
