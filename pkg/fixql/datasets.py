"""Deterministic synthetic datasets for the benchmark queries.

Every generator is a pure function of (kind, size, seed, cyclic): it draws from
its own ``random.Random(seed)`` and emits rows in a fixed order.
"""

import itertools
import math
import random
from dataclasses import dataclass
from enum import Enum, auto
from typing import Callable

import networkx as nx

from fixql.errors import InternalError
from fixql.evalengine import Relation
from fixql.models import ColumnType, RowSchema

INT = ColumnType.INT
TEXT = ColumnType.TEXT

SCHEMAS: dict[str, RowSchema] = {
    "edges": RowSchema.of(x=INT, y=INT),
    "edge": RowSchema.of(src=INT, dst=INT, cst=INT),
    "base": RowSchema.of(dst=INT, cst=INT),
    "subparts": RowSchema.of(part=TEXT, sub=TEXT),
    "basicparts": RowSchema.of(part=TEXT, days=INT),
    "owns": RowSchema.of(src=INT, dst=INT, shares=INT, outstanding=INT),
    "assign": RowSchema.of(x=INT, y=INT),
    "dereference": RowSchema.of(x=INT, y=INT),
    "allocs": RowSchema.of(x=INT, y=INT),
    "loads": RowSchema.of(x=INT, y=INT, f=INT),
    "stores": RowSchema.of(x=INT, f=INT, y=INT),
    "invokes": RowSchema.of(x=INT, y=INT),
    "jumps": RowSchema.of(x=INT, y=INT),
    "writes": RowSchema.of(x=INT, v=INT),
    "reads": RowSchema.of(x=INT, v=INT),
    "friends": RowSchema.of(src=INT, dst=INT),
    "colleagues": RowSchema.of(src=INT, dst=INT),
    "organizers": RowSchema.of(person=INT),
    "degree": RowSchema.of(person=INT, total=INT),
    "numbers": RowSchema.of(n=INT),
    "parent": RowSchema.of(parent=INT, child=INT),
}


class DatasetKind(Enum):
    CHAIN_GRAPH = auto()
    CYCLE_GRAPH = auto()
    RANDOM_DAG = auto()
    WEIGHTED_GRAPH = auto()
    BOM_HIERARCHY = auto()
    OWNERSHIP_GRAPH = auto()
    ASSIGN_GRAPH = auto()
    SOCIAL_GRAPH = auto()
    NUMBER_RANGE = auto()
    FAMILY_TREE = auto()

    def __str__(self) -> str:
        return self.name.lower().replace("_", "-")

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "DatasetKind":
        return DatasetKind[value.upper().replace("-", "_")]

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(kind) for kind in DatasetKind]


ALWAYS_CYCLIC = {DatasetKind.CYCLE_GRAPH}
NEVER_CYCLIC = {
    DatasetKind.CHAIN_GRAPH,
    DatasetKind.RANDOM_DAG,
    DatasetKind.NUMBER_RANGE,
    DatasetKind.FAMILY_TREE,
}

# tables whose (first, second) columns are graph edges, per kind
GRAPH_TABLES: dict[DatasetKind, list[str]] = {
    DatasetKind.CHAIN_GRAPH: ["edges"],
    DatasetKind.CYCLE_GRAPH: ["edges"],
    DatasetKind.RANDOM_DAG: ["edges"],
    DatasetKind.WEIGHTED_GRAPH: ["edge"],
    DatasetKind.BOM_HIERARCHY: ["subparts"],
    DatasetKind.OWNERSHIP_GRAPH: ["owns"],
    DatasetKind.ASSIGN_GRAPH: ["assign", "jumps"],
    DatasetKind.SOCIAL_GRAPH: ["friends", "colleagues"],
    DatasetKind.NUMBER_RANGE: [],
    DatasetKind.FAMILY_TREE: ["parent"],
}


@dataclass(frozen=True)
class DatasetSpec:
    kind: DatasetKind
    size: int
    seed: int = 0
    cyclic: bool = False

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ValueError(f"Dataset size must be positive, got {self.size}")
        if self.kind in ALWAYS_CYCLIC and not self.cyclic:
            object.__setattr__(self, "cyclic", True)
        if self.kind in NEVER_CYCLIC and self.cyclic:
            raise ValueError(f"A {self.kind} dataset cannot be cyclic")

    def __str__(self) -> str:
        return f"{self.kind}-{self.size}-s{self.seed}" + ("-cyclic" if self.cyclic else "")

    def to_dict(self) -> dict[str, object]:
        return {"kind": str(self.kind), "size": self.size, "seed": self.seed, "cyclic": self.cyclic}


Database = dict[str, Relation]
Rows = list[tuple[object, ...]]


def _relations(**tables: Rows) -> Database:
    return {name: Relation(SCHEMAS[name], rows) for name, rows in tables.items()}


def _forward_pairs(rng: random.Random, nodes: int, count: int) -> list[tuple[int, int]]:
    pairs = list(itertools.combinations(range(nodes), 2))
    return sorted(rng.sample(pairs, min(count, len(pairs))))


def _back_edges(rng: random.Random, nodes: int, count: int) -> list[tuple[int, int]]:
    edges = {(nodes - 1, 0)}
    while len(edges) < count:
        low = rng.randrange(nodes - 1)
        edges.add((rng.randrange(low + 1, nodes), low))
    return sorted(edges)


def chain_graph(spec: DatasetSpec, rng: random.Random) -> Database:
    return _relations(edges=[(i, i + 1) for i in range(spec.size)])


def cycle_graph(spec: DatasetSpec, rng: random.Random) -> Database:
    return _relations(edges=[(i, (i + 1) % spec.size) for i in range(spec.size)])


def random_dag(spec: DatasetSpec, rng: random.Random) -> Database:
    nodes = max(2, math.ceil(math.sqrt(2 * spec.size)) + 1)
    return _relations(edges=list(_forward_pairs(rng, nodes, spec.size)))


def weighted_graph(spec: DatasetSpec, rng: random.Random) -> Database:
    nodes = spec.size + 1
    costs = {(i, i + 1): rng.randint(1, 9) for i in range(spec.size)}
    for pair in _forward_pairs(rng, nodes, spec.size // 2):
        costs.setdefault(pair, rng.randint(1, 9))
    if spec.cyclic:
        for pair in _back_edges(rng, nodes, max(1, spec.size // 3)):
            costs.setdefault(pair, rng.randint(1, 9))
    return _relations(
        edge=[(src, dst, cst) for (src, dst), cst in sorted(costs.items())],
        base=[(0, 0)],
    )


def bom_hierarchy(spec: DatasetSpec, rng: random.Random) -> Database:
    parts = spec.size + 1
    parent_of = {child: rng.randrange(child) for child in range(1, parts)}
    subparts = [(f"p{parent}", f"p{child}") for child, parent in sorted(parent_of.items())]
    leaves = sorted(set(range(parts)) - set(parent_of.values()))
    if spec.cyclic:
        subparts.append((f"p{leaves[-1]}", "p0"))
    basic = [(f"p{leaf}", rng.randint(1, 30)) for leaf in leaves]
    return _relations(subparts=subparts, basicparts=basic)


def ownership_graph(spec: DatasetSpec, rng: random.Random) -> Database:
    companies = spec.size + 1
    pairs = {(i, i + 1) for i in range(spec.size)} | set(_forward_pairs(rng, companies, spec.size))
    if spec.cyclic:
        pairs |= set(_back_edges(rng, companies, max(1, spec.size // 4)))
    return _relations(owns=[(src, dst, rng.randint(10, 60), 100) for src, dst in sorted(pairs)])


def assign_graph(spec: DatasetSpec, rng: random.Random) -> Database:
    variables = spec.size + 1
    assign = [(i, i + 1) for i in range(spec.size)]
    jumps = [(i, i + 1) for i in range(spec.size)] + _forward_pairs(rng, variables, spec.size // 2)
    if spec.cyclic:
        assign.append((spec.size, 0))
        jumps.append((spec.size, 0))
    fields = max(1, spec.size // 4)

    def draw(count: int) -> list[int]:
        return [rng.randrange(variables) for _ in range(count)]

    dereference = sorted({(x, x + 1) for x in draw(spec.size // 2) if x + 1 < variables})
    allocs = [(x, 1000 + x) for x in range(0, variables, 2)]
    loads = sorted(
        {(y + 1, y, rng.randrange(fields)) for y in draw(spec.size // 3) if y + 1 < variables}
    )
    stores = sorted(
        {(x, rng.randrange(fields), x + 1) for x in draw(spec.size // 3) if x + 1 < variables}
    )
    invokes = sorted(set(_forward_pairs(rng, variables, spec.size)))
    writes = sorted({(x, rng.randrange(fields)) for x in draw(spec.size // 2)})
    reads = sorted({(x, rng.randrange(fields)) for x in draw(spec.size // 2)})
    return _relations(
        assign=assign,
        dereference=dereference,
        allocs=allocs,
        loads=loads,
        stores=stores,
        invokes=invokes,
        jumps=sorted(set(jumps)),
        writes=writes,
        reads=reads,
    )


def social_graph(spec: DatasetSpec, rng: random.Random) -> Database:
    people = spec.size + 1
    friends = {(i, i + 1) for i in range(spec.size)} | set(_forward_pairs(rng, people, spec.size))
    colleagues = set(_forward_pairs(rng, people, spec.size))
    if spec.cyclic:
        friends |= set(_back_edges(rng, people, max(1, spec.size // 4)))
        colleagues |= {(i, (i + 1) % people) for i in range(people)}
    organizers = sorted({0, rng.randrange(people)})
    degree = [
        (person, max(1, sum(1 for _, dst in friends if dst == person))) for person in range(people)
    ]
    return _relations(
        friends=sorted(friends),
        colleagues=sorted(colleagues),
        organizers=[(person,) for person in organizers],
        degree=degree,
    )


def number_range(spec: DatasetSpec, rng: random.Random) -> Database:
    return _relations(numbers=[(n,) for n in range(spec.size + 1)])


def family_tree(spec: DatasetSpec, rng: random.Random) -> Database:
    return _relations(parent=[(rng.randrange(child), child) for child in range(1, spec.size + 1)])


GENERATORS: dict[DatasetKind, Callable[[DatasetSpec, random.Random], Database]] = {
    DatasetKind.CHAIN_GRAPH: chain_graph,
    DatasetKind.CYCLE_GRAPH: cycle_graph,
    DatasetKind.RANDOM_DAG: random_dag,
    DatasetKind.WEIGHTED_GRAPH: weighted_graph,
    DatasetKind.BOM_HIERARCHY: bom_hierarchy,
    DatasetKind.OWNERSHIP_GRAPH: ownership_graph,
    DatasetKind.ASSIGN_GRAPH: assign_graph,
    DatasetKind.SOCIAL_GRAPH: social_graph,
    DatasetKind.NUMBER_RANGE: number_range,
    DatasetKind.FAMILY_TREE: family_tree,
}


def dependency_graph(database: Database, kind: DatasetKind) -> nx.DiGraph:
    graph = nx.DiGraph()
    for table in GRAPH_TABLES[kind]:
        if table in database:
            graph.add_edges_from((row[0], row[1]) for row in database[table])
    return graph


def is_cyclic(database: Database, kind: DatasetKind) -> bool:
    return not nx.is_directed_acyclic_graph(dependency_graph(database, kind))


def gen_dataset(spec: DatasetSpec) -> Database:
    database = GENERATORS[spec.kind](spec, random.Random(spec.seed))
    if is_cyclic(database, spec.kind) != spec.cyclic:
        raise InternalError(f"Generated {spec} does not match its cyclic flag")
    return database
