"""Restriction checks over fix nodes.

Every check is a pure function from a fix (and the IR path it sits at) to a
list of diagnostics. ``check_all`` composes them under a restriction profile.
"""

import json
from dataclasses import dataclass
from enum import Enum, auto
from typing import Any, Iterable

import networkx as nx

from fixql import logger
from fixql.dialects import RestrictionProfile, Support
from fixql.errors import UnknownDialect
from fixql.ir import (
    Aggregate,
    DepRef,
    ExprNode,
    Filter,
    Fix,
    FlatMap,
    GroupBy,
    Join,
    Map,
    QueryNode,
    RecRef,
    RowCtor,
    TableScan,
    children,
    component_names,
    fix_nodes,
    free_vars,
    node_exprs,
    walk,
)
from fixql.models import Category, Shape


class Risk(Enum):
    DB_ERROR = auto()
    INCOMPLETE_RESULTS = auto()
    NONTERMINATION = auto()

    def __str__(self) -> str:
        return self.name.lower().replace("_", "-")

    def __repr__(self) -> str:
        return str(self)


class Severity(Enum):
    ERROR = auto()
    WARNING = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)


class DiagnosticCode(Enum):
    RANGE = auto()
    MONOTONE = auto()
    AFFINE = auto()
    RELEVANT = auto()
    SET = auto()
    CONSTRUCTOR = auto()
    MUTUAL = auto()
    DIALECT = auto()

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return str(self)

    @property
    def risk(self) -> Risk:
        return RISKS[self]


RISKS = {
    DiagnosticCode.RANGE: Risk.NONTERMINATION,
    DiagnosticCode.MONOTONE: Risk.DB_ERROR,
    DiagnosticCode.AFFINE: Risk.INCOMPLETE_RESULTS,
    DiagnosticCode.RELEVANT: Risk.INCOMPLETE_RESULTS,
    DiagnosticCode.SET: Risk.NONTERMINATION,
    DiagnosticCode.CONSTRUCTOR: Risk.NONTERMINATION,
    DiagnosticCode.MUTUAL: Risk.INCOMPLETE_RESULTS,
    DiagnosticCode.DIALECT: Risk.DB_ERROR,
}


class Property(Enum):
    LINEAR = auto()
    MONOTONE = auto()
    SET = auto()
    MUTUAL = auto()
    CF = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "Property":
        return Property[value.upper()]

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(prop) for prop in Property]


PROPERTIES = {
    DiagnosticCode.AFFINE: Property.LINEAR,
    DiagnosticCode.RELEVANT: Property.LINEAR,
    DiagnosticCode.MONOTONE: Property.MONOTONE,
    DiagnosticCode.SET: Property.SET,
    DiagnosticCode.MUTUAL: Property.MUTUAL,
    DiagnosticCode.CONSTRUCTOR: Property.CF,
}


@dataclass(frozen=True)
class Diagnostic:
    code: DiagnosticCode
    path: str
    message: str
    severity: Severity = Severity.ERROR
    sub_code: str | None = None

    @property
    def risk(self) -> Risk:
        return self.code.risk

    def __str__(self) -> str:
        sub = f"/{self.sub_code}" if self.sub_code else ""
        return f"{self.severity} {self.code}{sub} at {self.path}: {self.message} [{self.risk}]"

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": str(self.code),
            "sub_code": self.sub_code,
            "severity": str(self.severity),
            "risk": str(self.risk),
            "path": self.path,
            "message": self.message,
        }


class CheckReport:
    def __init__(self, diagnostics: list[Diagnostic], profile: str) -> None:
        self.diagnostics = diagnostics
        self.profile = profile

    def __repr__(self) -> str:
        return str(self)

    def __str__(self) -> str:
        return str(
            {
                "pass": self.passed,
                "profile": self.profile,
                "diagnostics": [str(diagnostic) for diagnostic in self.diagnostics],
            }
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CheckReport):
            return NotImplemented
        return self.profile == other.profile and self.diagnostics == other.diagnostics

    @property
    def passed(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.ERROR]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.WARNING]

    def codes(self) -> list[DiagnosticCode]:
        return [diagnostic.code for diagnostic in self.diagnostics]

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "profile": self.profile,
            "diagnostics": [diagnostic.to_dict() for diagnostic in self.diagnostics],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _label(fix: Fix, index: int) -> str:
    if fix.names is not None:
        return f"'{fix.names[index - 1]}'"
    return str(index)


def _own_deps(node: QueryNode, fix: Fix) -> bool:
    return bool(node.deps.for_fix(fix.fix_id))


def _definitions(fix: Fix, path: str) -> Iterable[tuple[int, str, QueryNode]]:
    for position, definition in enumerate(fix.defs):
        yield position + 1, f"{path}.defs[{position}]", definition


def check_range(fix: Fix, path: str = "$") -> list[Diagnostic]:
    diagnostics = []
    for index, def_path, definition in _definitions(fix, path):
        base = fix.bases[index - 1]
        if base.schema != definition.schema:
            diagnostics.append(
                Diagnostic(
                    DiagnosticCode.RANGE,
                    def_path,
                    f"component {_label(fix, index)} produces {definition.schema}"
                    f" but its base produces {base.schema}",
                )
            )
    return diagnostics


def _recursive_binders(definition: QueryNode, fix: Fix) -> set[int]:
    """Binders whose rows come from the fix, directly or through another such binder."""
    binders: set[int] = set()
    for _, node in walk(definition):
        match node:
            case FlatMap() if _own_deps(node.src, fix) or free_vars(node.src) & binders:
                binders.add(node.binder)
            case Join():
                binders |= {
                    source.binder for source in node.sources if _own_deps(source.query, fix)
                }
    return binders


def _aggregates_recursion(node: Aggregate | GroupBy, fix: Fix, binders: set[int]) -> bool:
    return _own_deps(node.src, fix) or bool(free_vars(node) & binders)


def check_monotone(fix: Fix, path: str = "$") -> list[Diagnostic]:
    diagnostics = []
    for index, def_path, definition in _definitions(fix, path):
        binders = _recursive_binders(definition, fix)
        for node_path, node in walk(definition, def_path):
            match node:
                case Aggregate() | GroupBy() if _aggregates_recursion(node, fix, binders):
                    diagnostics.append(
                        Diagnostic(
                            DiagnosticCode.MONOTONE,
                            node_path,
                            f"component {_label(fix, index)} aggregates over a recursive relation",
                        )
                    )
                case Map() | Filter() | FlatMap() if _own_deps(node.src, fix):
                    if any(expr.shape == Shape.SCALAR for _, expr in node_exprs(node)):
                        diagnostics.append(
                            Diagnostic(
                                DiagnosticCode.MONOTONE,
                                node_path,
                                f"component {_label(fix, index)} applies a scalar operation"
                                " over a recursive relation",
                            )
                        )
                case Join() if any(_own_deps(source.query, fix) for source in node.sources):
                    if any(expr.shape == Shape.SCALAR for _, expr in node_exprs(node)):
                        diagnostics.append(
                            Diagnostic(
                                DiagnosticCode.MONOTONE,
                                node_path,
                                f"component {_label(fix, index)} applies a scalar operation"
                                " over a recursive relation",
                            )
                        )
    return diagnostics


def check_linear(fix: Fix, path: str = "$") -> list[Diagnostic]:
    diagnostics = []
    used: set[DepRef] = set()
    for index, def_path, definition in _definitions(fix, path):
        own = definition.deps.for_fix(fix.fix_id)
        used |= own.support()
        for ref, count in sorted(own.counts().items()):
            if count > 1:
                diagnostics.append(
                    Diagnostic(
                        DiagnosticCode.AFFINE,
                        def_path,
                        f"component {_label(fix, index)} references component"
                        f" {_label(fix, ref.index)} {count} times",
                        sub_code="duplicate",
                    )
                )
        foreign = definition.deps.without(fix.fix_id)
        if foreign:
            diagnostics.append(
                Diagnostic(
                    DiagnosticCode.AFFINE,
                    def_path,
                    f"component {_label(fix, index)} returns terms of an enclosing fix {foreign}",
                    sub_code="foreign",
                )
            )
    for index in range(1, fix.arity + 1):
        if DepRef(fix.fix_id, index) not in used:
            diagnostics.append(
                Diagnostic(
                    DiagnosticCode.RELEVANT,
                    path,
                    f"component {_label(fix, index)} is never referenced by a recursive definition",
                    sub_code="unused",
                )
            )
    return diagnostics


def check_set_semantics(fix: Fix, path: str = "$") -> list[Diagnostic]:
    return [
        Diagnostic(
            DiagnosticCode.SET,
            def_path,
            f"component {_label(fix, index)} has bag semantics",
        )
        for index, def_path, definition in _definitions(fix, path)
        if definition.category == Category.BAG
    ]


def _constructor_fields(expr: ExprNode) -> list[str]:
    if isinstance(expr, RowCtor):
        return [name for name, value in expr.fields if value.uses_constructor]
    return [""] if expr.uses_constructor else []


def check_constructor_free(fix: Fix, path: str = "$") -> list[Diagnostic]:
    diagnostics: list[Diagnostic] = []

    def visit(node: QueryNode, node_path: str, index: int, inside: bool) -> None:
        guarded = False
        match node:
            case Map() | Filter():
                guarded = inside or _own_deps(node.src, fix)
            case Join():
                guarded = inside or any(_own_deps(s.query, fix) for s in node.sources)
        if guarded:
            for slot, expr in node_exprs(node):
                for name in _constructor_fields(expr):
                    where = f"field '{name}'" if name else slot
                    diagnostics.append(
                        Diagnostic(
                            DiagnosticCode.CONSTRUCTOR,
                            node_path,
                            f"component {_label(fix, index)} computes new values in {where}",
                        )
                    )
        for step, child in children(node):
            nested = inside or (
                isinstance(node, FlatMap) and step == "inner" and _own_deps(node.src, fix)
            )
            visit(child, f"{node_path}.{step}", index, nested)

    for index, def_path, definition in _definitions(fix, path):
        visit(definition, def_path, index, False)
    return diagnostics


def mutual_components(fix: Fix) -> list[list[int]]:
    """Groups of two or more components of ``fix`` that reach each other."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(1, fix.arity + 1))
    for index, definition in enumerate(fix.defs, start=1):
        for ref in definition.deps.for_fix(fix.fix_id).support():
            graph.add_edge(ref.index, index)
    groups = [sorted(scc) for scc in nx.strongly_connected_components(graph) if len(scc) > 1]
    return sorted(groups)


def _mutual_diagnostics(
    fix: Fix, path: str, severity: Severity = Severity.ERROR, sub_code: str | None = None
) -> list[Diagnostic]:
    return [
        Diagnostic(
            DiagnosticCode.MUTUAL,
            path,
            "components "
            + ", ".join(_label(fix, index) for index in group)
            + " are mutually recursive",
            severity=severity,
            sub_code=sub_code,
        )
        for group in mutual_components(fix)
    ]


def check_mutual(fix: Fix, path: str = "$") -> list[Diagnostic]:
    return _mutual_diagnostics(fix, path)


def check_dialect(q: QueryNode, profile: RestrictionProfile) -> list[Diagnostic]:
    if profile.dialect is None:
        raise UnknownDialect(f"Profile '{profile}' has no dialect")
    dialect = profile.dialect
    features = dialect.features
    diagnostics = []
    for path, fix in fix_nodes(q):
        match features.mutual:
            case Support.NO:
                diagnostics += _mutual_diagnostics(fix, path)
            case Support.SYNTACTIC:
                diagnostics += _mutual_diagnostics(fix, path, Severity.WARNING, "syntactic")
        if not features.union_distinct_in_recursion:
            for index, def_path, definition in _definitions(fix, path):
                if definition.category == Category.SET:
                    diagnostics.append(
                        Diagnostic(
                            DiagnosticCode.DIALECT,
                            def_path,
                            f"component {_label(fix, index)} needs UNION in recursion,"
                            f" which {dialect} does not support",
                        )
                    )
    return diagnostics


def check_all(q: QueryNode, profile: RestrictionProfile) -> CheckReport:
    diagnostics: list[Diagnostic] = []
    # innermost fixes first
    for path, fix in reversed(fix_nodes(q)):
        diagnostics += check_range(fix, path)
        if profile.require_monotone:
            diagnostics += check_monotone(fix, path)
        if profile.require_linear:
            diagnostics += check_linear(fix, path)
        if profile.require_set_semantics:
            diagnostics += check_set_semantics(fix, path)
        if profile.require_constructor_free:
            diagnostics += check_constructor_free(fix, path)
        if not profile.allow_mutual_recursion:
            diagnostics += check_mutual(fix, path)
    if profile.dialect is not None:
        diagnostics += check_dialect(q, profile)

    order = {path: position for position, (path, _) in enumerate(walk(q))}
    unique = list(dict.fromkeys(diagnostics))
    unique.sort(key=lambda d: (order.get(d.path, len(order)), str(d.code), d.message))

    report = CheckReport(unique, profile.name)
    logger.info(
        "Checked query under profile %s: %d errors, %d warnings",
        profile,
        len(report.errors),
        len(report.warnings),
    )
    return report


def violated_properties(report: CheckReport) -> set[Property]:
    return {PROPERTIES[d.code] for d in report.diagnostics if d.code in PROPERTIES}


class PrecedenceGraph:
    def __init__(self, graph: nx.DiGraph) -> None:
        self.graph = graph

    def __repr__(self) -> str:
        return str(self)

    def __str__(self) -> str:
        return str(self.to_dict())

    @property
    def nodes(self) -> list[str]:
        return sorted(self.graph.nodes)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return sorted(self.graph.edges)

    @property
    def sccs(self) -> list[list[str]]:
        return sorted(sorted(scc) for scc in nx.strongly_connected_components(self.graph))

    @property
    def is_mutual(self) -> bool:
        return any(len(scc) > 1 for scc in self.sccs)

    def is_recursive(self, name: str) -> bool:
        return self.graph.has_edge(name, name) or any(
            name in scc and len(scc) > 1 for scc in self.sccs
        )

    @property
    def strata(self) -> list[list[str]]:
        condensed = nx.condensation(self.graph)
        ordered = nx.lexicographical_topological_sort(
            condensed, key=lambda node: min(condensed.nodes[node]["members"])
        )
        return [sorted(condensed.nodes[node]["members"]) for node in ordered]

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": self.nodes,
            "edges": [list(edge) for edge in self.edges],
            "sccs": self.sccs,
            "strata": self.strata,
            "mutual": self.is_mutual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _reads(node: QueryNode, names: dict[DepRef, str]) -> set[str]:
    match node:
        case TableScan():
            return {node.name}
        case RecRef():
            return {names[node.dep]}
        case Fix():
            return {names[DepRef(node.fix_id, node.result)]}
    read: set[str] = set()
    for _, child in children(node):
        read |= _reads(child, names)
    return read


def build_precedence_graph(q: QueryNode) -> PrecedenceGraph:
    names = component_names(q)
    graph = nx.DiGraph()
    for _, node in walk(q):
        if isinstance(node, TableScan):
            graph.add_node(node.name)
    for _, fix in fix_nodes(q):
        for index, (base, definition) in enumerate(zip(fix.bases, fix.defs), start=1):
            target = names[DepRef(fix.fix_id, index)]
            graph.add_node(target)
            for source in _reads(base, names) | _reads(definition, names):
                graph.add_edge(source, target)
    return PrecedenceGraph(graph)
