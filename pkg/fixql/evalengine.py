"""In-memory reference evaluator.

Relations are lists of row tuples. Fix nodes run to a fixpoint in one of three
modes: naive re-evaluation, semi-naive evaluation (one variant per recursive
reference with that reference reading the last delta) and delta-only
evaluation, which reads the last delta everywhere the way many engines do.
"""

import itertools
import operator
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from fixql import logger
from fixql.checker import check_linear
from fixql.configs import DEFAULT_ITERATION_CAP
from fixql.errors import (
    DivisionByZero,
    EvalTypeError,
    InternalError,
    MissingTable,
    NontermError,
    SchemaError,
)
from fixql.ir import (
    AggApply,
    Aggregate,
    Apply,
    ColumnRef,
    DepMultiset,
    DepRef,
    Distinct,
    ExprNode,
    Filter,
    Fix,
    FlatMap,
    GroupBy,
    Join,
    Lit,
    Map,
    QueryNode,
    RecRef,
    RowCtor,
    SetOp,
    SetOpKind,
    TableScan,
    ValueExpr,
    children,
    component_names,
    conjuncts,
    expr_vars,
    fix_nodes,
    flatmap_to_join,
    free_vars,
    replace_children,
)
from fixql.models import Category, ColumnType, RowSchema

Row = tuple[Any, ...]
Binding = Mapping[int, Mapping[str, Any]]


class Relation:
    def __init__(
        self, schema: RowSchema, rows: Iterable[Row] = (), category: Category = Category.BAG
    ) -> None:
        self.schema = schema
        self.category = category
        rows = [tuple(row) for row in rows]
        self.rows = list(dict.fromkeys(rows)) if category == Category.SET else rows

    def __repr__(self) -> str:
        return str(self)

    def __str__(self) -> str:
        return f"{self.schema} x {len(self.rows)} ({self.category})"

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[Row]:
        return iter(self.rows)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.schema == other.schema and Counter(self.rows) == Counter(other.rows)

    def as_set(self) -> set[Row]:
        return set(self.rows)

    def canonical(self) -> list[Row]:
        return sorted(self.rows)


Database = Mapping[str, Relation]


class EvalMode(Enum):
    NAIVE = auto()
    SEMINAIVE = auto()
    DELTAONLY = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "EvalMode":
        return EvalMode[value.upper()]

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(mode) for mode in EvalMode]


@dataclass(frozen=True)
class EvalConfig:
    mode: EvalMode = EvalMode.SEMINAIVE
    cap: int = DEFAULT_ITERATION_CAP
    dedupe: Category | None = None
    trace: bool = False

    def __post_init__(self) -> None:
        if self.cap < 1:
            raise ValueError(f"Iteration cap must be at least 1, got {self.cap}")


@dataclass(frozen=True)
class TraceEntry:
    component: str
    iteration: int
    delta: tuple[Row, ...]
    accumulated: int


@dataclass(frozen=True)
class _DeltaRef(QueryNode):
    """A recursive reference that reads the previous iteration's delta."""

    dep: DepRef
    schema: RowSchema
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._cache(category=Category.BAG, deps=DepMultiset.of(self.dep))


# expressions


def _divide(left: Any, right: Any, column_type: ColumnType) -> Any:
    if right == 0:
        raise DivisionByZero(f"Division of {left} by zero")
    if column_type == ColumnType.INT:
        quotient = abs(left) // abs(right)
        return quotient if (left >= 0) == (right >= 0) else -quotient
    return left / right


BINARY: dict[str, Callable[[Any, Any], Any]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "||": operator.add,
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def eval_expr(expr: ExprNode, binding: Binding) -> Any:
    match expr:
        case ColumnRef():
            try:
                return binding[expr.var][expr.column]
            except KeyError:
                raise InternalError(f"Column {expr.column} of row {expr.var} is not bound")
        case Lit():
            return expr.value
        case AggApply():
            raise EvalTypeError(f"Aggregation '{expr.op.name}' outside of aggregate or groupBy")
        case Apply():
            return _apply(expr, [lambda arg=arg: eval_expr(arg, binding) for arg in expr.args])
        case RowCtor():
            return tuple(eval_expr(value, binding) for value in expr.exprs())
    raise EvalTypeError(f"Cannot evaluate {type(expr).__name__}")


def _apply(expr: Apply, args: Sequence[Callable[[], Any]]) -> Any:
    name = expr.op.name
    match name:
        case "and":
            return bool(args[0]()) and bool(args[1]())
        case "or":
            return bool(args[0]()) or bool(args[1]())
        case "not":
            return not args[0]()
        case "/":
            return _divide(args[0](), args[1](), expr.op.result_type)
        case "contains":
            return args[1]() in args[0]()
        case "to_text":
            return str(args[0]())
    if name not in BINARY:
        raise EvalTypeError(f"No evaluation rule for operator '{expr.op.op_id}'")
    return BINARY[name](args[0](), args[1]())


def _aggregate(expr: AggApply, values: list[Any]) -> Any:
    match expr.op.name:
        case "count":
            return len(values)
        case "sum":
            return sum(values)
        case "avg":
            return sum(values) / len(values)
        case "min":
            return min(values)
        case "max":
            return max(values)
    raise EvalTypeError(f"Unknown aggregation '{expr.op.name}'")


def eval_grouped(expr: ExprNode, group: Sequence[Binding]) -> Any:
    """Evaluate over a non-empty group; plain columns read the first row of the group."""
    match expr:
        case AggApply():
            return _aggregate(expr, [eval_expr(expr.args[0], binding) for binding in group])
        case Apply():
            return _apply(expr, [lambda arg=arg: eval_grouped(arg, group) for arg in expr.args])
        case RowCtor():
            return tuple(eval_grouped(value, group) for value in expr.exprs())
    return eval_expr(expr, group[0])


# queries


def _recursive_occurrences(node: QueryNode, fix_id: int) -> int:
    if isinstance(node, RecRef):
        return 1 if node.dep.fix == fix_id else 0
    return sum(_recursive_occurrences(child, fix_id) for _, child in children(node))


def _mark_deltas(node: QueryNode, fix_id: int, chosen: Callable[[int], bool]) -> QueryNode:
    """Replace the recursive references picked by ``chosen`` (pre-order numbering)."""
    counter = itertools.count()

    def visit(current: QueryNode) -> QueryNode:
        if isinstance(current, RecRef) and current.dep.fix == fix_id:
            return _DeltaRef(current.dep, current.schema) if chosen(next(counter)) else current
        return replace_children(current, [visit(child) for _, child in children(current)])

    return visit(node)


def _dedupe(rows: Iterable[Row]) -> list[Row]:
    return list(dict.fromkeys(rows))


class Evaluator:
    def __init__(self, db: Database, cfg: EvalConfig | None = None) -> None:
        self.db = db
        self.cfg = cfg or EvalConfig()
        self.iterations: dict[str, int] = {}
        self.trace: list[TraceEntry] = []
        self.names: dict[DepRef, str] = {}
        self._full: dict[DepRef, list[Row]] = {}
        self._delta: dict[DepRef, list[Row]] = {}
        self._cache: dict[int, tuple[QueryNode, list[Row]]] = {}
        self._closed: dict[int, tuple[QueryNode, bool]] = {}

    def run(self, q: QueryNode) -> Relation:
        self.names = component_names(q)
        self._cache.clear()
        self._closed.clear()
        return Relation(q.schema, self.eval(q, {}), q.category)

    def is_closed(self, node: QueryNode) -> bool:
        known = self._closed.get(id(node))
        if known is None or known[0] is not node:
            known = (node, not node.deps and not free_vars(node))
            self._closed[id(node)] = known
        return known[1]

    def eval(self, node: QueryNode, env: Binding) -> list[Row]:
        if self.is_closed(node):
            cached = self._cache.get(id(node))
            if cached is not None and cached[0] is node:
                return cached[1]
            rows = self._eval(node, env)
            self._cache[id(node)] = (node, rows)
            return rows
        return self._eval(node, env)

    def _eval(self, node: QueryNode, env: Binding) -> list[Row]:
        match node:
            case TableScan():
                return self.scan(node)
            case RecRef():
                return self._read(self._full, node.dep)
            case _DeltaRef():
                return self._read(self._delta, node.dep)
            case Map():
                names = node.src.schema.names()
                return [
                    eval_expr(node.body, {**env, node.binder: dict(zip(names, row))})
                    for row in self.eval(node.src, env)
                ]
            case Filter():
                names = node.src.schema.names()
                return [
                    row
                    for row in self.eval(node.src, env)
                    if eval_expr(node.pred, {**env, node.binder: dict(zip(names, row))})
                ]
            case FlatMap():
                join = flatmap_to_join(node)
                if join is not None:
                    return self.join(join, env)
                names = node.src.schema.names()
                rows: list[Row] = []
                for row in self.eval(node.src, env):
                    rows += self.eval(node.inner, {**env, node.binder: dict(zip(names, row))})
                return rows
            case Join():
                return self.join(node, env)
            case Distinct():
                return _dedupe(self.eval(node.src, env))
            case SetOp():
                return self.set_operation(node, env)
            case Aggregate():
                names = node.src.schema.names()
                group = [
                    {**env, node.binder: dict(zip(names, row))}
                    for row in self.eval(node.src, env)
                ]
                return [eval_grouped(node.body, group)] if group else []
            case GroupBy():
                return self.group_by(node, env)
            case Fix():
                return self.fixpoint(node, env)
        raise InternalError(f"Cannot evaluate {type(node).__name__}")

    def _read(self, bindings: dict[DepRef, list[Row]], dep: DepRef) -> list[Row]:
        if dep not in bindings:
            raise InternalError(f"Recursive reference {dep} outside of its fix")
        return bindings[dep]

    def scan(self, node: TableScan) -> list[Row]:
        relation = self.db.get(node.name)
        if relation is None:
            raise MissingTable(node.name)
        if relation.schema != node.schema:
            raise SchemaError(
                f"Table '{node.name}' has schema {relation.schema}, query expects {node.schema}"
            )
        return relation.rows

    def set_operation(self, node: SetOp, env: Binding) -> list[Row]:
        left = self.eval(node.left, env)
        right = self.eval(node.right, env)
        match node.kind:
            case SetOpKind.UNION:
                return _dedupe(left + right)
            case SetOpKind.UNION_ALL:
                return left + right
            case SetOpKind.INTERSECT:
                keep = set(right)
                return _dedupe(row for row in left if row in keep)
            case _:
                remaining = Counter(right)
                rows = []
                for row in left:
                    if remaining[row] > 0:
                        remaining[row] -= 1
                        rows.append(row)
                return rows

    def group_by(self, node: GroupBy, env: Binding) -> list[Row]:
        names = node.src.schema.names()
        groups: dict[Row, list[Binding]] = {}
        for row in self.eval(node.src, env):
            binding = {**env, node.binder: dict(zip(names, row))}
            groups.setdefault(eval_expr(node.keys, binding), []).append(binding)
        rows = []
        for group in groups.values():
            if node.having is not None and not eval_grouped(node.having, group):
                continue
            rows.append(eval_grouped(node.select, group))
        return rows

    def join(self, node: Join, env: Binding) -> list[Row]:
        """Progressive hash join over the sources in order, nested loop without equalities."""
        pending = conjuncts(node.pred) if node.pred is not None else []
        outer = set(env)
        bound: set[int] = set()
        partials: list[dict[int, Mapping[str, Any]]] = [{}]

        for source in node.sources:
            names = source.query.schema.names()
            rows = [dict(zip(names, row)) for row in self.eval(source.query, env)]
            keys: list[tuple[ValueExpr, ValueExpr]] = []
            joined: list[dict[int, Mapping[str, Any]]]
            for pred in list(pending):
                pair = _equality(pred, source.binder, bound | outer)
                if pair is not None:
                    keys.append(pair)
                    pending.remove(pred)

            if keys:
                index: dict[Row, list[Mapping[str, Any]]] = {}
                for row in rows:
                    key = tuple(eval_expr(inner, {source.binder: row}) for _, inner in keys)
                    index.setdefault(key, []).append(row)
                joined = []
                for partial in partials:
                    scope = {**env, **partial}
                    outer_key = tuple(eval_expr(outer_side, scope) for outer_side, _ in keys)
                    for row in index.get(outer_key, []):
                        joined.append({**partial, source.binder: row})
            else:
                joined = [{**partial, source.binder: row} for partial in partials for row in rows]

            bound.add(source.binder)
            ready = [pred for pred in pending if expr_vars(pred) <= bound | outer]
            pending = [pred for pred in pending if pred not in ready]
            partials = [
                partial
                for partial in joined
                if all(eval_expr(pred, {**env, **partial}) for pred in ready)
            ]

        if pending:
            raise InternalError("Join predicate reads rows the join does not bind")
        return [eval_expr(node.body, {**env, **partial}) for partial in partials]

    def fixpoint(self, fix: Fix, env: Binding) -> list[Row]:
        refs = [DepRef(fix.fix_id, index) for index in range(1, fix.arity + 1)]
        labels = [self.names.get(ref, f"{fix.fix_id}.{ref.index}") for ref in refs]
        modes = [self.cfg.dedupe or definition.category for definition in fix.defs]
        mode = self.cfg.mode
        logger.debug("Evaluating fix %s in %s mode", labels, mode)

        variants: list[list[QueryNode]] = []
        if mode == EvalMode.NAIVE:
            variants = [[definition] for definition in fix.defs]
        else:
            for definition in fix.defs:
                occurrences = _recursive_occurrences(definition, fix.fix_id)
                if mode == EvalMode.DELTAONLY:
                    count = 1 if occurrences else 0
                    marked = [_mark_deltas(definition, fix.fix_id, lambda _: True)]
                else:
                    count = occurrences
                    marked = [
                        _mark_deltas(definition, fix.fix_id, lambda k, p=p: k == p)
                        for p in range(occurrences)
                    ]
                variants.append(marked if count else [definition])

        accumulated: list[list[Row]] = []
        deltas: list[list[Row]] = []
        for position, base in enumerate(fix.bases):
            rows = self.eval(base, env)
            rows = _dedupe(rows) if modes[position] == Category.SET else list(rows)
            accumulated.append(rows)
            deltas.append(rows)
            self._record(labels[position], 0, rows, len(rows))

        saved = {ref: (self._full.get(ref), self._delta.get(ref)) for ref in refs}
        try:
            for iteration in range(1, self.cfg.cap + 1):
                for ref, full, delta in zip(refs, accumulated, deltas):
                    self._full[ref] = full
                    self._delta[ref] = delta

                produced = []
                for position, definition in enumerate(fix.defs):
                    recursive = _recursive_occurrences(definition, fix.fix_id) > 0
                    if mode != EvalMode.NAIVE and not recursive and iteration > 1:
                        produced.append([])
                        continue
                    rows = []
                    for variant in variants[position]:
                        rows += self.eval(variant, env)
                    produced.append(rows)

                next_accumulated: list[list[Row]] = []
                next_deltas: list[list[Row]] = []
                for position, rows in enumerate(produced):
                    old = accumulated[position]
                    if mode == EvalMode.NAIVE and modes[position] == Category.BAG:
                        base = self.eval(fix.bases[position], env)
                        new = list(base) + rows
                        delta = list((Counter(new) - Counter(old)).elements())
                        if Counter(new) == Counter(old):
                            delta = []
                    elif modes[position] == Category.SET:
                        seen = set(old)
                        delta = [row for row in _dedupe(rows) if row not in seen]
                        new = old + delta
                    else:
                        delta = rows
                        new = old + rows
                    next_accumulated.append(new)
                    next_deltas.append(delta)
                    self._record(labels[position], iteration, delta, len(new))

                accumulated, deltas = next_accumulated, next_deltas
                if not any(deltas):
                    for label in labels:
                        self.iterations[label] = iteration
                    logger.debug("Fix %s converged after %d iterations", labels, iteration)
                    return accumulated[fix.result - 1]

            stuck = next(label for label, delta in zip(labels, deltas) if delta)
            for label in labels:
                self.iterations[label] = self.cfg.cap
            logger.warning("Fix component %s reached the cap of %d", stuck, self.cfg.cap)
            raise NontermError(stuck, self.cfg.cap)
        finally:
            for ref, (full, delta) in saved.items():
                if full is None:
                    self._full.pop(ref, None)
                    self._delta.pop(ref, None)
                else:
                    self._full[ref] = full
                    self._delta[ref] = delta if delta is not None else []

    def _record(self, component: str, iteration: int, delta: list[Row], accumulated: int) -> None:
        if self.cfg.trace:
            self.trace.append(TraceEntry(component, iteration, tuple(delta), accumulated))


def _equality(
    pred: ValueExpr, binder: int, bound: set[int]
) -> tuple[ValueExpr, ValueExpr] | None:
    """Split ``a == b`` into (bound side, side reading only ``binder``)."""
    if not (isinstance(pred, Apply) and pred.op.name == "=="):
        return None
    left, right = pred.args
    left_vars, right_vars = expr_vars(left), expr_vars(right)
    if right_vars == {binder} and left_vars and left_vars <= bound:
        return left, right
    if left_vars == {binder} and right_vars and right_vars <= bound:
        return right, left
    return None


def evaluate(q: QueryNode, db: Database, cfg: EvalConfig | None = None) -> Relation:
    return Evaluator(db, cfg).run(q)


@dataclass
class DiffReport:
    datasets: int = 0
    affine: bool = False
    incomplete_witness: bool = False
    mismatches: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches


def _is_affine(q: QueryNode) -> bool:
    return any(
        diagnostic.sub_code == "duplicate"
        for path, fix in fix_nodes(q)
        for diagnostic in check_linear(fix, path)
    )


def diff_test(
    q: QueryNode,
    db: Database | Sequence[Database],
    cap: int = DEFAULT_ITERATION_CAP,
    require_witness: bool = True,
) -> DiffReport:
    """Compare naive, semi-naive and (for non-linear queries) delta-only evaluation."""
    databases = [db] if isinstance(db, Mapping) else list(db)
    report = DiffReport(datasets=len(databases), affine=_is_affine(q))

    for number, database in enumerate(databases, start=1):
        results: dict[EvalMode, set[Row] | None] = {}
        for mode in EvalMode:
            if mode == EvalMode.DELTAONLY and not report.affine:
                continue
            try:
                results[mode] = evaluate(q, database, EvalConfig(mode=mode, cap=cap)).as_set()
            except NontermError:
                results[mode] = None

        naive, semi = results[EvalMode.NAIVE], results[EvalMode.SEMINAIVE]
        if (naive is None) != (semi is None):
            report.mismatches.append(f"dataset {number}: only one of naive/seminaive terminates")
        elif naive is not None and naive != semi:
            difference = len(naive ^ (semi or set()))
            report.mismatches.append(
                f"dataset {number}: naive and seminaive differ by {difference} rows"
            )
        delta = results.get(EvalMode.DELTAONLY)
        if delta is not None and semi is not None and delta < semi:
            report.incomplete_witness = True

    if require_witness and report.affine and not report.incomplete_witness:
        report.mismatches.append("delta-only evaluation was complete on every dataset")
    return report
