"""First-order query and expression trees.

Nodes are immutable. Every node computes its cached facts (schema, category,
dependency multiset for queries; result type, shape and constructor flag for
expressions) when it is constructed, so a tree that exists is a tree whose
cached facts agree with its children.

Binders are plain integer ids. Builders allocate a fresh ``RowVar`` for every
map/flatMap/filter/aggregate/groupBy and hand it to the caller's function, which
returns the body built from ``var["column"]`` references.
"""

from __future__ import annotations

import itertools
import threading
from collections import Counter
from dataclasses import dataclass, field, fields, is_dataclass, replace
from enum import Enum, auto
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence, Union

from fixql.errors import (
    ArityError,
    BaseCaseError,
    RangeRestrictionError,
    SchemaError,
    ShapeError,
    ValidationError,
)
from fixql.models import IDENTIFIER, Category, ColumnType, RowSchema, Shape
from fixql.operators import AGGREGATIONS, OperatorSignature, lookup
from fixql.configs import RECURSIVE_ALIAS_PREFIX


class _IdAllocator:
    def __init__(self) -> None:
        self._counter = itertools.count(1)
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            return next(self._counter)


_fix_ids = _IdAllocator()
_var_ids = _IdAllocator()


def fresh_fix_id() -> int:
    return _fix_ids.next()


def fresh_var_id() -> int:
    return _var_ids.next()


def shape_join(declared: Shape, arg_shapes: Iterable[Shape]) -> Shape:
    if declared == Shape.SCALAR or any(shape == Shape.SCALAR for shape in arg_shapes):
        return Shape.SCALAR
    return Shape.NON_SCALAR


# dependencies


@dataclass(frozen=True, order=True)
class DepRef:
    fix: int
    index: int

    def __str__(self) -> str:
        return f"({self.fix},{self.index})"


@dataclass(frozen=True)
class DepMultiset:
    refs: tuple[DepRef, ...] = ()

    @classmethod
    def of(cls, *refs: DepRef) -> DepMultiset:
        return DepMultiset(tuple(sorted(refs)))

    def __add__(self, other: DepMultiset) -> DepMultiset:
        return DepMultiset(tuple(sorted(self.refs + other.refs)))

    def __len__(self) -> int:
        return len(self.refs)

    def __iter__(self) -> Iterator[DepRef]:
        return iter(self.refs)

    def __bool__(self) -> bool:
        return bool(self.refs)

    def __str__(self) -> str:
        return "{" + ", ".join(str(ref) for ref in self.refs) + "}"

    def count(self, ref: DepRef) -> int:
        return self.refs.count(ref)

    def counts(self) -> Counter[DepRef]:
        return Counter(self.refs)

    def for_fix(self, fix: int) -> DepMultiset:
        return DepMultiset(tuple(ref for ref in self.refs if ref.fix == fix))

    def without(self, fix: int) -> DepMultiset:
        return DepMultiset(tuple(ref for ref in self.refs if ref.fix != fix))

    def support(self) -> set[DepRef]:
        return set(self.refs)


# expressions


class ExprNode:
    shape: Shape
    uses_constructor: bool

    def _cache(self, **values: Any) -> None:
        for name, value in values.items():
            object.__setattr__(self, name, value)


class ValueExpr(ExprNode):
    result_type: ColumnType


@dataclass(frozen=True)
class ColumnRef(ValueExpr):
    var: int
    column: str
    type: ColumnType
    result_type: ColumnType = field(init=False, repr=False, compare=False)
    shape: Shape = field(init=False, repr=False, compare=False)
    uses_constructor: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._cache(result_type=self.type, shape=Shape.NON_SCALAR, uses_constructor=False)


@dataclass(frozen=True)
class Lit(ValueExpr):
    value: Any
    type: ColumnType
    result_type: ColumnType = field(init=False, repr=False, compare=False)
    shape: Shape = field(init=False, repr=False, compare=False)
    uses_constructor: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.type.accepts(self.value):
            raise SchemaError(f"Literal {self.value!r} is not of type {self.type}")
        self._cache(result_type=self.type, shape=Shape.NON_SCALAR, uses_constructor=False)


def _check_args(op: OperatorSignature, args: Sequence[ValueExpr]) -> None:
    arg_types = tuple(arg.result_type for arg in args)
    if arg_types != op.arg_types:
        rendered = ", ".join(str(arg_type) for arg_type in arg_types)
        raise SchemaError(f"Operator '{op.op_id}' does not accept ({rendered})")


@dataclass(frozen=True)
class Apply(ValueExpr):
    op: OperatorSignature
    args: tuple[ValueExpr, ...]
    result_type: ColumnType = field(init=False, repr=False, compare=False)
    shape: Shape = field(init=False, repr=False, compare=False)
    uses_constructor: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.op.is_aggregation:
            raise ShapeError(f"Aggregation '{self.op.name}' must be applied with AggApply")
        _check_args(self.op, self.args)
        self._cache(
            result_type=self.op.result_type,
            shape=shape_join(self.op.declared_shape, [arg.shape for arg in self.args]),
            uses_constructor=self.op.is_constructor
            or any(arg.uses_constructor for arg in self.args),
        )


@dataclass(frozen=True)
class AggApply(ValueExpr):
    op: OperatorSignature
    args: tuple[ValueExpr, ...]
    result_type: ColumnType = field(init=False, repr=False, compare=False)
    shape: Shape = field(init=False, repr=False, compare=False)
    uses_constructor: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.op.is_aggregation:
            raise ShapeError(f"Operator '{self.op.name}' is not an aggregation")
        _check_args(self.op, self.args)
        if any(arg.shape == Shape.SCALAR for arg in self.args):
            raise ShapeError(f"Nested aggregation inside '{self.op.name}'")
        self._cache(
            result_type=self.op.result_type,
            shape=Shape.SCALAR,
            uses_constructor=any(arg.uses_constructor for arg in self.args),
        )


@dataclass(frozen=True)
class RowCtor(ExprNode):
    fields: tuple[tuple[str, ValueExpr], ...]
    shape: Shape = field(init=False, repr=False, compare=False)
    uses_constructor: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        # RowSchema validates names, emptiness and uniqueness
        RowSchema([(name, expr.result_type) for name, expr in self.fields])
        self._cache(
            shape=shape_join(Shape.NON_SCALAR, [expr.shape for _, expr in self.fields]),
            uses_constructor=any(expr.uses_constructor for _, expr in self.fields),
        )

    @property
    def schema(self) -> RowSchema:
        return RowSchema([(name, expr.result_type) for name, expr in self.fields])

    def names(self) -> list[str]:
        return [name for name, _ in self.fields]

    def exprs(self) -> list[ValueExpr]:
        return [expr for _, expr in self.fields]

    def has_scalar_field(self) -> bool:
        return any(expr.shape == Shape.SCALAR for _, expr in self.fields)


ExprLike = Union[ValueExpr, int, float, bool, str]


def lit(value: Any, column_type: ColumnType | None = None) -> Lit:
    if column_type is None:
        if isinstance(value, bool):
            column_type = ColumnType.BOOL
        elif isinstance(value, int):
            column_type = ColumnType.INT
        elif isinstance(value, float):
            column_type = ColumnType.FLOAT
        elif isinstance(value, str):
            column_type = ColumnType.TEXT
        else:
            raise SchemaError(f"No column type for literal {value!r}")
    return Lit(value, column_type)


def as_expr(value: ExprLike) -> ValueExpr:
    return value if isinstance(value, ValueExpr) else lit(value)


def op(name: str, *args: ExprLike) -> Apply:
    exprs = tuple(as_expr(arg) for arg in args)
    signature = lookup(name, tuple(expr.result_type for expr in exprs))
    return Apply(signature, exprs)


def agg(name: str, arg: ExprLike) -> AggApply:
    if name not in AGGREGATIONS:
        raise ShapeError(f"'{name}' is not an aggregation")
    expr = as_expr(arg)
    return AggApply(lookup(name, (expr.result_type,)), (expr,))


def and_(*predicates: ValueExpr) -> ValueExpr:
    if not predicates:
        raise SchemaError("and_ needs at least one predicate")
    result = predicates[0]
    for predicate in predicates[1:]:
        result = op("and", result, predicate)
    return result


def row(**fields: ExprLike) -> RowCtor:
    return RowCtor(tuple((name, as_expr(value)) for name, value in fields.items()))


def as_row(value: RowCtor | Mapping[str, ExprLike]) -> RowCtor:
    if isinstance(value, RowCtor):
        return value
    return RowCtor(tuple((name, as_expr(expr)) for name, expr in value.items()))


@dataclass(frozen=True)
class RowVar:
    id: int
    schema: RowSchema

    def __getitem__(self, column: str) -> ColumnRef:
        return ColumnRef(self.id, column, self.schema.type_of(column))

    def columns(self) -> RowCtor:
        return RowCtor(tuple((name, self[name]) for name in self.schema.names()))


# queries


class SetOpKind(Enum):
    UNION = auto()
    UNION_ALL = auto()
    INTERSECT = auto()
    INTERSECT_ALL = auto()

    def __str__(self) -> str:
        return self.name.lower().replace("_", "")

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> SetOpKind:
        for kind in SetOpKind:
            if str(kind) == value:
                return kind
        raise KeyError(value)

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(kind) for kind in SetOpKind]

    @property
    def sql(self) -> str:
        return self.name.replace("_", " ")

    @property
    def category(self) -> Category:
        return Category.SET if self in (SetOpKind.UNION, SetOpKind.INTERSECT) else Category.BAG


class QueryNode:
    schema: RowSchema
    category: Category
    deps: DepMultiset

    @property
    def restricted(self) -> bool:
        return bool(self.deps)

    def _cache(self, **values: Any) -> None:
        for name, value in values.items():
            object.__setattr__(self, name, value)

    def map(self, fn: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]]) -> Map:
        return build_map(self, fn)

    def flat_map(self, fn: Callable[[RowVar], QueryNode]) -> FlatMap:
        return build_flatmap(self, fn)

    def filter(self, fn: Callable[[RowVar], ValueExpr]) -> Filter:
        return build_filter(self, fn)

    def distinct(self) -> Distinct:
        return build_distinct(self)

    def union(self, other: QueryNode) -> SetOp:
        return build_union(self, other)

    def union_all(self, other: QueryNode) -> SetOp:
        return build_unionall(self, other)

    def intersect(self, other: QueryNode) -> SetOp:
        return build_intersect(self, other)

    def intersect_all(self, other: QueryNode) -> SetOp:
        return build_intersectall(self, other)

    def aggregate(self, fn: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]]) -> Aggregate:
        return build_aggregate(self, fn)

    def group_by(
        self,
        keys: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]],
        select: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]],
        having: Callable[[RowVar], ValueExpr] | None = None,
    ) -> GroupBy:
        return build_groupby(self, keys, select, having)


def _check_table_name(name: str) -> None:
    if not IDENTIFIER.match(name):
        raise SchemaError(f"Invalid relation name '{name}'")


def _check_body(body: ExprNode, what: str) -> None:
    if body.shape == Shape.SCALAR:
        raise ShapeError(f"{what} body must not aggregate")


def _check_predicate(pred: ValueExpr, what: str) -> None:
    if pred.result_type != ColumnType.BOOL:
        raise SchemaError(f"{what} predicate must be bool, got {pred.result_type}")


@dataclass(frozen=True)
class TableScan(QueryNode):
    name: str
    schema: RowSchema
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_table_name(self.name)
        self._cache(category=Category.BAG, deps=DepMultiset())


@dataclass(frozen=True)
class RecRef(QueryNode):
    dep: DepRef
    schema: RowSchema
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.dep.index < 1:
            raise ValidationError(f"Recursive reference index {self.dep.index} must be positive")
        self._cache(category=Category.BAG, deps=DepMultiset.of(self.dep))


@dataclass(frozen=True)
class Map(QueryNode):
    src: QueryNode
    binder: int
    body: RowCtor
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_body(self.body, "map")
        self._cache(schema=self.body.schema, category=Category.BAG, deps=self.src.deps)


@dataclass(frozen=True)
class FlatMap(QueryNode):
    src: QueryNode
    binder: int
    inner: QueryNode
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._cache(
            schema=self.inner.schema,
            category=Category.BAG,
            deps=self.src.deps + self.inner.deps,
        )


@dataclass(frozen=True)
class Filter(QueryNode):
    src: QueryNode
    binder: int
    pred: ValueExpr
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_predicate(self.pred, "filter")
        _check_body(self.pred, "filter")
        self._cache(schema=self.src.schema, category=self.src.category, deps=self.src.deps)


@dataclass(frozen=True)
class Distinct(QueryNode):
    src: QueryNode
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._cache(schema=self.src.schema, category=Category.SET, deps=self.src.deps)


@dataclass(frozen=True)
class SetOp(QueryNode):
    kind: SetOpKind
    left: QueryNode
    right: QueryNode
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.left.schema != self.right.schema:
            raise SchemaError(f"{self.kind} of {self.left.schema} and {self.right.schema}")
        self._cache(
            schema=self.left.schema,
            category=self.kind.category,
            deps=self.left.deps + self.right.deps,
        )


@dataclass(frozen=True)
class Aggregate(QueryNode):
    src: QueryNode
    binder: int
    body: RowCtor
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.body.has_scalar_field():
            raise ShapeError("aggregate body needs at least one aggregated field")
        self._cache(schema=self.body.schema, category=Category.BAG, deps=self.src.deps)


@dataclass(frozen=True)
class GroupBy(QueryNode):
    src: QueryNode
    binder: int
    keys: RowCtor
    select: RowCtor
    having: ValueExpr | None = None
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.keys.shape == Shape.SCALAR:
            raise ShapeError("groupBy keys must not aggregate")
        shapes = [self.keys.shape, self.select.shape]
        if self.having is not None:
            _check_predicate(self.having, "having")
            shapes.append(self.having.shape)
        if shape_join(Shape.NON_SCALAR, shapes) != Shape.SCALAR:
            raise ShapeError("groupBy needs an aggregation in select or having")
        self._cache(schema=self.select.schema, category=Category.BAG, deps=self.src.deps)


@dataclass(frozen=True)
class JoinSource:
    binder: int
    query: QueryNode


@dataclass(frozen=True)
class Join(QueryNode):
    sources: tuple[JoinSource, ...]
    pred: ValueExpr | None
    body: RowCtor
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.sources) < 2:
            raise ArityError("a join needs at least two sources")
        if self.pred is not None:
            _check_predicate(self.pred, "join")
            _check_body(self.pred, "join")
        _check_body(self.body, "join")
        deps = DepMultiset()
        for source in self.sources:
            deps = deps + source.query.deps
        self._cache(schema=self.body.schema, category=Category.BAG, deps=deps)


@dataclass(frozen=True)
class Fix(QueryNode):
    fix_id: int
    bases: tuple[QueryNode, ...]
    defs: tuple[QueryNode, ...]
    names: tuple[str, ...] | None = None
    result: int = 1
    schema: RowSchema = field(init=False, repr=False, compare=False)
    category: Category = field(init=False, repr=False, compare=False)
    deps: DepMultiset = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.bases:
            raise ArityError("a fix needs at least one base")
        if len(self.defs) != len(self.bases):
            raise ArityError(
                f"fix of arity {len(self.bases)} got {len(self.defs)} recursive definitions"
            )
        if self.names is not None:
            if len(self.names) != len(self.bases) or len(set(self.names)) != len(self.names):
                raise ArityError(f"fix component names {list(self.names)} do not fit the arity")
            for name in self.names:
                _check_table_name(name)
        if not 1 <= self.result <= len(self.bases):
            raise ArityError(f"fix result {self.result} out of range 1..{len(self.bases)}")

        for index, base in enumerate(self.bases, start=1):
            if base.deps:
                raise BaseCaseError(f"base {index} reads recursive relations {base.deps}")

        for index, (base, definition) in enumerate(zip(self.bases, self.defs), start=1):
            if base.schema != definition.schema:
                raise RangeRestrictionError(
                    f"component {index}: recursive definition {definition.schema}"
                    f" differs from base {base.schema}",
                    component=index,
                )

        self._check_recursive_references()

        deps = DepMultiset()
        for node in self.bases + self.defs:
            deps = deps + node.deps
        self._cache(
            schema=self.bases[self.result - 1].schema,
            category=(
                Category.SET
                if all(category == Category.SET for category in self.component_categories)
                else Category.BAG
            ),
            deps=deps.without(self.fix_id),
        )

    def _check_recursive_references(self) -> None:
        for definition in self.defs:
            for ref in definition.deps.for_fix(self.fix_id):
                if ref.index > self.arity:
                    raise ValidationError(
                        f"reference {ref} exceeds the arity {self.arity} of fix {self.fix_id}"
                    )
            for _, node in walk(definition):
                if isinstance(node, RecRef) and node.dep.fix == self.fix_id:
                    if node.schema != self.bases[node.dep.index - 1].schema:
                        raise ValidationError(
                            f"reference {node.dep} has schema {node.schema}, expected"
                            f" {self.bases[node.dep.index - 1].schema}"
                        )

    @property
    def arity(self) -> int:
        return len(self.bases)

    @property
    def component_categories(self) -> tuple[Category, ...]:
        return tuple(definition.category for definition in self.defs)


# builders


def build_table(name: str, schema: RowSchema | Sequence[tuple[str, ColumnType]]) -> TableScan:
    if not isinstance(schema, RowSchema):
        schema = RowSchema(list(schema))
    return TableScan(name, schema)


def _bind(src: QueryNode) -> RowVar:
    return RowVar(fresh_var_id(), src.schema)


def build_map(src: QueryNode, fn: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]]) -> Map:
    var = _bind(src)
    return Map(src, var.id, as_row(fn(var)))


def build_flatmap(src: QueryNode, fn: Callable[[RowVar], QueryNode]) -> FlatMap:
    var = _bind(src)
    return FlatMap(src, var.id, fn(var))


def build_filter(src: QueryNode, fn: Callable[[RowVar], ValueExpr]) -> Filter:
    var = _bind(src)
    return Filter(src, var.id, fn(var))


def build_distinct(src: QueryNode) -> Distinct:
    return Distinct(src)


def build_union(left: QueryNode, right: QueryNode) -> SetOp:
    return SetOp(SetOpKind.UNION, left, right)


def build_unionall(left: QueryNode, right: QueryNode) -> SetOp:
    return SetOp(SetOpKind.UNION_ALL, left, right)


def build_intersect(left: QueryNode, right: QueryNode) -> SetOp:
    return SetOp(SetOpKind.INTERSECT, left, right)


def build_intersectall(left: QueryNode, right: QueryNode) -> SetOp:
    return SetOp(SetOpKind.INTERSECT_ALL, left, right)


def build_aggregate(
    src: QueryNode, fn: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]]
) -> Aggregate:
    var = _bind(src)
    return Aggregate(src, var.id, as_row(fn(var)))


def build_groupby(
    src: QueryNode,
    keys: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]],
    select: Callable[[RowVar], RowCtor | Mapping[str, ExprLike]],
    having: Callable[[RowVar], ValueExpr] | None = None,
) -> GroupBy:
    var = _bind(src)
    return GroupBy(
        src,
        var.id,
        as_row(keys(var)),
        as_row(select(var)),
        having(var) if having is not None else None,
    )


def build_fix(
    bases: Sequence[QueryNode],
    def_builder: Callable[..., QueryNode | Sequence[QueryNode]],
    names: Sequence[str] | None = None,
    result: int = 1,
) -> Fix:
    bases = tuple(bases)
    if not bases:
        raise ArityError("a fix needs at least one base")
    for index, base in enumerate(bases, start=1):
        if base.deps:
            raise BaseCaseError(f"base {index} reads recursive relations {base.deps}")

    fix_id = fresh_fix_id()
    refs = [RecRef(DepRef(fix_id, index), base.schema) for index, base in enumerate(bases, 1)]
    produced = def_builder(*refs)
    defs = (produced,) if isinstance(produced, QueryNode) else tuple(produced)
    if len(defs) != len(bases):
        raise ArityError(f"fix of arity {len(bases)} got {len(defs)} recursive definitions")

    return Fix(
        fix_id=fix_id,
        bases=bases,
        defs=defs,
        names=tuple(names) if names is not None else None,
        result=result,
    )


# tree utilities


def children(node: QueryNode) -> list[tuple[str, QueryNode]]:
    match node:
        case Map() | Filter() | Aggregate() | GroupBy() | Distinct():
            return [("src", node.src)]
        case FlatMap():
            return [("src", node.src), ("inner", node.inner)]
        case SetOp():
            return [("left", node.left), ("right", node.right)]
        case Join():
            return [(f"sources[{i}]", source.query) for i, source in enumerate(node.sources)]
        case Fix():
            return [(f"bases[{i}]", base) for i, base in enumerate(node.bases)] + [
                (f"defs[{i}]", definition) for i, definition in enumerate(node.defs)
            ]
        case _:
            return []


def replace_children(node: QueryNode, new_children: Sequence[QueryNode]) -> QueryNode:
    match node:
        case Map() | Filter() | Aggregate() | GroupBy() | Distinct():
            (src,) = new_children
            return node if src is node.src else replace(node, src=src)
        case FlatMap():
            src, inner = new_children
            if src is node.src and inner is node.inner:
                return node
            return replace(node, src=src, inner=inner)
        case SetOp():
            left, right = new_children
            if left is node.left and right is node.right:
                return node
            return replace(node, left=left, right=right)
        case Join():
            sources = tuple(
                JoinSource(source.binder, query)
                for source, query in zip(node.sources, new_children)
            )
            return replace(node, sources=sources)
        case Fix():
            arity = node.arity
            return replace(
                node,
                bases=tuple(new_children[:arity]),
                defs=tuple(new_children[arity:]),
            )
        case _:
            return node


def transform(node: QueryNode, fn: Callable[[QueryNode], QueryNode]) -> QueryNode:
    """Rebuild the tree bottom-up, applying ``fn`` to every rebuilt node."""
    rebuilt = replace_children(node, [transform(child, fn) for _, child in children(node)])
    return fn(rebuilt)


def walk(node: QueryNode, path: str = "$") -> Iterator[tuple[str, QueryNode]]:
    yield path, node
    for step, child in children(node):
        yield from walk(child, f"{path}.{step}")


def node_exprs(node: QueryNode) -> list[tuple[str, ExprNode]]:
    match node:
        case Map() | Aggregate():
            return [("body", node.body)]
        case Filter():
            return [("pred", node.pred)]
        case GroupBy():
            exprs: list[tuple[str, ExprNode]] = [("keys", node.keys), ("select", node.select)]
            if node.having is not None:
                exprs.append(("having", node.having))
            return exprs
        case Join():
            joined: list[tuple[str, ExprNode]] = [("body", node.body)]
            if node.pred is not None:
                joined.insert(0, ("pred", node.pred))
            return joined
        case _:
            return []


def expr_children(expr: ExprNode) -> list[ExprNode]:
    match expr:
        case Apply() | AggApply():
            return list(expr.args)
        case RowCtor():
            return [value for _, value in expr.fields]
        case _:
            return []


def expr_walk(expr: ExprNode) -> Iterator[ExprNode]:
    yield expr
    for child in expr_children(expr):
        yield from expr_walk(child)


def expr_vars(expr: ExprNode) -> set[int]:
    return {node.var for node in expr_walk(expr) if isinstance(node, ColumnRef)}


def map_columns(expr: Any, fn: Callable[[ColumnRef], ValueExpr]) -> Any:
    """Rebuild an expression replacing every column reference with ``fn(ref)``."""
    match expr:
        case ColumnRef():
            return fn(expr)
        case Apply():
            return Apply(expr.op, tuple(map_columns(arg, fn) for arg in expr.args))
        case AggApply():
            return AggApply(expr.op, tuple(map_columns(arg, fn) for arg in expr.args))
        case RowCtor():
            return RowCtor(tuple((name, map_columns(value, fn)) for name, value in expr.fields))
        case _:
            return expr


def rename_var(expr: Any, old: int, new: int) -> Any:
    return map_columns(
        expr, lambda ref: ColumnRef(new, ref.column, ref.type) if ref.var == old else ref
    )


def _binders(node: QueryNode) -> set[int]:
    match node:
        case Map() | FlatMap() | Filter() | Aggregate() | GroupBy():
            return {node.binder}
        case Join():
            return {source.binder for source in node.sources}
        case _:
            return set()


def free_vars(node: QueryNode) -> set[int]:
    """Binder ids referenced inside ``node`` but bound outside of it."""
    used: set[int] = set()
    for _, expr in node_exprs(node):
        used |= expr_vars(expr)
    bound = _binders(node)
    match node:
        case FlatMap():
            return free_vars(node.src) | ((free_vars(node.inner) | used) - bound)
        case Join():
            inner: set[int] = set()
            for source in node.sources:
                inner |= free_vars(source.query)
            return inner | (used - bound)
        case _:
            result = used - bound
            for _, child in children(node):
                result |= free_vars(child)
            return result


_BINDING_FIELDS = {"fix_id": "fix", "binder": "var"}
_REFERENCE_FIELDS = {(DepRef, "fix"): "fix", (ColumnRef, "var"): "var"}


def alpha_equal(left: Any, right: Any) -> bool:
    """Structural equality up to a consistent renaming of fix ids and binders."""
    renaming: dict[tuple[str, int], int] = {}
    taken: set[tuple[str, int]] = set()

    def equal(left: Any, right: Any) -> bool:
        if isinstance(left, tuple) and isinstance(right, tuple):
            return len(left) == len(right) and all(map(equal, left, right))
        if not is_dataclass(left) or type(left) is not type(right):
            return bool(left == right)
        for item in fields(left):
            if not item.compare:
                continue
            left_value = getattr(left, item.name)
            right_value = getattr(right, item.name)
            if item.name in _BINDING_FIELDS:
                namespace = _BINDING_FIELDS[item.name]
                if (namespace, right_value) in taken:
                    return False
                renaming[namespace, left_value] = right_value
                taken.add((namespace, right_value))
            elif (type(left), item.name) in _REFERENCE_FIELDS:
                namespace = _REFERENCE_FIELDS[type(left), item.name]
                if renaming.get((namespace, left_value), left_value) != right_value:
                    return False
            elif not equal(left_value, right_value):
                return False
        return True

    return equal(left, right)


def fix_nodes(node: QueryNode) -> list[tuple[str, Fix]]:
    return [(path, child) for path, child in walk(node) if isinstance(child, Fix)]


def table_scans(node: QueryNode) -> dict[str, RowSchema]:
    tables: dict[str, RowSchema] = {}
    for _, child in walk(node):
        if isinstance(child, TableScan):
            if child.name in tables and tables[child.name] != child.schema:
                raise SchemaError(
                    f"Table '{child.name}' is scanned as {tables[child.name]} and {child.schema}"
                )
            tables[child.name] = child.schema
    return tables


def component_names(node: QueryNode) -> dict[DepRef, str]:
    """Names of every fix component, with unnamed ones numbered in pre-order."""
    names: dict[DepRef, str] = {}
    counter = itertools.count(1)
    for _, fix in fix_nodes(node):
        for index in range(1, fix.arity + 1):
            if fix.names is not None:
                names[DepRef(fix.fix_id, index)] = fix.names[index - 1]
            else:
                names[DepRef(fix.fix_id, index)] = f"{RECURSIVE_ALIAS_PREFIX}{next(counter)}"
    return names


def conjuncts(pred: ValueExpr) -> list[ValueExpr]:
    if isinstance(pred, Apply) and pred.op.op_id == "and":
        return conjuncts(pred.args[0]) + conjuncts(pred.args[1])
    return [pred]


def _absorb_filters(node: QueryNode, binder: int) -> tuple[QueryNode, list[ValueExpr]]:
    preds: list[ValueExpr] = []
    while isinstance(node, Filter):
        preds.append(rename_var(node.pred, node.binder, binder))
        node = node.src
    preds.reverse()
    return node, preds


def flatmap_to_join(node: FlatMap) -> Join | None:
    """One flattening step: a flatMap over a closed ``map?(filter*(source))`` or join.

    Filters on the inner source become join predicates, renamed onto the map's
    binder. Returns None when the inner side reads anything bound outside it.
    """
    outer = JoinSource(node.binder, node.src)
    inner = node.inner

    if isinstance(inner, Join):
        if any(free_vars(source.query) for source in inner.sources):
            return None
        return Join((outer,) + inner.sources, inner.pred, inner.body)

    if isinstance(inner, Map):
        binder, body = inner.binder, inner.body
        source, preds = _absorb_filters(inner.src, binder)
    else:
        binder = fresh_var_id()
        source, preds = _absorb_filters(inner, binder)
        body = RowCtor(
            tuple(
                (name, ColumnRef(binder, name, column_type))
                for name, column_type in source.schema
            )
        )
    if isinstance(source, Join) or free_vars(source):
        return None
    return Join((outer, JoinSource(binder, source)), and_(*preds) if preds else None, body)
