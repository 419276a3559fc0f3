import functools
import json
from collections.abc import Iterable
from importlib import resources
from typing import Any

from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from fixql.configs import IR_SCHEMA_FILE, IR_VERSION
from fixql.errors import ParseError, SchemaError, ValidationError
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
    JoinSource,
    Lit,
    Map,
    QueryNode,
    RecRef,
    RowCtor,
    RowVar,
    SetOp,
    SetOpKind,
    TableScan,
    ValueExpr,
    fresh_fix_id,
    fresh_var_id,
)
from fixql.models import Category, ColumnType, RowSchema, Shape
from fixql.operators import by_id


def serialize_ir(query: QueryNode) -> str:
    return json.dumps(to_document(query), indent=2) + "\n"


def to_document(query: QueryNode) -> dict[str, Any]:
    return {"version": IR_VERSION, "query": IrEncoder().query(query)}


def deserialize_ir(text: str) -> QueryNode:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as ex:
        raise ParseError(ex.msg, f"line {ex.lineno} column {ex.colno}") from ex
    return from_document(document)


def from_document(document: Any) -> QueryNode:
    error = best_match(ir_validator().iter_errors(document))
    if error is not None:
        raise ParseError(error.message, json_path(error.absolute_path))
    return IrDecoder().query(document["query"], "$.query")


@functools.cache
def ir_validator() -> Draft202012Validator:
    text = (resources.files("fixql") / "schemas" / IR_SCHEMA_FILE).read_text()
    return Draft202012Validator(json.loads(text))


def json_path(parts: Iterable[str | int]) -> str:
    return "$" + "".join(f"[{part}]" if isinstance(part, int) else f".{part}" for part in parts)


def encode_schema(schema: RowSchema) -> list[dict[str, str]]:
    return [{"name": name, "type": str(column_type)} for name, column_type in schema]


class IrEncoder:
    """Encodes a query, renumbering fix and binder ids in pre-order."""

    def __init__(self) -> None:
        self.fix_ids: dict[int, int] = {}
        self.var_ids: dict[int, int] = {}

    def _fix(self, fix_id: int) -> int:
        return self.fix_ids.setdefault(fix_id, len(self.fix_ids) + 1)

    def _var(self, var_id: int) -> int:
        return self.var_ids.setdefault(var_id, len(self.var_ids) + 1)

    def _deps(self, deps: DepMultiset) -> list[list[int]]:
        return sorted([self._fix(ref.fix), ref.index] for ref in deps)

    def query(self, node: QueryNode) -> dict[str, Any]:
        encoded: dict[str, Any]
        match node:
            case TableScan():
                encoded = {"kind": "table", "name": node.name, "schema": encode_schema(node.schema)}
            case RecRef():
                encoded = {
                    "kind": "recref",
                    "fix": self._fix(node.dep.fix),
                    "index": node.dep.index,
                    "schema": encode_schema(node.schema),
                }
            case Map():
                encoded = {"kind": "map", "binder": self._var(node.binder)}
                encoded["src"] = self.query(node.src)
                encoded["body"] = self.expr(node.body)
            case FlatMap():
                encoded = {"kind": "flatmap", "binder": self._var(node.binder)}
                encoded["src"] = self.query(node.src)
                encoded["inner"] = self.query(node.inner)
            case Filter():
                encoded = {"kind": "filter", "binder": self._var(node.binder)}
                encoded["src"] = self.query(node.src)
                encoded["pred"] = self.expr(node.pred)
            case Distinct():
                encoded = {"kind": "distinct", "src": self.query(node.src)}
            case SetOp():
                encoded = {
                    "kind": str(node.kind),
                    "left": self.query(node.left),
                    "right": self.query(node.right),
                }
            case Aggregate():
                encoded = {"kind": "aggregate", "binder": self._var(node.binder)}
                encoded["src"] = self.query(node.src)
                encoded["body"] = self.expr(node.body)
            case GroupBy():
                encoded = {"kind": "groupby", "binder": self._var(node.binder)}
                encoded["src"] = self.query(node.src)
                encoded["keys"] = self.expr(node.keys)
                encoded["select"] = self.expr(node.select)
                encoded["having"] = None if node.having is None else self.expr(node.having)
            case Join():
                encoded = {"kind": "join", "sources": []}
                for source in node.sources:
                    binder = self._var(source.binder)
                    encoded["sources"].append({"binder": binder, "query": self.query(source.query)})
                encoded["pred"] = None if node.pred is None else self.expr(node.pred)
                encoded["body"] = self.expr(node.body)
            case Fix():
                encoded = {
                    "kind": "fix",
                    "id": self._fix(node.fix_id),
                    "names": None if node.names is None else list(node.names),
                    "result": node.result,
                    "bases": [self.query(base) for base in node.bases],
                    "defs": [self.query(definition) for definition in node.defs],
                }
            case _:
                raise ValidationError(f"Unknown query node {type(node).__name__}")

        encoded["category"] = str(node.category)
        encoded["deps"] = self._deps(node.deps)
        return encoded

    def expr(self, node: ExprNode) -> dict[str, Any]:
        match node:
            case ColumnRef():
                return {
                    "kind": "column",
                    "var": self._var(node.var),
                    "column": node.column,
                    "type": str(node.type),
                }
            case Lit():
                return {"kind": "lit", "value": node.value, "type": str(node.type)}
            case Apply():
                return {
                    "kind": "apply",
                    "op": node.op.op_id,
                    "args": [self.expr(arg) for arg in node.args],
                    "shape": str(node.shape),
                }
            case AggApply():
                return {
                    "kind": "agg",
                    "op": node.op.op_id,
                    "args": [self.expr(arg) for arg in node.args],
                    "shape": str(node.shape),
                }
            case RowCtor():
                return {
                    "kind": "row",
                    "fields": [
                        {"name": name, "expr": self.expr(expr)} for name, expr in node.fields
                    ],
                    "shape": str(node.shape),
                }
            case _:
                raise ValidationError(f"Unknown expression node {type(node).__name__}")


class IrDecoder:
    """Decodes a schema-valid ir-v1 query object, allocating fresh fix and binder ids."""

    def __init__(self) -> None:
        self.fix_ids: dict[int, int] = {}
        self.scope: dict[int, RowVar] = {}

    def schema(self, value: list[dict[str, str]]) -> RowSchema:
        return RowSchema(
            [(column["name"], ColumnType.from_str(column["type"])) for column in value]
        )

    def _fresh_fix(self, doc_id: int, path: str) -> int:
        if doc_id in self.fix_ids:
            raise ValidationError(f"fix id {doc_id} is used twice (at {path})")
        self.fix_ids[doc_id] = fresh_fix_id()
        return self.fix_ids[doc_id]

    def _known_fix(self, doc_id: int, path: str) -> int:
        if doc_id not in self.fix_ids:
            raise ValidationError(f"reference to unknown fix {doc_id} (at {path})")
        return self.fix_ids[doc_id]

    def _bind(self, doc_var: int, schema: RowSchema, path: str) -> RowVar:
        if doc_var in self.scope:
            raise ValidationError(f"binder {doc_var} shadows an enclosing binder (at {path})")
        var = RowVar(fresh_var_id(), schema)
        self.scope[doc_var] = var
        return var

    def _unbind(self, doc_var: int) -> None:
        self.scope.pop(doc_var, None)

    # queries

    def query(self, obj: dict[str, Any], path: str) -> QueryNode:
        node: QueryNode
        match kind := obj["kind"]:
            case "table":
                node = TableScan(obj["name"], self.schema(obj["schema"]))
            case "recref":
                node = RecRef(
                    DepRef(self._known_fix(obj["fix"], path), obj["index"]),
                    self.schema(obj["schema"]),
                )
            case "map" | "filter" | "aggregate" | "groupby" | "flatmap":
                node = self._binder_node(kind, obj, path)
            case "distinct":
                node = Distinct(self.query(obj["src"], f"{path}.src"))
            case "join":
                node = self._join(obj, path)
            case "fix":
                node = self._fixpoint(obj, path)
            case _:
                node = SetOp(
                    SetOpKind.from_str(kind),
                    self.query(obj["left"], f"{path}.left"),
                    self.query(obj["right"], f"{path}.right"),
                )

        self._validate_cached(node, obj, path)
        return node

    def _binder_node(self, kind: str, obj: dict[str, Any], path: str) -> QueryNode:
        src = self.query(obj["src"], f"{path}.src")
        doc_var = obj["binder"]
        var = self._bind(doc_var, src.schema, path)
        try:
            match kind:
                case "map":
                    return Map(src, var.id, self.row(obj["body"], f"{path}.body"))
                case "filter":
                    return Filter(src, var.id, self.value(obj["pred"], f"{path}.pred"))
                case "aggregate":
                    return Aggregate(src, var.id, self.row(obj["body"], f"{path}.body"))
                case "groupby":
                    having = obj.get("having")
                    return GroupBy(
                        src,
                        var.id,
                        self.row(obj["keys"], f"{path}.keys"),
                        self.row(obj["select"], f"{path}.select"),
                        None if having is None else self.value(having, f"{path}.having"),
                    )
                case _:
                    return FlatMap(src, var.id, self.query(obj["inner"], f"{path}.inner"))
        finally:
            self._unbind(doc_var)

    def _join(self, obj: dict[str, Any], path: str) -> Join:
        sources = [
            (source["binder"], self.query(source["query"], f"{path}.sources[{index}].query"))
            for index, source in enumerate(obj["sources"])
        ]
        bound = []
        try:
            join_sources = []
            for doc_var, query in sources:
                var = self._bind(doc_var, query.schema, path)
                bound.append(doc_var)
                join_sources.append(JoinSource(var.id, query))
            pred = obj.get("pred")
            return Join(
                tuple(join_sources),
                None if pred is None else self.value(pred, f"{path}.pred"),
                self.row(obj["body"], f"{path}.body"),
            )
        finally:
            for doc_var in bound:
                self._unbind(doc_var)

    def _fixpoint(self, obj: dict[str, Any], path: str) -> Fix:
        fix_id = self._fresh_fix(obj["id"], path)
        bases = [
            self.query(base, f"{path}.bases[{index}]") for index, base in enumerate(obj["bases"])
        ]
        defs = [
            self.query(definition, f"{path}.defs[{index}]")
            for index, definition in enumerate(obj["defs"])
        ]
        names = obj.get("names")
        return Fix(
            fix_id=fix_id,
            bases=tuple(bases),
            defs=tuple(defs),
            names=None if names is None else tuple(names),
            result=obj.get("result", 1),
        )

    def _validate_cached(self, node: QueryNode, obj: dict[str, Any], path: str) -> None:
        category = obj.get("category")
        if category is not None and Category.from_str(category) != node.category:
            raise ValidationError(
                f"category {category} contradicts the computed {node.category} (at {path})"
            )
        deps = obj.get("deps")
        if deps is not None:
            claimed = DepMultiset.of(
                *(DepRef(self._known_fix(fix, path), index) for fix, index in deps)
            )
            if claimed != node.deps:
                raise ValidationError(
                    f"deps {claimed} contradict the computed {node.deps} (at {path})"
                )

    # expressions

    def value(self, obj: dict[str, Any], path: str) -> ValueExpr:
        expr = self.expr(obj, path)
        if not isinstance(expr, ValueExpr):
            raise ParseError("expected a value expression, got a row", path)
        return expr

    def row(self, obj: dict[str, Any], path: str) -> RowCtor:
        expr = self.expr(obj, path)
        if not isinstance(expr, RowCtor):
            raise ParseError("expected a row expression", path)
        return expr

    def expr(self, obj: dict[str, Any], path: str) -> ExprNode:
        expr: ExprNode
        match kind := obj["kind"]:
            case "column":
                expr = self._column(obj, path)
            case "lit":
                column_type = ColumnType.from_str(obj["type"])
                value = obj["value"]
                if column_type == ColumnType.FLOAT and isinstance(value, int):
                    value = float(value)
                try:
                    expr = Lit(value, column_type)
                except SchemaError as ex:
                    raise ParseError(str(ex), path) from ex
            case "apply" | "agg":
                try:
                    signature = by_id(obj["op"])
                except SchemaError as ex:
                    raise ParseError(str(ex), path) from ex
                args = tuple(
                    self.value(arg, f"{path}.args[{index}]")
                    for index, arg in enumerate(obj["args"])
                )
                expr = Apply(signature, args) if kind == "apply" else AggApply(signature, args)
            case _:
                expr = RowCtor(
                    tuple(
                        (item["name"], self.value(item["expr"], f"{path}.fields[{index}]"))
                        for index, item in enumerate(obj["fields"])
                    )
                )

        shape = obj.get("shape")
        if shape is not None and Shape.from_str(shape) != expr.shape:
            raise ValidationError(
                f"shape {shape} contradicts the computed {expr.shape} (at {path})"
            )
        return expr

    def _column(self, obj: dict[str, Any], path: str) -> ColumnRef:
        doc_var = obj["var"]
        if doc_var not in self.scope:
            raise ValidationError(f"column reference to unbound binder {doc_var} (at {path})")
        ref = self.scope[doc_var][obj["column"]]
        declared = ColumnType.from_str(obj["type"])
        if declared != ref.type:
            raise ValidationError(
                f"column {obj['column']} declared {declared} but the binder has {ref.type}"
                f" (at {path})"
            )
        return ref
