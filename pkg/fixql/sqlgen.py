"""SQL generation for checked query trees.

Queries render into frames: a FROM list, WHERE conjuncts and the output
columns as SQL expressions. Filters, maps, flatMaps and joins extend the
current frame; distinct, set operations and aggregations seal it, and any
operation applied to a sealed frame wraps it as a derived table. Fix
components are hoisted into a single WITH clause in front of the statement.
"""

import re
from dataclasses import dataclass, field

from fixql import logger
from fixql.checker import CheckReport, check_all, mutual_components
from fixql.configs import ROW_ALIAS_PREFIX
from fixql.dialects import Dialect, RestrictionProfile, Support, dialect_profile
from fixql.errors import InternalError, UncheckedQuery, UnsupportedFeature
from fixql.ir import (
    AggApply,
    Aggregate,
    Apply,
    ColumnRef,
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
    and_,
    component_names,
    conjuncts,
    fix_nodes,
    flatmap_to_join,
    free_vars,
    rename_var,
    transform,
)
from fixql.models import IDENTIFIER, Category, ColumnType
from fixql.operators import Fixity

RESERVED = frozenset(
    (
        "all",
        "and",
        "as",
        "by",
        "case",
        "cast",
        "distinct",
        "else",
        "end",
        "from",
        "group",
        "having",
        "in",
        "is",
        "join",
        "limit",
        "not",
        "null",
        "on",
        "or",
        "order",
        "recursive",
        "select",
        "table",
        "then",
        "union",
        "user",
        "values",
        "when",
        "where",
        "with",
    )
)

ATOM_PRECEDENCE = 10

Env = dict[int, dict[str, str]]


@dataclass
class SqlDoc:
    text: str
    dialect: Dialect
    warnings: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        return self.text

    def with_header(self) -> str:
        """The SQL text preceded by one comment line per warning."""
        return "".join(f"-- {warning}\n" for warning in self.warnings) + self.text


@dataclass
class _Frame:
    sources: list[str]
    columns: list[tuple[str, str]]
    where: list[str] = field(default_factory=list)
    group_by: list[str] = field(default_factory=list)
    having: str | None = None
    distinct: bool = False
    sealed: bool = False
    star: list[tuple[str, str]] | None = None


@dataclass
class _Cte:
    name: str
    columns: list[str]
    terms: list[str]
    category: Category


# simplifications


def merge_filters(q: QueryNode) -> QueryNode:
    def merge(node: QueryNode) -> QueryNode:
        if isinstance(node, Filter) and isinstance(node.src, Filter):
            inner = node.src
            pred = and_(inner.pred, rename_var(node.pred, node.binder, inner.binder))
            return Filter(inner.src, inner.binder, pred)
        return node

    return transform(q, merge)


def flatten_flatmaps(q: QueryNode) -> QueryNode:
    """Collapse flatMap chains ending in a map into n-ary join frames."""

    def flatten(node: QueryNode) -> QueryNode:
        if isinstance(node, FlatMap):
            return flatmap_to_join(node) or node
        return node

    return transform(q, flatten)


def simplify(q: QueryNode) -> QueryNode:
    return merge_filters(flatten_flatmaps(q))


# rendering


def normalize_sql(text: str) -> str:
    lines = [line for line in text.splitlines() if not line.strip().startswith("--")]
    collapsed = re.sub(r"\s+", " ", " ".join(lines)).strip()
    collapsed = re.sub(r"\(\s+", "(", collapsed)
    collapsed = re.sub(r"\s+\)", ")", collapsed)
    aliases: dict[str, str] = {}

    def rename(match: re.Match[str]) -> str:
        alias = match.group(0)
        if alias not in aliases:
            aliases[alias] = f"{ROW_ALIAS_PREFIX}{len(aliases) + 1}"
        return aliases[alias]

    return re.sub(rf"\b{ROW_ALIAS_PREFIX}\d+\b", rename, collapsed)


def emit_nonlinear_shim(name: str, term: str, dialect: Dialect) -> str:
    if dialect != Dialect.POSTGRES:
        raise InternalError(f"Non-linear shim is only available for postgres, not {dialect}")
    return f"(WITH {name} AS (SELECT * FROM {name})\n  {term})"


class SqlRenderer:
    def __init__(self, q: QueryNode, dialect: Dialect, shim: bool = False) -> None:
        self.q = q
        self.dialect = dialect
        self.features = dialect.features
        self.shim = shim
        self.names = component_names(q)
        self.ctes: list[_Cte] = []
        self.rendered_fixes: set[int] = set()
        self.warnings: list[str] = []
        self._aliases = 0

    def render(self) -> str:
        body = self.select(self.frame(self.q, {}))
        if not self.ctes:
            return body + ";\n"
        definitions = ",\n".join(self.cte(cte) for cte in self.ctes)
        return f"{self.features.recursive_keyword} {definitions}\n{body};\n"

    def cte(self, cte: _Cte) -> str:
        header = self.ident(cte.name)
        if self.features.cte_column_list:
            header += " (" + ", ".join(self.ident(column) for column in cte.columns) + ")"
        connector = "UNION" if cte.category == Category.SET else "UNION ALL"
        terms = f"\n  {connector}\n  ".join(cte.terms)
        return f"{header} AS (\n  {terms}\n)"

    def term(self, text: str) -> str:
        if text.startswith("(WITH ") or not self.features.parenthesized_compound:
            return text
        return f"({text})"

    def alias(self) -> str:
        self._aliases += 1
        return f"{ROW_ALIAS_PREFIX}{self._aliases}"

    def ident(self, name: str) -> str:
        if IDENTIFIER.match(name) and name.lower() not in RESERVED:
            return name
        opening, closing = self.features.quotes
        return f"{opening}{name.replace(closing, closing + closing)}{closing}"

    def relation(self, sql: str, columns: list[str]) -> _Frame:
        alias = self.alias()
        output = [(column, f"{alias}.{self.ident(column)}") for column in columns]
        return _Frame([f"{sql}{self.features.table_alias}{alias}"], list(output), star=list(output))

    def wrap(self, frame: _Frame) -> _Frame:
        return self.relation(f"({self.select(frame)})", [name for name, _ in frame.columns])

    def open(self, node: QueryNode, env: Env) -> _Frame:
        frame = self.frame(node, env)
        return self.wrap(frame) if frame.sealed else frame

    def projection(self, name: str, expr: str) -> str:
        column = self.ident(name)
        if re.fullmatch(rf"{ROW_ALIAS_PREFIX}\d+\.{re.escape(column)}", expr):
            return expr
        return f"{expr} AS {column}"

    def where_items(self, pred: ValueExpr, env: Env) -> list[str]:
        return [self.expr(conjunct, env, 3) for conjunct in conjuncts(pred)]

    def select(self, frame: _Frame) -> str:
        if len(frame.sources) == 1 and frame.columns == frame.star and not frame.group_by:
            projection = "*"
        else:
            projection = ", ".join(self.projection(name, expr) for name, expr in frame.columns)
        text = "SELECT " + ("DISTINCT " if frame.distinct else "") + projection
        text += " FROM " + ", ".join(frame.sources)
        if frame.where:
            text += " WHERE " + " AND ".join(frame.where)
        if frame.group_by:
            text += " GROUP BY " + ", ".join(frame.group_by)
        if frame.having is not None:
            text += " HAVING " + frame.having
        return text

    def frame(self, node: QueryNode, env: Env) -> _Frame:
        match node:
            case TableScan():
                return self.relation(self.ident(node.name), node.schema.names())
            case RecRef():
                return self.relation(self.ident(self.names[node.dep]), node.schema.names())
            case Fix():
                self.fix(node)
                result = DepRef(node.fix_id, node.result)
                return self.relation(self.ident(self.names[result]), node.schema.names())
            case Filter():
                frame = self.open(node.src, env)
                scope = {**env, node.binder: dict(frame.columns)}
                frame.where += self.where_items(node.pred, scope)
                return frame
            case Map():
                frame = self.open(node.src, env)
                scope = {**env, node.binder: dict(frame.columns)}
                frame.columns = self.fields(node.body, scope)
                return frame
            case FlatMap():
                frame = self.open(node.src, env)
                scope = {**env, node.binder: dict(frame.columns)}
                inner = self.frame(node.inner, scope)
                if inner.sealed:
                    if free_vars(node.inner) & {node.binder}:
                        raise UnsupportedFeature(
                            "flatMap over an aggregated or distinct relation that reads the"
                            " outer row needs a lateral join",
                            feature="lateral",
                            dialect=self.dialect,
                        )
                    inner = self.wrap(inner)
                return _Frame(
                    frame.sources + inner.sources,
                    inner.columns,
                    frame.where + inner.where,
                )
            case Join():
                sources: list[str] = []
                where: list[str] = []
                scope = dict(env)
                for source in node.sources:
                    part = self.open(source.query, env)
                    sources += part.sources
                    where += part.where
                    scope[source.binder] = dict(part.columns)
                if node.pred is not None:
                    where += self.where_items(node.pred, scope)
                return _Frame(sources, self.fields(node.body, scope), where)
            case Distinct():
                frame = self.open(node.src, env)
                frame.distinct = True
                frame.sealed = True
                return frame
            case SetOp():
                left = self.select(self.frame(node.left, env))
                right = self.select(self.frame(node.right, env))
                compound = f"{self.term(left)} {node.kind.sql} {self.term(right)}"
                return self.relation(f"({compound})", node.schema.names())
            case Aggregate():
                frame = self.open(node.src, env)
                scope = {**env, node.binder: dict(frame.columns)}
                frame.columns = self.fields(node.body, scope)
                frame.sealed = True
                return frame
            case GroupBy():
                frame = self.open(node.src, env)
                scope = {**env, node.binder: dict(frame.columns)}
                frame.group_by = [self.expr(expr, scope) for expr in node.keys.exprs()]
                frame.columns = self.fields(node.select, scope)
                if node.having is not None:
                    frame.having = self.expr(node.having, scope)
                frame.sealed = True
                return frame
        raise InternalError(f"Cannot render {type(node).__name__}")

    def fix(self, node: Fix) -> None:
        if node.fix_id in self.rendered_fixes:
            return
        self.rendered_fixes.add(node.fix_id)
        if free_vars(node):
            raise UnsupportedFeature(
                "a recursive definition that reads an enclosing row cannot be hoisted",
                feature="correlated-fix",
                dialect=self.dialect,
            )
        for index, (base, definition) in enumerate(zip(node.bases, node.defs), start=1):
            name = self.names[DepRef(node.fix_id, index)]
            category = definition.category
            terms = [self.term(self.select(self.frame(self.strip(base, category), {})))]
            for member in self.members(definition, category):
                text = self.select(self.frame(member, {}))
                if self.shim and self.nonlinear(member, DepRef(node.fix_id, index)):
                    terms.append(emit_nonlinear_shim(self.ident(name), text, self.dialect))
                    self.warnings.append(
                        f"component '{name}' reads itself more than once;"
                        f" {self.dialect} may return incomplete results"
                    )
                else:
                    terms.append(self.term(text))
            self.ctes.append(_Cte(name, base.schema.names(), terms, category))

    @staticmethod
    def nonlinear(member: QueryNode, ref: DepRef) -> bool:
        return member.deps.count(ref) > 1

    @staticmethod
    def strip(node: QueryNode, category: Category) -> QueryNode:
        if category == Category.SET and isinstance(node, Distinct):
            return node.src
        return node

    def members(self, node: QueryNode, category: Category) -> list[QueryNode]:
        node = self.strip(node, category)
        if isinstance(node, SetOp) and node.kind in (SetOpKind.UNION, SetOpKind.UNION_ALL):
            if category == Category.SET or node.kind == SetOpKind.UNION_ALL:
                return self.members(node.left, category) + self.members(node.right, category)
        return [node]

    def fields(self, body: RowCtor, env: Env) -> list[tuple[str, str]]:
        return [(name, self.expr(expr, env)) for name, expr in body.fields]

    def literal(self, node: Lit) -> str:
        match node.type:
            case ColumnType.BOOL:
                if self.features.boolean_literals:
                    return "TRUE" if node.value else "FALSE"
                return "1 = 1" if node.value else "1 = 0"
            case ColumnType.TEXT:
                return "'" + str(node.value).replace("'", "''") + "'"
            case _:
                return repr(node.value)

    def expr(self, node: ExprNode, env: Env, parent: int = 0) -> str:
        text, precedence = self._expr(node, env)
        return f"({text})" if precedence < parent else text

    def _expr(self, node: ExprNode, env: Env) -> tuple[str, int]:
        match node:
            case ColumnRef():
                if node.var not in env or node.column not in env[node.var]:
                    raise InternalError(f"Unbound column {node.column} of row {node.var}")
                return env[node.var][node.column], ATOM_PRECEDENCE
            case Lit():
                if node.type == ColumnType.BOOL and not self.features.boolean_literals:
                    return self.literal(node), 4
                return self.literal(node), ATOM_PRECEDENCE
            case AggApply():
                return f"{node.op.sql_token}({self.expr(node.args[0], env)})", ATOM_PRECEDENCE
            case Apply():
                return self.apply(node, env)
        raise InternalError(f"Cannot render expression {type(node).__name__}")

    def apply(self, node: Apply, env: Env) -> tuple[str, int]:
        signature = node.op
        args = node.args
        match signature.fixity:
            case Fixity.PREFIX:
                operand = self.expr(args[0], env, signature.precedence)
                return f"{signature.sql_token} {operand}", signature.precedence
            case Fixity.FUNCTION if signature.name == "contains":
                haystack, needle = (self.expr(arg, env) for arg in args)
                return self.features.contains.format(haystack=haystack, needle=needle), 4
            case Fixity.FUNCTION if signature.name == "to_text":
                value = self.expr(args[0], env)
                return f"CAST({value} AS {self.features.text_type})", ATOM_PRECEDENCE
            case Fixity.FUNCTION:
                rendered = ", ".join(self.expr(arg, env) for arg in args)
                return f"{signature.sql_token}({rendered})", ATOM_PRECEDENCE

        token = signature.sql_token
        if signature.op_id == "concat_text" and self.features.concat != "||":
            if self.features.concat == "CONCAT":
                left, right = (self.expr(arg, env) for arg in args)
                return f"CONCAT({left}, {right})", ATOM_PRECEDENCE
            token = self.features.concat
        left = self.expr(args[0], env, signature.precedence)
        right = self.expr(args[1], env, signature.precedence + 1)
        return f"{left} {token} {right}", signature.precedence


def _gate(q: QueryNode, dialect: Dialect) -> None:
    features = dialect.features
    names = component_names(q)
    for _, fix in fix_nodes(q):
        if features.mutual == Support.NO:
            for group in mutual_components(fix):
                members = ", ".join(names[DepRef(fix.fix_id, index)] for index in group)
                raise UnsupportedFeature(
                    f"{dialect} does not support mutual recursion between {members}",
                    feature="mutual",
                    dialect=dialect,
                )
        if not features.union_distinct_in_recursion:
            for index, definition in enumerate(fix.defs, start=1):
                if definition.category == Category.SET:
                    raise UnsupportedFeature(
                        f"{dialect} does not support UNION in recursion, needed by"
                        f" {names[DepRef(fix.fix_id, index)]}",
                        feature="union-distinct",
                        dialect=dialect,
                    )


def emit(
    q: QueryNode,
    dialect: Dialect,
    profile: RestrictionProfile | None = None,
    override: bool = False,
) -> SqlDoc:
    _gate(q, dialect)

    profile = profile or dialect_profile(dialect)
    report: CheckReport = check_all(q, profile)
    warnings = [f"{diagnostic}" for diagnostic in report.warnings]
    if not report.passed:
        if not override:
            codes = ", ".join(sorted({str(d.code) for d in report.errors}))
            raise UncheckedQuery(f"Query fails the '{profile}' profile: {codes}", report)
        for diagnostic in report.errors:
            logger.warning("Emitting despite %s", diagnostic)
            warnings.append(f"override: {diagnostic}")

    shim = profile.allow_non_linear and dialect == Dialect.POSTGRES
    renderer = SqlRenderer(simplify(q), dialect, shim=shim)
    text = renderer.render()
    return SqlDoc(text, dialect, warnings + renderer.warnings)
