"""Operator signature registry.

Every operator an expression can apply is registered here once per argument typing.
Builders resolve an operator by its surface name and argument types; serialized IR
refers to the resolved ``op_id``.
"""

from dataclasses import dataclass
from enum import Enum, auto

from fixql.errors import SchemaError
from fixql.models import ColumnType, Shape


class Fixity(Enum):
    PREFIX = auto()
    INFIX = auto()
    FUNCTION = auto()

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class OperatorSignature:
    op_id: str
    name: str
    arg_types: tuple[ColumnType, ...]
    result_type: ColumnType
    declared_shape: Shape
    is_constructor: bool
    sql_token: str
    fixity: Fixity
    precedence: int = 9

    @property
    def is_aggregation(self) -> bool:
        return self.declared_shape == Shape.SCALAR


NUMERIC = (ColumnType.INT, ColumnType.FLOAT)
ORDERED = (ColumnType.INT, ColumnType.FLOAT, ColumnType.TEXT)

OPERATORS: dict[str, OperatorSignature] = {}
_BY_NAME: dict[tuple[str, tuple[ColumnType, ...]], OperatorSignature] = {}


def register(signature: OperatorSignature) -> OperatorSignature:
    if signature.op_id in OPERATORS:
        raise ValueError(f"Operator '{signature.op_id}' already registered")
    OPERATORS[signature.op_id] = signature
    _BY_NAME[(signature.name, signature.arg_types)] = signature
    return signature


def _infix(
    op_id: str,
    name: str,
    token: str,
    arg_type: ColumnType,
    result_type: ColumnType,
    precedence: int,
    constructor: bool = False,
) -> None:
    register(
        OperatorSignature(
            op_id=op_id,
            name=name,
            arg_types=(arg_type, arg_type),
            result_type=result_type,
            declared_shape=Shape.NON_SCALAR,
            is_constructor=constructor,
            sql_token=token,
            fixity=Fixity.INFIX,
            precedence=precedence,
        )
    )


for _type in NUMERIC:
    for _name, _token, _label, _precedence in (
        ("+", "+", "add", 6),
        ("-", "-", "sub", 6),
        ("*", "*", "mul", 7),
        ("/", "/", "div", 7),
    ):
        _infix(f"{_label}_{_type}", _name, _token, _type, _type, _precedence, constructor=True)

_infix("concat_text", "||", "||", ColumnType.TEXT, ColumnType.TEXT, 5, constructor=True)

for _type in ColumnType:
    _infix(f"eq_{_type}", "==", "=", _type, ColumnType.BOOL, 4)
    _infix(f"ne_{_type}", "!=", "<>", _type, ColumnType.BOOL, 4)

for _type in ORDERED:
    for _name, _token, _label in (
        ("<", "<", "lt"),
        ("<=", "<=", "le"),
        (">", ">", "gt"),
        (">=", ">=", "ge"),
    ):
        _infix(f"{_label}_{_type}", _name, _token, _type, ColumnType.BOOL, 4)

_infix("and", "and", "AND", ColumnType.BOOL, ColumnType.BOOL, 2)
_infix("or", "or", "OR", ColumnType.BOOL, ColumnType.BOOL, 1)

register(
    OperatorSignature(
        op_id="not",
        name="not",
        arg_types=(ColumnType.BOOL,),
        result_type=ColumnType.BOOL,
        declared_shape=Shape.NON_SCALAR,
        is_constructor=False,
        sql_token="NOT",
        fixity=Fixity.PREFIX,
        precedence=3,
    )
)

register(
    OperatorSignature(
        op_id="contains",
        name="contains",
        arg_types=(ColumnType.TEXT, ColumnType.TEXT),
        result_type=ColumnType.BOOL,
        declared_shape=Shape.NON_SCALAR,
        is_constructor=False,
        sql_token="STRPOS",
        fixity=Fixity.FUNCTION,
    )
)

register(
    OperatorSignature(
        op_id="to_text",
        name="to_text",
        arg_types=(ColumnType.INT,),
        result_type=ColumnType.TEXT,
        declared_shape=Shape.NON_SCALAR,
        is_constructor=False,
        sql_token="CAST",
        fixity=Fixity.FUNCTION,
    )
)


def _aggregation(name: str, arg_type: ColumnType, result_type: ColumnType) -> None:
    register(
        OperatorSignature(
            op_id=f"{name}_{arg_type}",
            name=name,
            arg_types=(arg_type,),
            result_type=result_type,
            declared_shape=Shape.SCALAR,
            is_constructor=False,
            sql_token=name.upper(),
            fixity=Fixity.FUNCTION,
        )
    )


for _type in NUMERIC:
    _aggregation("sum", _type, _type)
    _aggregation("avg", _type, ColumnType.FLOAT)

for _type in ORDERED:
    _aggregation("min", _type, _type)
    _aggregation("max", _type, _type)

for _type in ColumnType:
    _aggregation("count", _type, ColumnType.INT)

AGGREGATIONS = frozenset(("sum", "avg", "min", "max", "count"))


def lookup(name: str, arg_types: tuple[ColumnType, ...]) -> OperatorSignature:
    signature = _BY_NAME.get((name, arg_types))
    if signature is None:
        rendered = ", ".join(str(arg_type) for arg_type in arg_types)
        raise SchemaError(f"No operator '{name}' for argument types ({rendered})")
    return signature


def by_id(op_id: str) -> OperatorSignature:
    signature = OPERATORS.get(op_id)
    if signature is None:
        raise SchemaError(f"Unknown operator id '{op_id}'")
    return signature
