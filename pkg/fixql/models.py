import re
from enum import Enum, auto
from typing import Any, Iterator

from fixql.errors import SchemaError

IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ColumnType(Enum):
    INT = auto()
    FLOAT = auto()
    BOOL = auto()
    TEXT = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "ColumnType":
        return ColumnType[value.upper()]

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(column_type) for column_type in ColumnType]

    def accepts(self, value: Any) -> bool:
        match self:
            case ColumnType.INT:
                return isinstance(value, int) and not isinstance(value, bool)
            case ColumnType.FLOAT:
                return isinstance(value, float)
            case ColumnType.BOOL:
                return isinstance(value, bool)
            case _:
                return isinstance(value, str)

    def parse(self, text: str) -> Any:
        match self:
            case ColumnType.INT:
                return int(text)
            case ColumnType.FLOAT:
                return float(text)
            case ColumnType.BOOL:
                lowered = text.strip().lower()
                if lowered in ("true", "1"):
                    return True
                if lowered in ("false", "0"):
                    return False
                raise ValueError(f"Not a boolean: {text!r}")
            case _:
                return text

    def format(self, value: Any) -> str:
        if self == ColumnType.BOOL:
            return "true" if value else "false"
        return str(value)


class Shape(Enum):
    SCALAR = auto()
    NON_SCALAR = auto()

    def __str__(self) -> str:
        return self.name.lower().replace("_", "")

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "Shape":
        return Shape.SCALAR if value.lower() == "scalar" else Shape.NON_SCALAR

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(shape) for shape in Shape]


class Category(Enum):
    BAG = auto()
    SET = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "Category":
        return Category[value.upper()]

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(category) for category in Category]


class RowSchema:
    def __init__(self, columns: list[tuple[str, ColumnType]] | None = None) -> None:
        if not columns:
            raise SchemaError("A schema needs at least one column")

        names = [name for name, _ in columns]
        invalid = [name for name in names if not IDENTIFIER.match(name)]
        if invalid:
            raise SchemaError(f"Invalid column names: {invalid}")

        duplicated = sorted({name for name in names if names.count(name) > 1})
        if duplicated:
            raise SchemaError(f"Duplicate column names: {duplicated}")

        self.columns = tuple(columns)

    @classmethod
    def of(cls, **columns: ColumnType) -> "RowSchema":
        return RowSchema(list(columns.items()))

    def names(self) -> list[str]:
        return [name for name, _ in self.columns]

    def types(self) -> list[ColumnType]:
        return [column_type for _, column_type in self.columns]

    def index_of(self, name: str) -> int:
        for index, (column, _) in enumerate(self.columns):
            if column == name:
                return index
        raise SchemaError(f"Unknown column '{name}' in {self}")

    def type_of(self, name: str) -> ColumnType:
        return self.columns[self.index_of(name)][1]

    def has(self, name: str) -> bool:
        return name in self.names()

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self) -> Iterator[tuple[str, ColumnType]]:
        return iter(self.columns)

    def __repr__(self) -> str:
        return str(self)

    def __str__(self) -> str:
        return "(" + ", ".join(f"{name}: {column_type}" for name, column_type in self.columns) + ")"

    def __eq__(self, other: Any) -> bool:
        if isinstance(other, RowSchema):
            return self.columns == other.columns
        return False

    def __hash__(self) -> int:
        return hash(self.columns)
