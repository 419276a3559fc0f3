from dataclasses import dataclass
from typing import Any
from enum import Enum, auto

from fixql.errors import UnknownDialect, UnknownProfile


class Support(Enum):
    YES = auto()
    SYNTACTIC = auto()
    NO = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)


@dataclass(frozen=True)
class DialectFeatures:
    mutual: Support
    nonlinear: Support
    union_distinct_in_recursion: bool
    cycle_clause: bool
    quotes: tuple[str, str] = ('"', '"')
    recursive_keyword: str = "WITH RECURSIVE"
    cte_column_list: bool = False
    parenthesized_compound: bool = True
    boolean_literals: bool = True
    text_type: str = "TEXT"
    concat: str = "||"
    contains: str = "STRPOS({haystack}, {needle}) > 0"
    table_alias: str = " AS "


class Dialect(Enum):
    POSTGRES = auto()
    DUCKDB = auto()
    MARIADB = auto()
    SQLITE = auto()
    MYSQL = auto()
    SQLSERVER = auto()
    ORACLE = auto()

    def __str__(self) -> str:
        return self.name.lower()

    def __repr__(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, value: str) -> "Dialect":
        try:
            return Dialect[value.upper()]
        except KeyError:
            raise UnknownDialect(f"Unknown dialect '{value}', valid: {Dialect.str_list()}")

    @classmethod
    def str_list(cls) -> list[str]:
        return [str(dialect) for dialect in Dialect]

    @property
    def features(self) -> DialectFeatures:
        return DIALECT_FEATURES[self]


DIALECT_FEATURES = {
    Dialect.MYSQL: DialectFeatures(
        mutual=Support.NO,
        nonlinear=Support.SYNTACTIC,
        union_distinct_in_recursion=True,
        cycle_clause=False,
        quotes=("`", "`"),
        text_type="CHAR",
        concat="CONCAT",
        contains="INSTR({haystack}, {needle}) > 0",
    ),
    Dialect.ORACLE: DialectFeatures(
        mutual=Support.NO,
        nonlinear=Support.NO,
        union_distinct_in_recursion=False,
        cycle_clause=True,
        recursive_keyword="WITH",
        cte_column_list=True,
        boolean_literals=False,
        text_type="VARCHAR2(4000)",
        contains="INSTR({haystack}, {needle}) > 0",
        table_alias=" ",
    ),
    Dialect.POSTGRES: DialectFeatures(
        mutual=Support.NO,
        nonlinear=Support.NO,
        union_distinct_in_recursion=True,
        cycle_clause=True,
    ),
    Dialect.SQLSERVER: DialectFeatures(
        mutual=Support.NO,
        nonlinear=Support.SYNTACTIC,
        union_distinct_in_recursion=False,
        cycle_clause=False,
        quotes=("[", "]"),
        recursive_keyword="WITH",
        cte_column_list=True,
        boolean_literals=False,
        text_type="VARCHAR(MAX)",
        concat="+",
        contains="CHARINDEX({needle}, {haystack}) > 0",
    ),
    Dialect.SQLITE: DialectFeatures(
        mutual=Support.NO,
        nonlinear=Support.SYNTACTIC,
        union_distinct_in_recursion=True,
        cycle_clause=False,
        parenthesized_compound=False,
        contains="INSTR({haystack}, {needle}) > 0",
    ),
    Dialect.MARIADB: DialectFeatures(
        mutual=Support.YES,
        nonlinear=Support.YES,
        union_distinct_in_recursion=True,
        cycle_clause=True,
        quotes=("`", "`"),
        text_type="CHAR",
        concat="CONCAT",
        contains="INSTR({haystack}, {needle}) > 0",
    ),
    Dialect.DUCKDB: DialectFeatures(
        mutual=Support.SYNTACTIC,
        nonlinear=Support.SYNTACTIC,
        union_distinct_in_recursion=True,
        cycle_clause=False,
        text_type="VARCHAR",
    ),
}


@dataclass(frozen=True)
class RestrictionProfile:
    name: str
    require_monotone: bool = True
    require_linear: bool = True
    require_set_semantics: bool = True
    require_constructor_free: bool = True
    allow_mutual_recursion: bool = False
    allow_non_linear: bool = False
    max_recursion_depth_hint: int | None = None
    dialect: Dialect | None = None

    def __post_init__(self) -> None:
        if self.require_linear and self.allow_non_linear:
            raise ValueError(f"Profile '{self.name}' cannot both require and allow non-linearity")

    def __str__(self) -> str:
        return self.name


def _dialect_profile(
    dialect: Dialect, name: str | None = None, **overrides: bool
) -> RestrictionProfile:
    features = dialect.features
    settings: dict[str, Any] = {
        "require_monotone": True,
        "require_linear": features.nonlinear != Support.YES,
        "require_set_semantics": False,
        "require_constructor_free": False,
        "allow_mutual_recursion": features.mutual != Support.NO,
    }
    settings.update(overrides)
    return RestrictionProfile(name=name or str(dialect), dialect=dialect, **settings)


PROFILES: dict[str, RestrictionProfile] = {
    "none": RestrictionProfile(
        name="none",
        require_monotone=False,
        require_linear=False,
        require_set_semantics=False,
        require_constructor_free=False,
        allow_mutual_recursion=True,
    ),
    "full": RestrictionProfile(name="full"),
    "sql99": RestrictionProfile(name="sql99", require_constructor_free=False),
    "default-no-cf": RestrictionProfile(name="default-no-cf", require_constructor_free=False),
    **{str(dialect): _dialect_profile(dialect) for dialect in Dialect},
    "postgres-nonlinear": _dialect_profile(
        Dialect.POSTGRES, "postgres-nonlinear", require_linear=False, allow_non_linear=True
    ),
}


def get_profile(name: str) -> RestrictionProfile:
    profile = PROFILES.get(name.lower())
    if profile is None:
        raise UnknownProfile(f"Unknown profile '{name}', valid: {profile_names()}")
    return profile


def profile_names() -> list[str]:
    return list(PROFILES.keys())


def dialect_profile(dialect: Dialect) -> RestrictionProfile:
    return PROFILES[str(dialect)]
