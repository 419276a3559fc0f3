import csv
import io
from pathlib import Path
from typing import Mapping, TextIO

from fixql import logger
from fixql.errors import MissingTable, SchemaError
from fixql.evalengine import Relation
from fixql.ir import QueryNode, table_scans
from fixql.models import RowSchema


def read_relation(path: Path, schema: RowSchema) -> Relation:
    with path.open(newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        header = next(reader, None)
        if header != schema.names():
            raise SchemaError(f"{path}: header {header} does not match {schema}")
        rows = []
        for line, values in enumerate(reader, start=2):
            if len(values) != len(schema):
                raise SchemaError(
                    f"{path}:{line}: expected {len(schema)} values, got {len(values)}"
                )
            try:
                rows.append(tuple(kind.parse(value) for kind, value in zip(schema.types(), values)))
            except ValueError as ex:
                raise SchemaError(f"{path}:{line}: {ex}")
    return Relation(schema, rows)


def load_database(data_dir: str | Path, q: QueryNode) -> dict[str, Relation]:
    """Load ``<table>.csv`` for every table the query scans."""
    directory = Path(data_dir).expanduser()
    database = {}
    for name, schema in table_scans(q).items():
        path = directory.joinpath(f"{name}.csv")
        if not path.exists():
            raise MissingTable(name)
        database[name] = read_relation(path, schema)
        logger.debug("Loaded %d rows into %s from %s", len(database[name]), name, path)
    return database


def write_relation(relation: Relation, out: TextIO | str | Path) -> None:
    if isinstance(out, (str, Path)):
        with Path(out).expanduser().open("w", newline="", encoding="utf-8") as file:
            write_relation(relation, file)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(relation.schema.names())
    types = relation.schema.types()
    for row in relation.canonical():
        writer.writerow([column_type.format(value) for column_type, value in zip(types, row)])


def relation_to_csv(relation: Relation) -> str:
    buffer = io.StringIO()
    write_relation(relation, buffer)
    return buffer.getvalue()


def write_database(database: Mapping[str, Relation], data_dir: str | Path) -> None:
    directory = Path(data_dir).expanduser()
    directory.mkdir(parents=True, exist_ok=True)
    for name, relation in sorted(database.items()):
        write_relation(relation, directory.joinpath(f"{name}.csv"))
