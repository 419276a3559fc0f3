import functools
import json
from pathlib import Path
from typing import Any, Callable

import click
import cloup
from rich.console import Console
from rich.table import Table

from fixql import APP_VERSION, logger
from fixql.checker import Property, build_precedence_graph, check_all
from fixql.colors import FAIL, PARTIAL, PASS, PRIMARY, SECONDARY
from fixql.configs import (
    DEFAULT_ITERATION_CAP,
    DEFAULT_PROFILE,
    EXIT_INPUT_ERROR,
    EXIT_NONTERMINATION,
    EXIT_OK,
    EXIT_UNSUPPORTED,
    EXIT_VIOLATION,
    PROFILE_ENV,
)
from fixql.corpus import (
    BenchResult,
    EmitStatus,
    Monotonicity,
    build_corpus,
    dataset_dir,
    read_corpus,
    run_bench,
    write_corpus,
)
from fixql.datasets import DatasetSpec
from fixql.dialects import Dialect, get_profile, profile_names
from fixql.errors import FixqlError, NontermError, UncheckedQuery, UnsupportedFeature
from fixql.evalengine import Database, EvalConfig, EvalMode, evaluate
from fixql.ir import QueryNode
from fixql.serializers import deserialize_ir
from fixql.sqlgen import emit as emit_sql
from fixql.unicodes import BULLET, CHECK, CROSS
from fixql.utils import load_database, relation_to_csv

EPILOG_HELP = "Exit status: 0 pass, 1 input error, 2 property violation, 3 unsupported, 4 cap hit."
PROFILE_HELP = f"Restriction profile. Falls back to ${PROFILE_ENV}, then '{DEFAULT_PROFILE}'."
OUT_HELP = "Write the output to a file instead of stdout."

# most specific first
EXIT_CODES: list[tuple[type[Exception], int]] = [
    (NontermError, EXIT_NONTERMINATION),
    (UnsupportedFeature, EXIT_UNSUPPORTED),
    (UncheckedQuery, EXIT_VIOLATION),
    (FixqlError, EXIT_INPUT_ERROR),
    (OSError, EXIT_INPUT_ERROR),
]


def exit_code(ex: Exception) -> int:
    for kind, code in EXIT_CODES:
        if isinstance(ex, kind):
            return code
    return EXIT_INPUT_ERROR


def report_errors(command: Callable[..., int | None]) -> Callable[..., None]:
    """Turn the command's return value and fixql errors into the exit status."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        ctx = click.get_current_context()
        try:
            status = command(*args, **kwargs)
        except (FixqlError, OSError) as ex:
            logger.exception(ex)
            click.echo(f"Error: {ex}", err=True)
            if isinstance(ex, UncheckedQuery) and ex.report is not None:
                for diagnostic in ex.report.errors:
                    click.echo(f"  {diagnostic}", err=True)
            ctx.exit(exit_code(ex))
        ctx.exit(EXIT_OK if status is None else status)

    return wrapper


def string_to_dialect(ctx: Any, param: Any, value: Any) -> Any:
    return None if value is None else Dialect.from_str(value)


def string_to_mode(ctx: Any, param: Any, value: Any) -> Any:
    return EvalMode.from_str(value)


def read_ir(path: str) -> QueryNode:
    return deserialize_ir(Path(path).expanduser().read_text(encoding="utf-8"))


def load_dataset(corpus_dir: str, q: QueryNode, spec: DatasetSpec) -> Database:
    return load_database(dataset_dir(corpus_dir, spec), q)


def write_output(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).expanduser().write_text(text, encoding="utf-8")


profile_option = cloup.option(
    "-p",
    "--profile",
    type=cloup.Choice(profile_names(), False),
    envvar=PROFILE_ENV,
    default=DEFAULT_PROFILE,
    show_default=True,
    help=PROFILE_HELP,
)
out_option = cloup.option("-o", "--out", metavar="PATH", help=OUT_HELP)


@cloup.group(epilog=EPILOG_HELP)
@cloup.version_option(APP_VERSION)
def cli() -> None:
    """fixql checks, compiles and evaluates recursive relational queries."""


@cli.command(epilog=EPILOG_HELP)
@cloup.argument("ir_path", metavar="IR_PATH")
@cloup.option_group("Check options", profile_option, out_option)
@report_errors
def check(ir_path: str, profile: str, out: str | None) -> int:
    """
    Check a query against a restriction profile.

    \b
    Examples:
      fixql check query.json
      fixql check query.json -p sql99
    """
    report = check_all(read_ir(ir_path), get_profile(profile))
    write_output(report.to_json(), out)
    return EXIT_OK if report.passed else EXIT_VIOLATION


@cli.command(epilog=EPILOG_HELP)
@cloup.argument("ir_path", metavar="IR_PATH")
@cloup.option_group(
    "Emit options",
    cloup.option(
        "-d",
        "--dialect",
        type=cloup.Choice(Dialect.str_list(), False),
        required=True,
        help="Target SQL dialect.",
        callback=string_to_dialect,
    ),
    cloup.option(
        "-p",
        "--profile",
        type=cloup.Choice(profile_names(), False),
        help="Restriction profile. Defaults to the dialect's own profile.",
    ),
    cloup.option(
        "--unsafe",
        is_flag=True,
        help="Emit despite profile violations, listing them in a comment header.",
    ),
    out_option,
)
@report_errors
def emit(
    ir_path: str, dialect: Dialect, profile: str | None, unsafe: bool, out: str | None
) -> None:
    """
    Emit dialect SQL for a query.

    \b
    Examples:
      fixql emit sssp.json -d duckdb
      fixql emit tc.json -d mariadb -p none
      fixql emit tc.json -d postgres --unsafe -o tc.sql
    """
    restriction = get_profile(profile) if profile is not None else None
    document = emit_sql(read_ir(ir_path), dialect, restriction, override=unsafe)
    write_output(document.with_header(), out)


@cli.command(epilog=EPILOG_HELP)
@cloup.argument("ir_path", metavar="IR_PATH")
@cloup.argument("data_dir", metavar="DATA_DIR")
@cloup.option_group(
    "Evaluation options",
    cloup.option(
        "-m",
        "--mode",
        type=cloup.Choice(EvalMode.str_list(), False),
        default=str(EvalMode.SEMINAIVE),
        show_default=True,
        help="Fixpoint strategy.",
        callback=string_to_mode,
    ),
    cloup.option(
        "-c",
        "--cap",
        type=click.IntRange(min=1),
        default=DEFAULT_ITERATION_CAP,
        show_default=True,
        help="Iterations before a fix is reported as non-terminating.",
    ),
    out_option,
)
@report_errors
def run(ir_path: str, data_dir: str, mode: EvalMode, cap: int, out: str | None) -> None:
    """
    Evaluate a query over a directory of <table>.csv files.

    \b
    Examples:
      fixql run tc.json data/chain
      fixql run tc.json data/chain -m deltaonly
      fixql run tc.json data/cycle -c 100 -o result.csv
    """
    q = read_ir(ir_path)
    result = evaluate(q, load_database(data_dir, q), EvalConfig(mode=mode, cap=cap))
    write_output(relation_to_csv(result), out)


def _mark(violated: bool, expected_violated: bool, stratified: bool = False) -> str:
    symbol = CROSS if violated else (BULLET if stratified else CHECK)
    style = PASS if violated == expected_violated else FAIL
    return f"[{style}]{symbol}[/]"


def bench_table(results: list[BenchResult]) -> Table:
    table = Table(title="Recursive query benchmark", header_style=f"bold {PRIMARY}")
    table.add_column("Query", style=f"bold {SECONDARY}")
    for prop in Property:
        table.add_column(str(prop), justify="center")
    table.add_column("oracle", justify="center")
    for dialect in Dialect:
        table.add_column(str(dialect), justify="center")

    emit_styles = {EmitStatus.OK: PASS, EmitStatus.REFUSED: PARTIAL, EmitStatus.UNSUPPORTED: FAIL}
    for result in results:
        expected = result.verdict.expected
        stratified = result.entry.expected.monotone == Monotonicity.STRATIFIED
        marks = [
            _mark(
                prop in result.verdict.actual,
                prop in expected,
                stratified and prop == Property.MONOTONE,
            )
            for prop in Property
        ]
        if result.oracle is None:
            oracle = "-"
        else:
            oracle = f"[{PASS}]{CHECK}[/]" if result.oracle.passed else f"[{FAIL}]{CROSS}[/]"
        emits = [f"[{emit_styles[status]}]{status}[/]" for status in result.emits.values()]
        table.add_row(result.entry.name, *marks, oracle, *emits)
    return table


@cli.command(epilog=EPILOG_HELP)
@cloup.argument("corpus_dir", metavar="CORPUS_DIR", required=False)
@cloup.option_group(
    "Bench options",
    cloup.option(
        "--format",
        "output_format",
        type=cloup.Choice(["json", "table"], False),
        default="table",
        show_default=True,
        help="Summary format.",
    ),
    out_option,
)
@report_errors
def bench(corpus_dir: str | None, output_format: str, out: str | None) -> int:
    """
    Run the benchmark: verdicts, oracle equivalence and emit status per dialect.

    Without CORPUS_DIR the built-in corpus runs on freshly generated data.

    \b
    Examples:
      fixql bench
      fixql bench corpus/ --format json -o bench.json
    """
    if corpus_dir is None:
        results = run_bench(build_corpus())
    else:
        results = []
        for entry in read_corpus(corpus_dir):
            results += run_bench([entry], functools.partial(load_dataset, corpus_dir, entry.ir))

    if output_format == "json":
        summary = {
            "passed": all(result.passed for result in results),
            "queries": [result.to_dict() for result in results],
        }
        write_output(json.dumps(summary, indent=2) + "\n", out)
    elif out is None:
        Console().print(bench_table(results))
    else:
        with Path(out).expanduser().open("w", encoding="utf-8") as file:
            Console(file=file, width=160).print(bench_table(results))

    return EXIT_OK if all(result.passed for result in results) else EXIT_VIOLATION


@cli.command("corpus-list", epilog=EPILOG_HELP)
@cloup.option(
    "-o", "--out", metavar="DIR", help="Also write the corpus (manifest, IR, data) to DIR."
)
@report_errors
def corpus_list(out: str | None) -> None:
    """
    List the benchmark queries and the property row each is expected to show.

    \b
    Examples:
      fixql corpus-list
      fixql corpus-list -o corpus/
    """
    entries = build_corpus()
    for entry in entries:
        expected = entry.expected
        row = "  ".join(
            [
                f"linear={expected.linear}",
                f"monotone={expected.monotone}",
                f"set={expected.set_semantic}",
                f"mutual={expected.mutual}",
                f"cf={expected.constructor_free}",
            ]
        ).lower()
        click.echo(f"{entry.name:<10}  {row}")
    if out is not None:
        write_corpus(out, entries)


@cli.command(epilog=EPILOG_HELP)
@cloup.argument("ir_path", metavar="IR_PATH")
@out_option
@report_errors
def graph(ir_path: str, out: str | None) -> None:
    """
    Print the precedence graph of a query as JSON.

    \b
    Examples:
      fixql graph cspa.json
    """
    write_output(build_precedence_graph(read_ir(ir_path)).to_json(), out)


if __name__ == "__main__":
    cli()
