import json
import tempfile
import unittest
from pathlib import Path

from click.testing import CliRunner

from fixql import APP_VERSION
from fixql.configs import (
    EXIT_INPUT_ERROR,
    EXIT_NONTERMINATION,
    EXIT_OK,
    EXIT_UNSUPPORTED,
    EXIT_VIOLATION,
)
from fixql.corpus import (
    cspa,
    even_odd,
    get_query,
    nonlinear_transitive_closure,
    transitive_closure,
    write_corpus,
)
from fixql.datasets import DatasetKind, DatasetSpec, gen_dataset
from fixql.errors import FixqlError, MissingTable, NontermError, UncheckedQuery
from fixql.main import cli, exit_code
from fixql.models import Category
from fixql.serializers import serialize_ir
from fixql.utils import write_database
from tests import faker


class TestExitCode(unittest.TestCase):
    def test_most_specific_error_wins(self):
        self.assertEqual(EXIT_NONTERMINATION, exit_code(NontermError("path", 10)))
        self.assertEqual(EXIT_VIOLATION, exit_code(UncheckedQuery(faker.sentence())))
        self.assertEqual(EXIT_INPUT_ERROR, exit_code(MissingTable(faker.word())))
        self.assertEqual(EXIT_INPUT_ERROR, exit_code(FixqlError(faker.sentence())))
        self.assertEqual(EXIT_INPUT_ERROR, exit_code(FileNotFoundError()))


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.runner = CliRunner()
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def write_ir(self, query):
        path = self.root.joinpath(f"{faker.uuid4()}.json")
        path.write_text(serialize_ir(query), encoding="utf-8")
        return str(path)

    def write_data(self, spec):
        path = self.root.joinpath(str(spec))
        write_database(gen_dataset(spec), path)
        return str(path)


class TestCli(CliTestCase):
    def test_version(self):
        result = self.runner.invoke(cli, ["--version"])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertIn(APP_VERSION, result.output)

    def test_help_lists_exit_status(self):
        result = self.runner.invoke(cli, ["--help"])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertIn("Exit status", result.output)


class TestCheckCli(CliTestCase):
    def setUp(self):
        super().setUp()
        self.command = "check"

    def test_passing_query(self):
        result = self.runner.invoke(cli, [self.command, self.write_ir(transitive_closure())])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertTrue(json.loads(result.output)["pass"])

    def test_violation(self):
        ir_path = self.write_ir(transitive_closure(Category.BAG))

        result = self.runner.invoke(cli, [self.command, ir_path])

        self.assertEqual(EXIT_VIOLATION, result.exit_code)
        self.assertEqual("SET", json.loads(result.output)["diagnostics"][0]["code"])

    def test_profile_option(self):
        ir_path = self.write_ir(transitive_closure(Category.BAG))

        result = self.runner.invoke(cli, [self.command, ir_path, "-p", "none"])

        self.assertEqual(EXIT_OK, result.exit_code)

    def test_profile_from_environment(self):
        ir_path = self.write_ir(transitive_closure(Category.BAG))

        result = self.runner.invoke(cli, [self.command, ir_path], env={"FIXQL_PROFILE": "none"})

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertEqual("none", json.loads(result.output)["profile"])

    def test_invalid_profile(self):
        ir_path = self.write_ir(transitive_closure())

        result = self.runner.invoke(cli, [self.command, ir_path, "-p", "sql2023"])

        self.assertNotEqual(EXIT_OK, result.exit_code)
        self.assertIn("Invalid value for '-p'", result.output)

    def test_missing_file(self):
        result = self.runner.invoke(cli, [self.command, str(self.root.joinpath("missing.json"))])

        self.assertEqual(EXIT_INPUT_ERROR, result.exit_code)
        self.assertIn("Error:", result.output)

    def test_invalid_ir(self):
        path = self.root.joinpath("broken.json")
        path.write_text('{"version": "ir-v1", "query": {"kind": "loop"}}', encoding="utf-8")

        result = self.runner.invoke(cli, [self.command, str(path)])

        self.assertEqual(EXIT_INPUT_ERROR, result.exit_code)
        self.assertIn("(at $.query.kind)", result.output)

    def test_malformed_deps(self):
        path = self.root.joinpath("broken.json")
        table = {"kind": "table", "name": "edges", "schema": [{"name": "x", "type": "int"}]}
        table["deps"] = [[1, "x"]]
        path.write_text(json.dumps({"version": "ir-v1", "query": table}), encoding="utf-8")

        result = self.runner.invoke(cli, [self.command, str(path)])

        self.assertEqual(EXIT_INPUT_ERROR, result.exit_code)
        self.assertIn("(at $.query.deps[0][1])", result.output)

    def test_out_option(self):
        out = self.root.joinpath("report.json")

        result = self.runner.invoke(
            cli, [self.command, self.write_ir(cspa()), "-p", "mariadb", "-o", str(out)]
        )

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertEqual("mariadb", json.loads(out.read_text(encoding="utf-8"))["profile"])


class TestEmitCli(CliTestCase):
    def setUp(self):
        super().setUp()
        self.command = "emit"

    def test_dialect_required(self):
        result = self.runner.invoke(cli, [self.command, self.write_ir(transitive_closure())])

        self.assertNotEqual(EXIT_OK, result.exit_code)
        self.assertIn("Missing option '-d'", result.output)

    def test_emit(self):
        ir_path = self.write_ir(transitive_closure())

        result = self.runner.invoke(cli, [self.command, ir_path, "-d", "postgres"])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertTrue(result.output.startswith("WITH RECURSIVE path AS ("))

    def test_bag_recursion(self):
        ir_path = self.write_ir(transitive_closure(Category.BAG))

        result = self.runner.invoke(cli, [self.command, ir_path, "-d", "mariadb"])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertIn("UNION ALL", result.output)

    def test_refused(self):
        ir_path = self.write_ir(transitive_closure(Category.BAG))

        result = self.runner.invoke(cli, [self.command, ir_path, "-d", "mariadb", "-p", "full"])

        self.assertEqual(EXIT_VIOLATION, result.exit_code)
        self.assertIn("SET", result.output)

    def test_unsafe(self):
        ir_path = self.write_ir(transitive_closure(Category.BAG))

        result = self.runner.invoke(
            cli, [self.command, ir_path, "-d", "postgres", "-p", "full", "--unsafe"]
        )

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertTrue(result.output.startswith("-- override: error SET"))

    def test_unsupported(self):
        ir_path = self.write_ir(even_odd())

        result = self.runner.invoke(cli, [self.command, ir_path, "-d", "postgres", "-p", "none"])

        self.assertEqual(EXIT_UNSUPPORTED, result.exit_code)
        self.assertIn("mutual recursion", result.output)


class TestRunCli(CliTestCase):
    def setUp(self):
        super().setUp()
        self.command = "run"

    def test_run(self):
        data_dir = self.write_data(DatasetSpec(DatasetKind.CHAIN_GRAPH, 3))
        ir_path = self.write_ir(transitive_closure())

        result = self.runner.invoke(cli, [self.command, ir_path, data_dir])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertEqual("x,y\n0,1\n0,2\n0,3\n1,2\n1,3\n2,3\n", result.output)

    def test_delta_only(self):
        ir_path = self.write_ir(nonlinear_transitive_closure())
        data_dir = self.write_data(DatasetSpec(DatasetKind.CHAIN_GRAPH, 3))

        result = self.runner.invoke(cli, [self.command, ir_path, data_dir, "-m", "deltaonly"])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertEqual("x,y\n0,1\n0,2\n1,2\n1,3\n2,3\n", result.output)

    def test_nontermination(self):
        ir_path = self.write_ir(transitive_closure(Category.BAG))
        data_dir = self.write_data(DatasetSpec(DatasetKind.CYCLE_GRAPH, 2))

        result = self.runner.invoke(cli, [self.command, ir_path, data_dir, "-c", "10"])

        self.assertEqual(EXIT_NONTERMINATION, result.exit_code)
        self.assertIn("'path' did not converge after 10 iterations", result.output)

    def test_cap_must_be_positive(self):
        ir_path = self.write_ir(transitive_closure())

        result = self.runner.invoke(cli, [self.command, ir_path, str(self.root), "-c", "0"])

        self.assertNotEqual(EXIT_OK, result.exit_code)
        self.assertIn("Invalid value for '-c'", result.output)

    def test_missing_table(self):
        result = self.runner.invoke(
            cli, [self.command, self.write_ir(transitive_closure()), str(self.root)]
        )

        self.assertEqual(EXIT_INPUT_ERROR, result.exit_code)
        self.assertIn("Table 'edges' not found", result.output)


class TestCorpusCli(CliTestCase):
    def test_corpus_list(self):
        result = self.runner.invoke(cli, ["corpus-list"])

        lines = result.output.splitlines()
        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertEqual(16, len(lines))
        self.assertTrue(lines[1].startswith("CSPA "))
        self.assertIn("linear=false  monotone=yes  set=true  mutual=true  cf=true", lines[1])

    def test_corpus_list_writes_corpus(self):
        result = self.runner.invoke(cli, ["corpus-list", "-o", str(self.root)])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertTrue(self.root.joinpath("manifest.json").exists())
        self.assertTrue(self.root.joinpath("queries", "even-odd.json").exists())

    def test_bench_json(self):
        write_corpus(self.root, [get_query("SSSP"), get_query("BOM")])

        result = self.runner.invoke(cli, ["bench", str(self.root), "--format", "json"])

        summary = json.loads(result.output)
        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertTrue(summary["passed"])
        self.assertEqual(["SSSP", "BOM"], [query["query"] for query in summary["queries"]])

    def test_bench_table(self):
        write_corpus(self.root, [get_query("Ancestry")])
        out = self.root.joinpath("bench.txt")

        result = self.runner.invoke(cli, ["bench", str(self.root), "-o", str(out)])

        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertIn("Ancestry", out.read_text(encoding="utf-8"))

    def test_bench_missing_manifest(self):
        result = self.runner.invoke(cli, ["bench", str(self.root)])

        self.assertEqual(EXIT_INPUT_ERROR, result.exit_code)


class TestGraphCli(CliTestCase):
    def test_graph(self):
        result = self.runner.invoke(cli, ["graph", self.write_ir(cspa())])

        graph = json.loads(result.output)
        self.assertEqual(EXIT_OK, result.exit_code)
        self.assertTrue(graph["mutual"])
        self.assertIn(["memoryalias", "valuealias", "valueflow"], graph["sccs"])
