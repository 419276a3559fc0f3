import json
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

from fixql.checker import Property
from fixql.corpus import (
    EmitStatus,
    Expectation,
    Monotonicity,
    all_subparts,
    bom,
    build_corpus,
    corpus_names,
    dataset_dir,
    emit_status,
    even_odd,
    get_query,
    read_corpus,
    run_bench,
    runs_oracle,
    transitive_closure,
    verdict,
    write_corpus,
)
from fixql.datasets import DatasetKind, DatasetSpec, gen_dataset, is_cyclic
from fixql.dialects import Dialect
from fixql.errors import NontermError, ParseError
from fixql.evalengine import EvalConfig, EvalMode, Relation, evaluate
from fixql.ir import fix_nodes, table_scans
from fixql.models import Category
from fixql.serializers import serialize_ir
from fixql.utils import load_database


class TestExpectation(unittest.TestCase):
    def test_violated(self):
        expectation = Expectation(False, Monotonicity.STRATIFIED, True, True, False)

        self.assertEqual({Property.LINEAR, Property.MUTUAL, Property.CF}, expectation.violated())

    def test_dict(self):
        expectation = Expectation(True, Monotonicity.NO, False, False, True)

        self.assertEqual(expectation, Expectation.from_dict(expectation.to_dict()))
        self.assertEqual("no", expectation.to_dict()["monotone"])


class TestCorpus(unittest.TestCase):
    def test_sixteen_queries(self):
        self.assertEqual(16, len(build_corpus()))
        self.assertEqual(16, len(set(corpus_names())))

    def test_every_verdict_matches(self):
        for entry in build_corpus():
            result = verdict(entry)

            self.assertTrue(result.matches, f"{entry.name}: {result.to_dict()}")

    def test_property_rows(self):
        rows = {entry.name: entry.expected for entry in build_corpus()}

        self.assertTrue(rows["CSPA"].mutual)
        self.assertFalse(rows["CSPA"].linear)
        self.assertEqual(Monotonicity.NO, rows["CC"].monotone)
        self.assertEqual(Monotonicity.STRATIFIED, rows["BOM"].monotone)
        self.assertFalse(rows["SSSP"].constructor_free)
        self.assertFalse(rows["TC"].set_semantic)

    def test_every_query_has_datasets(self):
        for entry in build_corpus():
            self.assertGreaterEqual(len(entry.acyclic_datasets), 3, entry.name)

    def test_cyclic_datasets(self):
        (spec,) = get_query("BOM").cyclic_datasets

        self.assertTrue(is_cyclic(gen_dataset(spec), DatasetKind.BOM_HIERARCHY))

    def test_get_query(self):
        self.assertEqual("Data Flow", get_query("data-flow").name)
        self.assertEqual("SSSP", get_query("sssp").name)

    def test_unknown_query(self):
        with self.assertRaises(KeyError):
            get_query("fibonacci")

    def test_runs_oracle(self):
        self.assertTrue(runs_oracle(get_query("SSSP")))
        self.assertFalse(runs_oracle(get_query("CC")))
        self.assertFalse(runs_oracle(get_query("BOM")))


class TestReferenceQueries(unittest.TestCase):
    def test_all_subparts(self):
        subparts = gen_dataset(DatasetSpec(DatasetKind.BOM_HIERARCHY, 6, seed=4))["subparts"]

        result = evaluate(all_subparts(), {"subparts": subparts})

        self.assertEqual(subparts.as_set(), result.as_set())

    def test_bill_of_materials_diverges_on_cycles(self):
        spec = DatasetSpec(DatasetKind.BOM_HIERARCHY, 6, seed=1, cyclic=True)

        with self.assertRaises(NontermError) as context:
            evaluate(bom(), gen_dataset(spec), EvalConfig(cap=50))

        self.assertEqual("waitfor", context.exception.component)

    def test_bill_of_materials(self):
        spec = DatasetSpec(DatasetKind.BOM_HIERARCHY, 6, seed=1)
        database = gen_dataset(spec)

        result = evaluate(bom(), database)

        parts = {part for part, _ in database["subparts"]}
        self.assertEqual(parts | {part for part, _ in database["basicparts"]}, set(dict(result)))


def small(spec):
    return spec if spec.kind == DatasetKind.CYCLE_GRAPH else replace(spec, size=3)


def bag_entries():
    return [entry for entry in build_corpus() if not entry.expected.set_semantic]


def chain(*columns):
    return [(i, i + 1, *columns) for i in range(3)]


POINTS_TO_ROWS = {
    "allocs": [(1, 100), (3, 300)],
    "assign": [(2, 3)],
    "stores": [(1, 0, 2)],
    "loads": [(5, 1, 0)],
}

# rows where some fact joins a fresh recursive row with an older one
NONLINEAR_ROWS = {
    "CSPA": {"assign": [(1, 0), (2, 1), (3, 2)]},
    "PTC": POINTS_TO_ROWS,
    "JPT": POINTS_TO_ROWS,
    "CBA": {"assign": chain()},
    "APT": {"allocs": [(4, 1), (1, 2)], "assign": [(3, 4)], "dereference": [(5, 3)]},
    "APSP": {"edge": chain(1)},
    "Orbits": {"edges": chain()},
    "Data Flow": {"jumps": chain()},
}


class TestBagSemantics(unittest.TestCase):
    def test_bag_queries_terminate_on_acyclic_data(self):
        for entry in bag_entries():
            for spec in entry.acyclic_datasets:
                result = evaluate(entry.ir, gen_dataset(small(spec)))

                self.assertEqual(entry.ir.schema, result.schema, f"{entry} on {spec}")

    def test_bag_queries_diverge_on_cyclic_data(self):
        for entry in bag_entries():
            if not entry.expected.constructor_free:
                continue
            for spec in entry.cyclic_datasets:
                database = gen_dataset(small(spec))

                deduplicated = evaluate(entry.ir, database, EvalConfig(dedupe=Category.SET))
                with self.assertRaises(NontermError, msg=f"{entry} on {spec}"):
                    evaluate(entry.ir, database, EvalConfig(cap=3))

                self.assertEqual(entry.ir.schema, deduplicated.schema)

    def test_constructors_bound_the_recursion(self):
        for entry in bag_entries():
            if entry.expected.constructor_free:
                continue
            for spec in entry.cyclic_datasets:
                result = evaluate(entry.ir, gen_dataset(small(spec)))

                self.assertEqual(entry.ir.schema, result.schema, f"{entry} on {spec}")


class TestNonlinearQueries(unittest.TestCase):
    def test_every_nonlinear_query_has_rows(self):
        names = {entry.name for entry in build_corpus() if not entry.expected.linear}

        self.assertEqual(names, set(NONLINEAR_ROWS))

    def test_delta_only_misses_rows(self):
        for entry in build_corpus():
            if entry.expected.linear:
                continue
            [(_, fix)] = fix_nodes(entry.ir)
            rows = NONLINEAR_ROWS[entry.name]
            database = {
                name: Relation(schema, rows.get(name, []))
                for name, schema in table_scans(fix).items()
            }

            semi = evaluate(fix, database, EvalConfig(mode=EvalMode.SEMINAIVE)).as_set()
            delta = evaluate(fix, database, EvalConfig(mode=EvalMode.DELTAONLY)).as_set()

            self.assertLess(delta, semi, entry.name)


class TestEmitStatus(unittest.TestCase):
    def test_mutual_recursion(self):
        statuses = emit_status(even_odd())

        self.assertEqual(EmitStatus.OK, statuses[Dialect.MARIADB])
        self.assertEqual(EmitStatus.UNSUPPORTED, statuses[Dialect.POSTGRES])

    def test_linear_set_query(self):
        statuses = emit_status(transitive_closure())

        self.assertEqual(EmitStatus.OK, statuses[Dialect.POSTGRES])
        self.assertEqual(EmitStatus.OK, statuses[Dialect.SQLITE])
        self.assertEqual(EmitStatus.UNSUPPORTED, statuses[Dialect.ORACLE])

    def test_bag_query(self):
        statuses = emit_status(bom())

        self.assertEqual(EmitStatus.OK, statuses[Dialect.POSTGRES])
        self.assertEqual(EmitStatus.OK, statuses[Dialect.ORACLE])

    def test_nonlinear_query(self):
        statuses = emit_status(get_query("APSP").ir)

        self.assertEqual(EmitStatus.REFUSED, statuses[Dialect.POSTGRES])


class TestCorpusDirectory(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def test_write_and_read(self):
        entries = [get_query("SSSP"), get_query("BOM")]

        write_corpus(self.root, entries)
        loaded = read_corpus(self.root)

        self.assertEqual(["SSSP", "BOM"], [entry.name for entry in loaded])
        for original, copy in zip(entries, loaded):
            self.assertEqual(original.expected, copy.expected)
            self.assertEqual(original.datasets, copy.datasets)
            self.assertEqual(serialize_ir(original.ir), serialize_ir(copy.ir))

    def test_manifest(self):
        write_corpus(self.root, [get_query("Data Flow")])

        manifest = json.loads(self.root.joinpath("manifest.json").read_text(encoding="utf-8"))

        self.assertEqual("ir-v1", manifest["version"])
        self.assertEqual("queries/data-flow.json", manifest["queries"][0]["ir"])
        self.assertEqual("data/assign-graph-8-s1", manifest["queries"][0]["datasets"][0]["path"])

    def test_written_data_loads(self):
        entry = get_query("SSSP")
        spec = entry.datasets[0]

        write_corpus(self.root, [entry])
        database = load_database(dataset_dir(self.root, spec), entry.ir)

        self.assertEqual(gen_dataset(spec), database)

    def test_missing_manifest(self):
        with self.assertRaises(FileNotFoundError):
            read_corpus(self.root)

    def test_malformed_manifest(self):
        self.root.joinpath("manifest.json").write_text('{"queries": [{}]}', encoding="utf-8")

        with self.assertRaises(ParseError):
            read_corpus(self.root)

    def test_empty_manifest(self):
        self.root.joinpath("manifest.json").write_text('{"queries": []}', encoding="utf-8")

        with self.assertRaises(ParseError):
            read_corpus(self.root)


class TestBench(unittest.TestCase):
    def test_whole_benchmark_passes(self):
        results = run_bench(build_corpus())

        failed = [result.to_dict() for result in results if not result.passed]
        self.assertEqual([], failed)

    def test_oracle_only_for_monotone_set_queries(self):
        (result,) = run_bench([get_query("CC")])

        self.assertIsNone(result.oracle)
        self.assertIsNone(result.to_dict()["oracle"])
        self.assertEqual(len(Dialect), len(result.to_dict()["emit"]))
