import unittest

from hypothesis import given, settings, strategies as st

from fixql.corpus import (
    Monotonicity,
    build_corpus,
    even_odd,
    nonlinear_transitive_closure,
    sssp,
    table,
    transitive_closure,
)
from fixql.datasets import SCHEMAS, DatasetKind, DatasetSpec, gen_dataset
from fixql.errors import (
    DivisionByZero,
    EvalTypeError,
    InternalError,
    MissingTable,
    NontermError,
    SchemaError,
)
from fixql.evalengine import (
    EvalConfig,
    EvalMode,
    Evaluator,
    Relation,
    diff_test,
    eval_expr,
    evaluate,
)
from fixql.ir import ColumnRef, RecRef, TableScan, agg, fix_nodes, free_vars, op, transform
from fixql.models import Category, ColumnType, RowSchema
from tests import faker


def chain(size):
    return gen_dataset(DatasetSpec(DatasetKind.CHAIN_GRAPH, size))


def cycle(size):
    return gen_dataset(DatasetSpec(DatasetKind.CYCLE_GRAPH, size))


def numbers(*values):
    return {"numbers": Relation(SCHEMAS["numbers"], [(value,) for value in values])}


def unfold(definition, fix):
    def read_table(node):
        if isinstance(node, RecRef) and node.dep.fix == fix.fix_id:
            return TableScan(f"component_{node.dep.index}", node.schema)
        return node

    return transform(definition, read_table)


class TestRelation(unittest.TestCase):
    def test_set_relation_dedupes(self):
        relation = Relation(SCHEMAS["numbers"], [(1,), (1,), (2,)], Category.SET)

        self.assertEqual([(1,), (2,)], relation.rows)

    def test_bag_equality_counts_duplicates(self):
        schema = SCHEMAS["numbers"]

        self.assertEqual(Relation(schema, [(1,), (2,)]), Relation(schema, [(2,), (1,)]))
        self.assertNotEqual(Relation(schema, [(1,), (1,)]), Relation(schema, [(1,)]))

    def test_canonical(self):
        relation = Relation(SCHEMAS["numbers"], [(3,), (1,), (2,)])

        self.assertEqual([(1,), (2,), (3,)], relation.canonical())


class TestEvalConfig(unittest.TestCase):
    def test_cap_must_be_positive(self):
        with self.assertRaises(ValueError):
            EvalConfig(cap=0)

    def test_mode_from_str(self):
        self.assertEqual(EvalMode.DELTAONLY, EvalMode.from_str("deltaonly"))
        self.assertEqual(["naive", "seminaive", "deltaonly"], EvalMode.str_list())


class TestEvalExpr(unittest.TestCase):
    def setUp(self):
        self.var = faker.random_int(100, 999)
        self.column = ColumnRef(self.var, "x", ColumnType.INT)

    def test_arithmetic(self):
        self.assertEqual(3, eval_expr(op("+", self.column, 1), {self.var: {"x": 2}}))

    def test_aggregation_outside_group(self):
        with self.assertRaises(EvalTypeError):
            eval_expr(agg("sum", self.column), {self.var: {"x": 2}})

    def test_unbound_column(self):
        with self.assertRaises(InternalError):
            eval_expr(self.column, {})


class TestEvaluate(unittest.TestCase):
    def test_transitive_closure(self):
        evaluator = Evaluator(chain(3))

        result = evaluator.run(transitive_closure())

        self.assertEqual(
            {(0, 1), (1, 2), (2, 3), (0, 2), (1, 3), (0, 3)},
            result.as_set(),
        )
        self.assertEqual(6, len(result))
        self.assertEqual(3, evaluator.iterations["path"])

    def test_naive_matches_seminaive(self):
        database = chain(4)

        for category in Category:
            query = transitive_closure(category)
            naive = evaluate(query, database, EvalConfig(mode=EvalMode.NAIVE))
            semi = evaluate(query, database, EvalConfig(mode=EvalMode.SEMINAIVE))

            self.assertEqual(naive, semi)

    def test_non_linear_delta_only_is_incomplete(self):
        query = nonlinear_transitive_closure()

        semi = evaluate(query, chain(3), EvalConfig(mode=EvalMode.SEMINAIVE))
        delta = evaluate(query, chain(3), EvalConfig(mode=EvalMode.DELTAONLY))

        self.assertEqual(6, len(semi))
        self.assertEqual(5, len(delta))
        self.assertNotIn((0, 3), delta.as_set())

    def test_set_semantics_terminate_on_cycles(self):
        result = evaluate(transitive_closure(), cycle(2), EvalConfig(cap=10))

        self.assertEqual({(0, 1), (1, 0), (0, 0), (1, 1)}, result.as_set())

    def test_bag_semantics_diverge_on_cycles(self):
        cap = faker.random_int(5, 20)

        with self.assertRaises(NontermError) as context:
            evaluate(transitive_closure(Category.BAG), cycle(2), EvalConfig(cap=cap))

        self.assertEqual("path", context.exception.component)
        self.assertEqual(cap, context.exception.iterations)

    def test_dedupe_override(self):
        config = EvalConfig(cap=10, dedupe=Category.SET)

        result = evaluate(transitive_closure(Category.BAG), cycle(2), config)

        self.assertEqual(4, len(result))

    def test_trace(self):
        evaluator = Evaluator(chain(2), EvalConfig(trace=True))

        evaluator.run(transitive_closure())

        self.assertEqual([0, 1, 2], [entry.iteration for entry in evaluator.trace])
        self.assertEqual(((0, 2),), evaluator.trace[1].delta)
        self.assertEqual(3, evaluator.trace[-1].accumulated)

    def test_mutual_recursion(self):
        result = evaluate(even_odd(), numbers(*range(6)))

        self.assertEqual({(0,), (2,), (4,)}, result.as_set())

    def test_aggregation_after_recursion(self):
        database = {
            "edge": Relation(SCHEMAS["edge"], [(0, 1, 4), (0, 2, 1), (2, 1, 1)]),
            "base": Relation(SCHEMAS["base"], [(0, 0)]),
        }

        result = evaluate(sssp(), database)

        self.assertEqual({(0, 0), (1, 2), (2, 1)}, result.as_set())

    def test_group_by_having(self):
        query = table("edges").group_by(
            lambda e: {"x": e["x"]},
            lambda e: {"x": e["x"], "out": agg("count", e["y"])},
            having=lambda e: op(">", agg("count", e["y"]), 1),
        )
        database = {"edges": Relation(SCHEMAS["edges"], [(0, 1), (0, 2), (1, 2)])}

        self.assertEqual([(0, 2)], evaluate(query, database).rows)

    def test_aggregate_over_empty_input(self):
        query = table("numbers").aggregate(lambda num: {"total": agg("sum", num["n"])})

        self.assertEqual([], evaluate(query, numbers()).rows)

    def test_intersect_all(self):
        schema = SCHEMAS["numbers"]
        left = table("numbers")
        right = left.filter(lambda num: op("<", num["n"], 2))
        database = {"numbers": Relation(schema, [(1,), (1,), (3,)])}

        result = evaluate(left.intersect_all(right), database)

        self.assertEqual([(1,), (1,)], result.rows)

    def test_integer_division_truncates(self):
        query = table("numbers").map(lambda num: {"n": op("/", num["n"], 2)})

        self.assertEqual([(-3,), (3,)], evaluate(query, numbers(-7, 7)).rows)

    def test_division_by_zero(self):
        query = table("numbers").map(lambda num: {"n": op("/", num["n"], 0)})

        with self.assertRaises(DivisionByZero):
            evaluate(query, numbers(1))

    def test_missing_table(self):
        with self.assertRaises(MissingTable) as context:
            evaluate(transitive_closure(), {})

        self.assertEqual("edges", context.exception.name)

    def test_table_schema_mismatch(self):
        database = {"edges": Relation(RowSchema.of(x=ColumnType.INT), [(1,)])}

        with self.assertRaises(SchemaError):
            evaluate(transitive_closure(), database)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=12))
    def test_modes_agree_on_random_graphs(self, rows):
        database = {"edges": Relation(SCHEMAS["edges"], rows)}
        query = transitive_closure()

        naive = evaluate(query, database, EvalConfig(mode=EvalMode.NAIVE))
        semi = evaluate(query, database, EvalConfig(mode=EvalMode.SEMINAIVE))

        self.assertEqual(naive.as_set(), semi.as_set())


class TestDiffTest(unittest.TestCase):
    def test_linear_query(self):
        report = diff_test(transitive_closure(), [chain(3), cycle(3)])

        self.assertTrue(report.passed)
        self.assertFalse(report.affine)
        self.assertEqual(2, report.datasets)

    def test_non_linear_witness(self):
        report = diff_test(nonlinear_transitive_closure(), chain(3))

        self.assertTrue(report.affine)
        self.assertTrue(report.incomplete_witness)
        self.assertTrue(report.passed)

    def test_missing_witness(self):
        report = diff_test(nonlinear_transitive_closure(), chain(1))

        self.assertFalse(report.incomplete_witness)
        self.assertEqual(["delta-only evaluation was complete on every dataset"], report.mismatches)

    def test_missing_witness_not_required(self):
        report = diff_test(nonlinear_transitive_closure(), chain(1), require_witness=False)

        self.assertTrue(report.passed)

    def test_both_modes_diverge(self):
        report = diff_test(transitive_closure(Category.BAG), cycle(2), cap=10)

        self.assertTrue(report.passed)


class TestMonotonicity(unittest.TestCase):
    @settings(max_examples=25, deadline=None)
    @given(
        st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=10),
        st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=5),
    )
    def test_monotone_query_only_grows(self, rows, extra):
        smaller = {"edges": Relation(SCHEMAS["edges"], rows)}
        larger = {"edges": Relation(SCHEMAS["edges"], rows + extra)}

        before = evaluate(transitive_closure(), smaller)
        after = evaluate(transitive_closure(), larger)

        self.assertLessEqual(before.as_set(), after.as_set())

    def test_monotone_corpus_definitions_only_grow(self):
        entries = [entry for entry in build_corpus() if entry.expected.monotone == Monotonicity.YES]
        fixes = [
            (entry, fix)
            for entry in entries
            for _, fix in fix_nodes(entry.ir)
            if not fix.deps and not free_vars(fix)
        ]

        self.assertTrue(fixes)
        for entry, fix in fixes:
            definitions = [unfold(definition, fix) for definition in fix.defs]
            for spec in entry.acyclic_datasets:
                database = gen_dataset(spec)
                smaller = {
                    f"component_{index}": Relation(base.schema, evaluate(base, database).rows)
                    for index, base in enumerate(fix.bases, start=1)
                }
                larger = {
                    name: Relation(
                        relation.schema,
                        relation.rows + evaluate(definition, {**database, **smaller}).rows,
                    )
                    for (name, relation), definition in zip(smaller.items(), definitions)
                }

                for definition in definitions:
                    before = evaluate(definition, {**database, **smaller})
                    after = evaluate(definition, {**database, **larger})

                    self.assertLessEqual(before.as_set(), after.as_set(), f"{entry} on {spec}")
