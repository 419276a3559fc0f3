import unittest

from hypothesis import given, strategies as st

from fixql.corpus import (
    company_control,
    even_odd,
    nonlinear_transitive_closure,
    table,
    transitive_closure,
)
from fixql.errors import (
    ArityError,
    BaseCaseError,
    RangeRestrictionError,
    SchemaError,
    ShapeError,
)
from fixql.ir import (
    DepRef,
    FlatMap,
    Join,
    agg,
    alpha_equal,
    and_,
    build_fix,
    build_table,
    component_names,
    conjuncts,
    flatmap_to_join,
    free_vars,
    lit,
    op,
    shape_join,
    table_scans,
)
from fixql.models import Category, ColumnType, RowSchema, Shape
from tests import faker

INT = ColumnType.INT


def edges():
    return table("edges")


class TestExpressions(unittest.TestCase):
    def test_shape_join(self):
        scalar, non_scalar = Shape.SCALAR, Shape.NON_SCALAR

        self.assertEqual(scalar, shape_join(non_scalar, [scalar, non_scalar]))
        self.assertEqual(non_scalar, shape_join(non_scalar, [non_scalar, non_scalar]))
        self.assertEqual(scalar, shape_join(scalar, []))

    def test_literal_type_inference(self):
        self.assertEqual(ColumnType.BOOL, lit(True).type)
        self.assertEqual(INT, lit(faker.random_int()).type)
        self.assertEqual(ColumnType.TEXT, lit(faker.word()).type)

    def test_literal_type_mismatch(self):
        with self.assertRaises(SchemaError):
            lit("one", INT)

    def test_apply_shape_and_constructor(self):
        node = edges().map(lambda e: {"z": op("+", e["x"], 1)})
        body = node.body.exprs()[0]

        self.assertEqual(Shape.NON_SCALAR, body.shape)
        self.assertTrue(body.uses_constructor)
        self.assertEqual(INT, body.result_type)

    def test_aggregation_is_scalar(self):
        expr = op(">", agg("sum", lit(1)), 0)

        self.assertEqual(Shape.SCALAR, expr.shape)
        self.assertFalse(expr.uses_constructor)

    def test_nested_aggregation(self):
        with self.assertRaises(ShapeError):
            agg("max", agg("sum", lit(1)))

    def test_unknown_aggregation(self):
        with self.assertRaises(ShapeError):
            agg("median", lit(1))

    def test_conjuncts(self):
        first, second, third = op("==", 1, 1), op("<", 1, 2), op("!=", 1, 2)

        self.assertEqual([first, second, third], conjuncts(and_(first, second, third)))


class TestQueries(unittest.TestCase):
    def test_table_name(self):
        with self.assertRaises(SchemaError):
            build_table("no such table", RowSchema.of(x=INT))

    def test_filter_needs_bool(self):
        with self.assertRaises(SchemaError):
            edges().filter(lambda e: e["x"])

    def test_map_must_not_aggregate(self):
        with self.assertRaises(ShapeError):
            edges().map(lambda e: {"total": agg("sum", e["x"])})

    def test_aggregate_needs_aggregation(self):
        with self.assertRaises(ShapeError):
            edges().aggregate(lambda e: {"x": e["x"]})

    def test_group_by_needs_aggregation(self):
        with self.assertRaises(ShapeError):
            edges().group_by(lambda e: {"x": e["x"]}, lambda e: {"x": e["x"]})

    def test_union_schema_mismatch(self):
        other = edges().map(lambda e: {"x": e["x"]})

        with self.assertRaises(SchemaError):
            edges().union(other)

    def test_categories(self):
        filtered = edges().distinct().filter(lambda e: op("<", e["x"], 3))

        self.assertEqual(Category.BAG, edges().category)
        self.assertEqual(Category.SET, edges().distinct().category)
        self.assertEqual(Category.SET, edges().union(edges()).category)
        self.assertEqual(Category.BAG, edges().union_all(edges()).category)
        self.assertEqual(Category.SET, filtered.category)

    @given(st.lists(st.sampled_from(["distinct", "union", "union_all", "filter"]), max_size=6))
    def test_category_algebra(self, steps):
        query, expected = edges(), Category.BAG

        for step in steps:
            match step:
                case "distinct":
                    query, expected = query.distinct(), Category.SET
                case "union":
                    query, expected = query.union(edges()), Category.SET
                case "union_all":
                    query, expected = query.union_all(edges()), Category.BAG
                case "filter":
                    query = query.filter(lambda e: op(">", e["x"], 0))

        self.assertEqual(expected, query.category)

    def test_group_by_having(self):
        grouped = edges().group_by(
            lambda e: {"x": e["x"]},
            lambda e: {"x": e["x"]},
            having=lambda e: op(">", agg("count", e["y"]), 1),
        )

        self.assertEqual(["x"], grouped.schema.names())

    def test_table_scans(self):
        self.assertEqual({"edges": RowSchema.of(x=INT, y=INT)}, table_scans(transitive_closure()))

    def test_conflicting_table_scans(self):
        other = build_table("edges", RowSchema.of(x=INT, y=ColumnType.TEXT))
        query = edges().flat_map(lambda e: other.map(lambda o: {"x": e["x"]}))

        with self.assertRaises(SchemaError):
            table_scans(query)


class TestFix(unittest.TestCase):
    def test_deps_are_tracked(self):
        fix = transitive_closure()
        definition = fix.defs[0]

        self.assertEqual(1, len(definition.deps))
        self.assertEqual({DepRef(fix.fix_id, 1)}, definition.deps.support())
        self.assertFalse(fix.deps)
        self.assertFalse(fix.restricted)

    def test_category(self):
        self.assertEqual(Category.SET, transitive_closure().category)
        self.assertEqual(Category.BAG, transitive_closure(Category.BAG).category)

    def test_needs_a_base(self):
        with self.assertRaises(ArityError):
            build_fix([], lambda: ())

    def test_arity_mismatch(self):
        with self.assertRaises(ArityError):
            build_fix([edges(), edges()], lambda first, second: first)

    def test_result_out_of_range(self):
        with self.assertRaises(ArityError):
            build_fix([edges()], lambda path: path, result=2)

    def test_duplicate_names(self):
        with self.assertRaises(ArityError):
            build_fix([edges(), edges()], lambda a, b: (b, a), names=["path", "path"])

    def test_definition_schema_must_match_base(self):
        with self.assertRaises(RangeRestrictionError) as context:
            build_fix([edges()], lambda path: path.map(lambda p: {"x": p["x"]}))

        self.assertEqual(1, context.exception.component)

    def test_base_reads_recursive_relation(self):
        def inner(path):
            build_fix([path], lambda again: again)
            return path

        with self.assertRaises(BaseCaseError):
            build_fix([edges()], inner)

    def test_result_component(self):
        fix = company_control()

        self.assertEqual(["src", "dst"], fix.schema.names())

    def test_component_names(self):
        fix = even_odd()

        names = component_names(fix)

        self.assertEqual(["even", "odd"], sorted(names.values()))

    def test_unnamed_components_are_numbered(self):
        fix = build_fix([edges()], lambda path: path.distinct())

        self.assertEqual(["recursive_1"], list(component_names(fix).values()))


class TestFlattening(unittest.TestCase):
    def test_flatmap_to_join(self):
        query = edges().flat_map(
            lambda e1: edges()
            .filter(lambda e2: op("==", e1["y"], e2["x"]))
            .map(lambda e2: {"x": e1["x"], "y": e2["y"]})
        )

        join = flatmap_to_join(query)

        self.assertIsInstance(join, Join)
        self.assertEqual(2, len(join.sources))
        self.assertIsNotNone(join.pred)
        self.assertEqual(query.schema, join.schema)

    def test_flatmap_over_correlated_inner(self):
        query = edges().flat_map(
            lambda e1: edges()
            .filter(lambda e2: op("==", e1["y"], e2["x"]))
            .distinct()
            .map(lambda e2: {"x": e1["x"], "y": e2["y"]})
        )

        self.assertIsInstance(query, FlatMap)
        self.assertIsNone(flatmap_to_join(query))

    def test_free_vars(self):
        captured = []

        def inner(e1):
            captured.append(e1.id)
            return edges().filter(lambda e2: op("==", e1["y"], e2["x"]))

        query = edges().flat_map(inner)

        self.assertEqual(set(), free_vars(query))
        self.assertEqual({captured[0]}, free_vars(query.inner))


class TestAlphaEqual(unittest.TestCase):
    def test_fresh_ids(self):
        self.assertTrue(alpha_equal(transitive_closure(), transitive_closure()))
        self.assertTrue(alpha_equal(even_odd(), even_odd()))

    def test_different_queries(self):
        self.assertFalse(alpha_equal(transitive_closure(), nonlinear_transitive_closure()))
        self.assertFalse(
            alpha_equal(transitive_closure(Category.SET), transitive_closure(Category.BAG))
        )

    def test_binders_must_correspond(self):
        def correlated(swap):
            return edges().flat_map(
                lambda e1: edges().filter(
                    lambda e2: op("==", e2["x"], e1["y"]) if swap else op("==", e1["x"], e2["y"])
                )
            )

        self.assertTrue(alpha_equal(correlated(False), correlated(False)))
        self.assertFalse(alpha_equal(correlated(False), correlated(True)))
