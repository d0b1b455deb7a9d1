from itertools import permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replisim.errors import (
    DuplicateKey,
    PrimaryKeyAssignment,
    RowMissing,
    SchemaMismatch,
    TypeMismatch,
    UnknownColumn,
)
from replisim.minisql import Comparison
from replisim.relmodel import (
    INT,
    TEXT,
    RowVersion,
    Table,
    TableSchema,
    eval_comparison,
    eval_predicate,
    table_equal,
)

SCHEMA = TableSchema(
    "table1",
    (("field_1", INT), ("field_2", TEXT), ("field_3", INT)),
    "field_1",
)

ROWS = [
    (1, "Text1", 1234),
    (2, "Text2", 4321),
    (3, "Text3", 2233),
    (4, "Text4", 4411),
]


def make_table(rows=ROWS):
    table = Table(SCHEMA)
    for i, (f1, f2, f3) in enumerate(rows):
        table.insert(
            {"field_1": f1, "field_2": f2, "field_3": f3},
            RowVersion(0, "x", i + 1),
        )
    return table


def v(n):
    return RowVersion(n, "x", n)


def test_insert_then_select_all():
    table = make_table()
    assert table.select(None) == ROWS
    assert len(table) == 4


def test_insert_duplicate_pk():
    table = make_table()
    with pytest.raises(DuplicateKey):
        table.insert({"field_1": 1, "field_2": "again", "field_3": 0}, v(9))


def test_insert_requires_complete_row():
    table = Table(SCHEMA)
    with pytest.raises(SchemaMismatch):
        table.insert({"field_1": 1, "field_2": "Text1"}, v(1))
    with pytest.raises(UnknownColumn):
        table.insert(
            {"field_1": 1, "field_2": "a", "field_3": 2, "bogus": 3}, v(1)
        )


def test_update_values_and_version():
    table = make_table()
    table.update(2, {"field_2": "TextX"}, v(5))
    assert table.rows[2].values == {"field_1": 2, "field_2": "TextX", "field_3": 4321}
    assert table.rows[2].version == v(5)


def test_update_empty_assignments_restamps_only():
    table = make_table()
    before = dict(table.rows[3].values)
    table.update(3, {}, v(7))
    assert table.rows[3].values == before
    assert table.rows[3].version == v(7)


def test_update_missing_row():
    table = make_table()
    with pytest.raises(RowMissing):
        table.update(99, {"field_2": "nope"}, v(5))


def test_update_cannot_assign_pk():
    table = make_table()
    with pytest.raises(PrimaryKeyAssignment):
        table.update(1, {"field_1": 10}, v(5))


def test_delete_and_delete_again():
    table = make_table()
    table.delete(4)
    assert len(table) == 3
    with pytest.raises(RowMissing):
        table.delete(4)


def test_delete_all_orderings_leave_empty_table():
    for order in permutations([1, 2, 3, 4]):
        table = make_table()
        for pk in order:
            table.delete(pk)
        assert table.select(None) == []


def test_select_projection_and_predicate():
    table = make_table()
    got = table.select(["field_3"], (Comparison("field_3", ">", 2000),))
    assert got == [(4321,), (2233,), (4411,)]


def test_select_empty_beyond_max_pk():
    table = make_table()
    assert table.select(None, (Comparison("field_1", ">", 4),)) == []


def test_select_unknown_projection_column():
    table = make_table()
    with pytest.raises(UnknownColumn):
        table.select(["field_9"])


def test_null_never_matches_predicates():
    table = make_table()
    table.update(1, {"field_2": None}, v(8))
    pred_eq = (Comparison("field_2", "=", "Text1"),)
    pred_ne = (Comparison("field_2", "!=", "Text1"),)
    assert 1 not in table.matching_pks(pred_eq)
    assert 1 not in table.matching_pks(pred_ne)


def test_comparison_type_error_never_coerces():
    with pytest.raises(TypeMismatch):
        eval_comparison(SCHEMA, {"field_1": 1, "field_2": "a", "field_3": 2}, Comparison("field_3", "=", "2"))
    with pytest.raises(TypeMismatch):
        eval_comparison(SCHEMA, {"field_1": 1, "field_2": "a", "field_3": 2}, Comparison("field_2", "<", 5))


def test_empty_predicate_matches_everything():
    values = {"field_1": 1, "field_2": None, "field_3": None}
    assert eval_predicate(SCHEMA, values, ())


def test_version_total_order():
    assert RowVersion(1, "a", 1) < RowVersion(2, "a", 1)
    assert RowVersion(2, "a", 9) < RowVersion(2, "b", 1)
    assert RowVersion(2, "b", 1) < RowVersion(2, "b", 2)


def test_schema_rejects_bad_definitions():
    with pytest.raises(SchemaMismatch):
        TableSchema("t", (("a", INT), ("a", TEXT)), "a")
    with pytest.raises(SchemaMismatch):
        TableSchema("t", (("a", INT),), "b")
    with pytest.raises(SchemaMismatch):
        TableSchema("t", (("a", TEXT),), "a")  # pk must be an int column


def test_pk_value_must_be_integer():
    table = Table(SCHEMA)
    with pytest.raises(TypeMismatch):
        table.insert({"field_1": "one", "field_2": "a", "field_3": 1}, v(1))
    with pytest.raises(TypeMismatch):
        table.insert({"field_1": None, "field_2": "a", "field_3": 1}, v(1))


def test_null_fits_any_non_pk_column():
    table = Table(SCHEMA)
    table.insert({"field_1": 1, "field_2": None, "field_3": None}, v(1))
    assert table.select(None) == [(1, None, None)]


def test_snapshot_isolation_both_directions():
    table = make_table()
    copy = table.snapshot()
    table.update(1, {"field_2": "mutated"}, v(5))
    copy.delete(2)
    assert copy.rows[1].values["field_2"] == "Text1"
    assert 2 in table.rows
    assert table.rows[1].values["field_2"] == "mutated"


def test_table_equal_ignores_versions():
    a = make_table()
    b = make_table()
    b.update(1, {}, v(99))  # same values, different stamp
    assert table_equal(a, b)
    b.delete(3)
    assert not table_equal(a, b)


def test_table_equal_requires_same_schema():
    other = TableSchema("other", (("field_1", INT),), "field_1")
    with pytest.raises(SchemaMismatch):
        table_equal(make_table(), Table(other))


# Random raw-op sequences can never produce a duplicate pk, and select order
# is always ascending by pk.
@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["insert", "update", "delete"]),
            st.integers(min_value=1, max_value=12),
        ),
        max_size=40,
    )
)
def test_pk_uniqueness_and_order_hold(ops):
    table = Table(SCHEMA)
    stamp = 0
    for kind, pk in ops:
        stamp += 1
        version = RowVersion(stamp, "p", stamp)
        try:
            if kind == "insert":
                table.insert({"field_1": pk, "field_2": "w", "field_3": pk}, version)
            elif kind == "update":
                table.update(pk, {"field_3": pk * 10}, version)
            else:
                table.delete(pk)
        except (DuplicateKey, RowMissing):
            pass
        pks = [row[0] for row in table.select(["field_1"])]
        assert pks == sorted(set(pks))
