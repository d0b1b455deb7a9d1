import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replisim.errors import ParseError
from replisim.minisql import (
    Comparison,
    Delete,
    Insert,
    Select,
    Update,
    parse,
    render,
)


def test_insert_ast():
    stmt = parse("INSERT INTO table1 (field_1, field_2, field_3) VALUES (5, 'Text5', 7)")
    assert stmt == Insert("table1", ("field_1", "field_2", "field_3"), (5, "Text5", 7))


def test_select_star_ast():
    stmt = parse("SELECT * FROM table1")
    assert stmt == Select("table1", None, ())


def test_keywords_case_insensitive_identifiers_not():
    assert parse("Select * from table1") == parse("SELECT * FROM table1")
    assert parse("select a from T").projection == ("a",)
    assert parse("select A from T").projection == ("A",)


def test_update_ast_with_predicate():
    stmt = parse("update t set a = 1, b = NULL where id >= 10 and b != 'x'")
    assert stmt == Update(
        "t",
        (("a", 1), ("b", None)),
        (Comparison("id", ">=", 10), Comparison("b", "!=", "x")),
    )


def test_delete_without_predicate_matches_all():
    assert parse("delete from t") == Delete("t", ())


def test_negative_integer_literal():
    stmt = parse("update t set a = -5 where id = -1")
    assert stmt.assignments == (("a", -5),)
    assert stmt.predicate[0].value == -1


def test_text_escape_round_trip():
    stmt = Insert("t", ("id", "name"), (1, "it's"))
    text = render(stmt)
    assert "'it''s'" in text
    assert parse(text) == stmt


def test_render_canonicalizes():
    assert render(parse("select * from table1")) == "SELECT * FROM table1"
    assert (
        render(parse("insert   into t(a,b)values(1,NULL)"))
        == "INSERT INTO t (a, b) VALUES (1, NULL)"
    )


def test_error_offsets_are_byte_positions():
    # "DELETE FROM t WHERE" truncates right at the end: offset 19.
    with pytest.raises(ParseError) as err:
        parse("DELETE FROM t WHERE")
    assert err.value.offset == 19

    with pytest.raises(ParseError) as err:
        parse("SELECT * FORM t")
    assert err.value.offset == 9  # "FORM" reads as an identifier where FROM is due

    with pytest.raises(ParseError) as err:
        parse("INSERT INTO t (a) VALUES (1) garbage")
    assert err.value.offset == 29

    # Multibyte text before the bad token: offsets count bytes, not chars.
    with pytest.raises(ParseError) as err:
        parse("update t set a = 'héllo' where")
    assert err.value.offset == len("update t set a = 'héllo' where".encode("utf-8"))


def test_unterminated_text_literal():
    with pytest.raises(ParseError) as err:
        parse("insert into t (a) values ('oops)")
    assert err.value.offset == 26
    assert "closing quote" in str(err.value)


def test_insert_column_value_count_mismatch():
    with pytest.raises(ParseError):
        parse("insert into t (a, b) values (1)")


def test_rejects_anything_outside_the_four_forms():
    for text in [
        "CREATE TABLE t (a int)",
        "select * from a join b",
        "DROP TABLE t",
        "",
        "where id = 1",
    ]:
        with pytest.raises(ParseError):
            parse(text)


IDENT = st.from_regex(r"[a-z_][a-z0-9_]{0,9}", fullmatch=True).filter(
    lambda s: s
    not in {
        "insert", "into", "values", "update", "set", "delete", "from",
        "select", "where", "and", "null",
    }
)
LITERAL = st.one_of(
    st.integers(min_value=-(10**9), max_value=10**9),
    st.text(
        alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"),
        max_size=12,
    ),
    st.none(),
)
COMPARISON = st.builds(
    Comparison, IDENT, st.sampled_from(["=", "!=", "<", "<=", ">", ">="]), LITERAL
)
PREDICATE = st.lists(COMPARISON, max_size=3).map(tuple)


def unique_pairs(pairs):
    seen = set()
    out = []
    for col, value in pairs:
        if col not in seen:
            seen.add(col)
            out.append((col, value))
    return tuple(out)


INSERT = st.builds(
    lambda table, pairs: Insert(
        table, tuple(c for c, _ in pairs), tuple(v for _, v in pairs)
    ),
    IDENT,
    st.lists(st.tuples(IDENT, LITERAL), min_size=1, max_size=5).map(unique_pairs),
)
UPDATE = st.builds(
    Update,
    IDENT,
    st.lists(st.tuples(IDENT, LITERAL), min_size=1, max_size=4).map(unique_pairs),
    PREDICATE,
)
DELETE = st.builds(Delete, IDENT, PREDICATE)
SELECT = st.builds(
    Select,
    IDENT,
    st.one_of(st.none(), st.lists(IDENT, min_size=1, max_size=4).map(tuple)),
    PREDICATE,
)
STATEMENT = st.one_of(INSERT, UPDATE, DELETE, SELECT)


@settings(max_examples=300, deadline=None)
@given(STATEMENT)
def test_round_trip(stmt):
    assert parse(render(stmt)) == stmt


@settings(max_examples=100, deadline=None)
@given(STATEMENT)
def test_render_is_a_fixed_point(stmt):
    once = render(stmt)
    assert render(parse(once)) == once
