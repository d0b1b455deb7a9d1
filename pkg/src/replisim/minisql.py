"""Parser, AST and canonical renderer for the replicated DML/SELECT subset.

Grammar (keywords case-insensitive, identifiers case-sensitive):

    statement   = insert | update | delete | select
    insert      = INSERT INTO table "(" column {"," column} ")"
                  VALUES "(" literal {"," literal} ")"
    update      = UPDATE table SET column "=" literal {"," column "=" literal}
                  [WHERE conjunction]
    delete      = DELETE FROM table [WHERE conjunction]
    select      = SELECT ("*" | column {"," column}) FROM table
                  [WHERE conjunction]
    conjunction = comparison {AND comparison}
    comparison  = column ("=" | "!=" | "<" | "<=" | ">" | ">=") literal
    literal     = integer | "'" text "'" | NULL

Text literals escape a quote by doubling it. ``parse`` raises ParseError
with the byte offset of the offending token; ``render`` produces canonical
text (uppercase keywords, single spaces) such that parse(render(s)) == s.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError

KEYWORDS = {
    "insert", "into", "values", "update", "set", "delete", "from",
    "select", "where", "and", "null",
}

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Comparison:
    column: str
    op: str
    value: object


# A predicate is a conjunction of comparisons; () means "match everything".
Predicate = tuple


@dataclass(frozen=True)
class Insert:
    table: str
    columns: tuple
    values: tuple


@dataclass(frozen=True)
class Update:
    table: str
    assignments: tuple  # ((column, value), ...)
    predicate: tuple = ()


@dataclass(frozen=True)
class Delete:
    table: str
    predicate: tuple = ()


@dataclass(frozen=True)
class Select:
    table: str
    projection: tuple | None = None  # None means "*"
    predicate: tuple = ()


Statement = Insert | Update | Delete | Select


# --- tokenizer -------------------------------------------------------------

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | set("0123456789")
_PUNCT = ("!=", "<=", ">=", "(", ")", ",", "*", "=", "<", ">")


@dataclass(frozen=True)
class _Token:
    kind: str  # ident | keyword | int | text | punct | end
    text: str
    value: object
    offset: int  # byte offset into the source


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


def _tokenize(source: str) -> list:
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            i += 1
            continue
        start = i
        if ch in _IDENT_START:
            while i < n and source[i] in _IDENT_CONT:
                i += 1
            word = source[start:i]
            if word.lower() in KEYWORDS:
                tokens.append(_Token("keyword", word.lower(), None, _byte_offset(source, start)))
            else:
                tokens.append(_Token("ident", word, None, _byte_offset(source, start)))
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()):
            i += 1
            while i < n and source[i].isdigit():
                i += 1
            text = source[start:i]
            tokens.append(_Token("int", text, int(text), _byte_offset(source, start)))
            continue
        if ch == "'":
            i += 1
            parts = []
            while True:
                if i >= n:
                    raise ParseError(_byte_offset(source, start), "closing quote")
                if source[i] == "'":
                    if i + 1 < n and source[i + 1] == "'":
                        parts.append("'")
                        i += 2
                        continue
                    i += 1
                    break
                parts.append(source[i])
                i += 1
            text = "".join(parts)
            tokens.append(_Token("text", source[start:i], text, _byte_offset(source, start)))
            continue
        for punct in _PUNCT:
            if source.startswith(punct, i):
                tokens.append(_Token("punct", punct, None, _byte_offset(source, start)))
                i += len(punct)
                break
        else:
            raise ParseError(_byte_offset(source, i), "a token", repr(ch))
    tokens.append(_Token("end", "", None, _byte_offset(source, n)))
    return tokens


# --- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, source: str) -> None:
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected: str) -> ParseError:
        tok = self.peek()
        found = tok.text if tok.kind != "end" else "end of input"
        return ParseError(tok.offset, expected, repr(found))

    def expect_keyword(self, word: str) -> None:
        tok = self.peek()
        if tok.kind != "keyword" or tok.text != word:
            raise self.fail(word.upper())
        self.advance()

    def expect_punct(self, punct: str) -> None:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != punct:
            raise self.fail(repr(punct))
        self.advance()

    def ident(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "ident":
            raise self.fail(what)
        self.advance()
        return tok.text

    def literal(self):
        tok = self.peek()
        if tok.kind in ("int", "text"):
            self.advance()
            return tok.value
        if tok.kind == "keyword" and tok.text == "null":
            self.advance()
            return None
        raise self.fail("a literal")

    def comparator(self) -> str:
        tok = self.peek()
        if tok.kind == "punct" and tok.text in COMPARATORS:
            self.advance()
            return tok.text
        raise self.fail("a comparator")

    def predicate(self) -> tuple:
        """Optional WHERE conjunction; () when absent."""
        tok = self.peek()
        if not (tok.kind == "keyword" and tok.text == "where"):
            return ()
        self.advance()
        comps = [self.comparison()]
        while self.peek().kind == "keyword" and self.peek().text == "and":
            self.advance()
            comps.append(self.comparison())
        return tuple(comps)

    def comparison(self) -> Comparison:
        column = self.ident("a column name")
        op = self.comparator()
        value = self.literal()
        return Comparison(column, op, value)

    def statement(self) -> Statement:
        tok = self.peek()
        if tok.kind != "keyword":
            raise self.fail("INSERT, UPDATE, DELETE or SELECT")
        if tok.text == "insert":
            return self.insert()
        if tok.text == "update":
            return self.update()
        if tok.text == "delete":
            return self.delete()
        if tok.text == "select":
            return self.select()
        raise self.fail("INSERT, UPDATE, DELETE or SELECT")

    def insert(self) -> Insert:
        self.expect_keyword("insert")
        self.expect_keyword("into")
        table = self.ident("a table name")
        self.expect_punct("(")
        columns = [self.ident("a column name")]
        while self.peek().text == ",":
            self.advance()
            columns.append(self.ident("a column name"))
        self.expect_punct(")")
        self.expect_keyword("values")
        self.expect_punct("(")
        values = [self.literal()]
        while self.peek().text == ",":
            self.advance()
            values.append(self.literal())
        self.expect_punct(")")
        if len(columns) != len(values):
            raise ParseError(
                self.peek().offset,
                f"{len(columns)} values to match the column list",
                f"{len(values)} values",
            )
        return Insert(table, tuple(columns), tuple(values))

    def update(self) -> Update:
        self.expect_keyword("update")
        table = self.ident("a table name")
        self.expect_keyword("set")
        assignments = [self.assignment()]
        while self.peek().text == ",":
            self.advance()
            assignments.append(self.assignment())
        return Update(table, tuple(assignments), self.predicate())

    def assignment(self) -> tuple:
        column = self.ident("a column name")
        self.expect_punct("=")
        return (column, self.literal())

    def delete(self) -> Delete:
        self.expect_keyword("delete")
        self.expect_keyword("from")
        return Delete(self.ident("a table name"), self.predicate())

    def select(self) -> Select:
        self.expect_keyword("select")
        if self.peek().kind == "punct" and self.peek().text == "*":
            self.advance()
            projection = None
        else:
            cols = [self.ident("a column name or *")]
            while self.peek().text == ",":
                self.advance()
                cols.append(self.ident("a column name"))
            projection = tuple(cols)
        self.expect_keyword("from")
        return Select(self.ident("a table name"), projection, self.predicate())


def parse(source: str) -> Statement:
    """Parse one statement; trailing input is an error."""
    parser = _Parser(source)
    stmt = parser.statement()
    tok = parser.peek()
    if tok.kind != "end":
        raise ParseError(tok.offset, "end of statement", repr(tok.text))
    return stmt


# --- renderer --------------------------------------------------------------

def render_value(value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, int):
        return str(value)
    return "'" + value.replace("'", "''") + "'"


def _render_predicate(predicate: tuple) -> str:
    if not predicate:
        return ""
    parts = [f"{c.column} {c.op} {render_value(c.value)}" for c in predicate]
    return " WHERE " + " AND ".join(parts)


def render(stmt: Statement) -> str:
    """Canonical single-line text; round-trips through parse()."""
    if isinstance(stmt, Insert):
        cols = ", ".join(stmt.columns)
        vals = ", ".join(render_value(v) for v in stmt.values)
        return f"INSERT INTO {stmt.table} ({cols}) VALUES ({vals})"
    if isinstance(stmt, Update):
        sets = ", ".join(f"{c} = {render_value(v)}" for c, v in stmt.assignments)
        return f"UPDATE {stmt.table} SET {sets}" + _render_predicate(stmt.predicate)
    if isinstance(stmt, Delete):
        return f"DELETE FROM {stmt.table}" + _render_predicate(stmt.predicate)
    if isinstance(stmt, Select):
        proj = "*" if stmt.projection is None else ", ".join(stmt.projection)
        return f"SELECT {proj} FROM {stmt.table}" + _render_predicate(stmt.predicate)
    raise TypeError(f"not a statement: {stmt!r}")
