"""In-memory relational core: typed tables keyed by primary key.

This layer knows nothing about replication. It provides the raw (non
replicated) mutation primitives that the engine, the overlay router and the
instantiation procedures build on, plus value/version semantics:

* values are Integer, Text or Null (plain ``int``/``str``/``None``);
* every row carries a ``RowVersion`` stamp used for conflict detection;
* predicate comparisons never coerce across the Integer/Text boundary, and
  any comparison involving Null is false.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

from .errors import (
    DuplicateKey,
    PrimaryKeyAssignment,
    RowMissing,
    SchemaMismatch,
    TypeMismatch,
    UnknownColumn,
)

if TYPE_CHECKING:  # pragma: no cover - import only for annotations
    from .minisql import Comparison

# A value is one of: Integer (int), Text (str), Null (None).
Value = int | str | None

INT = "int"
TEXT = "text"

NORMAL = "normal"
QUIESCED = "quiesced"


def value_kind(value) -> str:
    """Classify a value as 'int', 'text' or 'null'."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        # bool is an int subclass; reject it so workloads stay two-typed.
        raise TypeMismatch(f"unsupported value {value!r}")
    if isinstance(value, int):
        return INT
    if isinstance(value, str):
        return TEXT
    raise TypeMismatch(f"unsupported value {value!r}")


@dataclass(frozen=True, order=True)
class RowVersion:
    """Write stamp; total order is (stamp_tick, origin_site, counter)."""

    stamp_tick: int
    origin_site: str
    counter: int


@dataclass
class Row:
    """One stored row: a full column->value map plus its version stamp."""

    values: dict
    version: RowVersion

    def copy(self) -> "Row":
        return Row(dict(self.values), self.version)


@dataclass(frozen=True)
class TableSchema:
    """Column layout of a table.

    ``columns`` is an ordered (name, kind) tuple; ``pk_column`` must be one
    of them and must be an Integer column.
    """

    name: str
    columns: tuple
    pk_column: str

    def __post_init__(self) -> None:
        names = [c[0] for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate column in {self.name}: {names}")
        kinds = {c[0]: c[1] for c in self.columns}
        for col, kind in kinds.items():
            if kind not in (INT, TEXT):
                raise SchemaMismatch(f"{self.name}.{col}: unknown kind {kind!r}")
        if self.pk_column not in kinds:
            raise SchemaMismatch(f"{self.name}: pk {self.pk_column!r} not a column")
        if kinds[self.pk_column] != INT:
            raise SchemaMismatch(f"{self.name}: pk {self.pk_column!r} must be int")

    @property
    def column_names(self) -> tuple:
        return tuple(c[0] for c in self.columns)

    def kind_of(self, column: str) -> str:
        for name, kind in self.columns:
            if name == column:
                return kind
        raise UnknownColumn(f"{self.name} has no column {column!r}")


def check_value(schema: TableSchema, column: str, value) -> None:
    """Raise unless ``value`` fits ``column`` (Null fits any non-pk column)."""
    kind = schema.kind_of(column)
    vk = value_kind(value)
    if column == schema.pk_column:
        if vk != INT:
            raise TypeMismatch(f"{schema.name}.{column}: pk needs an integer, got {value!r}")
        return
    if vk != "null" and vk != kind:
        raise TypeMismatch(f"{schema.name}.{column}: expected {kind}, got {value!r}")


def eval_comparison(schema: TableSchema, values: dict, comp: "Comparison") -> bool:
    """Evaluate one comparison against a full row value map.

    Null on either side makes the comparison false. Comparing an Integer
    column with a Text literal (or vice versa) raises TypeMismatch.
    """
    kind = schema.kind_of(comp.column)
    lhs = values[comp.column]
    rhs = comp.value
    rk = value_kind(rhs)
    if rk != "null" and rk != kind:
        raise TypeMismatch(
            f"{schema.name}.{comp.column}: cannot compare {kind} with {rhs!r}"
        )
    if lhs is None or rhs is None:
        return False
    op = comp.op
    if op == "=":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">":
        return lhs > rhs
    if op == ">=":
        return lhs >= rhs
    raise ValueError(f"unknown comparator {op!r}")


def eval_predicate(schema: TableSchema, values: dict, predicate) -> bool:
    """True when every comparison in the conjunction holds (empty = True)."""
    if not predicate:
        return True
    return all(eval_comparison(schema, values, c) for c in predicate)


class Table:
    """Rows stored by primary key, mutated only through the raw primitives."""

    def __init__(self, schema: TableSchema) -> None:
        self.schema = schema
        self.rows: dict = {}

    def __len__(self) -> int:
        return len(self.rows)

    def get(self, pk) -> Row | None:
        return self.rows.get(pk)

    def _complete(self, values: dict) -> dict:
        """Validate a full row image and return it in schema column order."""
        for col in values:
            if col not in self.schema.column_names:
                raise UnknownColumn(f"{self.schema.name} has no column {col!r}")
        out = {}
        for col in self.schema.column_names:
            if col not in values:
                raise SchemaMismatch(f"{self.schema.name}: missing value for {col!r}")
            check_value(self.schema, col, values[col])
            out[col] = values[col]
        return out

    def insert(self, values: dict, version: RowVersion) -> None:
        """Add a complete row; the pk must be free."""
        row_values = self._complete(values)
        pk = row_values[self.schema.pk_column]
        if pk in self.rows:
            raise DuplicateKey(f"{self.schema.name}: pk {pk!r} already present")
        self.rows[pk] = Row(row_values, version)

    def update(self, pk, assignments: dict, version: RowVersion) -> None:
        """Assign columns on an existing row and restamp it."""
        row = self.rows.get(pk)
        if row is None:
            raise RowMissing(f"{self.schema.name}: pk {pk!r} not present")
        for col, value in assignments.items():
            if col == self.schema.pk_column:
                raise PrimaryKeyAssignment(f"{self.schema.name}: cannot assign pk {col!r}")
            check_value(self.schema, col, value)
        for col, value in assignments.items():
            row.values[col] = value
        row.version = version

    def put(self, values: dict, version: RowVersion) -> None:
        """Install a full row image unconditionally (engine internal)."""
        row_values = self._complete(values)
        self.rows[row_values[self.schema.pk_column]] = Row(row_values, version)

    def delete(self, pk) -> None:
        if pk not in self.rows:
            raise RowMissing(f"{self.schema.name}: pk {pk!r} not present")
        del self.rows[pk]

    def select(self, projection: Sequence[str] | None, predicate=None) -> list:
        """Project matching rows, ordered by primary key.

        ``projection`` of None means every column in schema order. Returns a
        list of value tuples.
        """
        if projection is None:
            cols = self.schema.column_names
        else:
            for col in projection:
                if col not in self.schema.column_names:
                    raise UnknownColumn(f"{self.schema.name} has no column {col!r}")
            cols = tuple(projection)
        out = []
        for pk in sorted(self.rows):
            row = self.rows[pk]
            if eval_predicate(self.schema, row.values, predicate):
                out.append(tuple(row.values[c] for c in cols))
        return out

    def matching_pks(self, predicate) -> list:
        """Primary keys of rows satisfying the predicate, ascending."""
        return [
            pk
            for pk in sorted(self.rows)
            if eval_predicate(self.schema, self.rows[pk].values, predicate)
        ]

    def snapshot(self) -> "Table":
        """Independent copy; later raw ops on either side do not leak across."""
        copy = Table(self.schema)
        copy.rows = {pk: row.copy() for pk, row in self.rows.items()}
        return copy


def table_equal(a: Table, b: Table) -> bool:
    """Value equality over pk sets and rows; version stamps are ignored."""
    if a.schema != b.schema:
        raise SchemaMismatch(f"cannot compare {a.schema.name} with {b.schema.name}")
    if a.rows.keys() != b.rows.keys():
        return False
    return all(a.rows[pk].values == b.rows[pk].values for pk in a.rows)


@dataclass
class MasterGroup:
    """One site's view of a replication group: tables, membership, state."""

    group_name: str
    table_names: tuple
    members: set = field(default_factory=set)
    state: str = NORMAL

    def copy(self) -> "MasterGroup":
        return MasterGroup(self.group_name, self.table_names, set(self.members), self.state)
