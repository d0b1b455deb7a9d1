"""Shadow overlay tables and the session-manager statement router.

While a new site is being instantiated, client DML against a group's tables
is not applied to the base tables at all. Instead each statement is recorded
in a per-table shadow list as row-level records carrying an operation marker
and a monotonically increasing sequence number (the analog of the two extra
bookkeeping fields on a temporally shadowed table). SELECTs see the merge of
the base table and the shadow records, so clients cannot tell the overlay is
there. When the new site is in place the shadow records are compressed to
one effective statement per primary key and replayed through the ordinary
replicated path, which stamps fresh versions and propagates everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import (
    DuplicateKey,
    GroupQuiesced,
    OverlayAlreadyActive,
    OverlayError,
    UnknownColumn,
    UnknownGroup,
)
from .minisql import Comparison, Delete, Insert, Select, Statement, Update
from .relmodel import QUIESCED, Table, eval_predicate

from .engine import (
    DmlResult,
    SelectResult,
    complete_insert_values,
    validate_assignments,
)

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Site

INSERT = "insert"
UPDATE = "update"
DELETE = "delete"


@dataclass(frozen=True)
class OverlayRecord:
    """One buffered mutation: (marker, seq) mirror the shadow bookkeeping fields."""

    seq: int
    op_marker: str  # insert | update | delete
    pk: object
    after_values: dict | None  # full row image; None for deletes


@dataclass
class OverlaySet:
    """All shadow state one site keeps for one group while an overlay is active."""

    site_id: str
    group_name: str
    records: dict = field(default_factory=dict)  # table name -> [OverlayRecord]
    active: bool = True
    _seq: int = 0

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    # --- merge ---------------------------------------------------------------

    def effective(self, table_name: str) -> dict:
        """Last record per pk, in record order: pk -> OverlayRecord."""
        out: dict = {}
        for record in self.records.get(table_name, ()):
            out[record.pk] = record
        return out

    def merged_rows(self, base: Table, table_name: str) -> dict:
        """The view clients see: base rows folded with the shadow records."""
        rows = {pk: row.values for pk, row in base.rows.items()}
        for pk, record in self.effective(table_name).items():
            if record.op_marker == DELETE:
                rows.pop(pk, None)
            else:
                rows[pk] = record.after_values
        return rows

    def merged_select(self, site: "Site", stmt: Select) -> SelectResult:
        base = site.tables[stmt.table]
        schema = base.schema
        if stmt.projection is None:
            cols = schema.column_names
        else:
            for col in stmt.projection:
                if col not in schema.column_names:
                    raise UnknownColumn(f"{schema.name} has no column {col!r}")
            cols = tuple(stmt.projection)
        merged = self.merged_rows(base, stmt.table)
        rows = [
            tuple(merged[pk][c] for c in cols)
            for pk in sorted(merged)
            if eval_predicate(schema, merged[pk], stmt.predicate)
        ]
        return SelectResult(cols, rows)

    # --- buffering -------------------------------------------------------------

    def route(self, site: "Site", stmt: Statement) -> DmlResult:
        """Buffer one DML statement against the merged view.

        The base table is never touched and no version is stamped; both
        happen at finalize time when the records replay through the normal
        replicated path.
        """
        if not self.active:
            raise OverlayError(f"overlay for {self.group_name} is not active")
        base = site.tables[stmt.table]
        schema = base.schema
        records = self.records.setdefault(stmt.table, [])

        if isinstance(stmt, Insert):
            values = complete_insert_values(schema, stmt)
            pk = values[schema.pk_column]
            if pk in self.merged_rows(base, stmt.table):
                raise DuplicateKey(f"{schema.name}: pk {pk!r} already present")
            records.append(OverlayRecord(self.next_seq(), INSERT, pk, values))
            return DmlResult(1)

        if isinstance(stmt, Update):
            validate_assignments(schema, stmt.assignments)
            merged = self.merged_rows(base, stmt.table)
            matched = [
                pk for pk in sorted(merged)
                if eval_predicate(schema, merged[pk], stmt.predicate)
            ]
            for pk in matched:
                after = dict(merged[pk])
                for col, value in stmt.assignments:
                    after[col] = value
                records.append(OverlayRecord(self.next_seq(), UPDATE, pk, after))
            return DmlResult(len(matched))

        if isinstance(stmt, Delete):
            merged = self.merged_rows(base, stmt.table)
            matched = [
                pk for pk in sorted(merged)
                if eval_predicate(schema, merged[pk], stmt.predicate)
            ]
            for pk in matched:
                records.append(OverlayRecord(self.next_seq(), DELETE, pk, None))
            return DmlResult(len(matched))

        raise TypeError(f"not a DML statement: {stmt!r}")


def begin_overlay(site: "Site", group_name: str) -> OverlaySet:
    """Activate the session manager for a group: one empty shadow list per table."""
    group = site.groups.get(group_name)
    if group is None:
        raise UnknownGroup(f"{site.site_id} has no group {group_name!r}")
    existing = site.overlays.get(group_name)
    if existing is not None and existing.active:
        raise OverlayAlreadyActive(
            f"{site.site_id}: overlay for {group_name!r} already active"
        )
    overlay = OverlaySet(site.site_id, group_name)
    for name in group.table_names:
        overlay.records[name] = []
    site.overlays[group_name] = overlay
    return overlay


def finalize_overlay(site: "Site", group_name: str, now: int) -> list:
    """Replay the buffered work through the ordinary replicated path.

    Records are compressed to at most one statement per (table, pk): the last
    shadow record decides. Replay goes through execute_local so each statement
    stamps fresh versions and propagates to every member, including the newly
    added one. Returns the replayed statements in execution order.
    """
    overlay = site.overlays.get(group_name)
    if overlay is None or not overlay.active:
        raise OverlayError(f"{site.site_id}: no active overlay for {group_name!r}")
    group = site.groups[group_name]
    if group.state == QUIESCED:
        raise GroupQuiesced(
            f"{site.site_id}: cannot finalize {group_name!r} while quiesced"
        )
    overlay.active = False  # replay must reach the base path, not the router

    statements: list = []
    for table_name in sorted(overlay.records):
        base = site.tables[table_name]
        schema = base.schema
        pk_col = schema.pk_column
        effective = overlay.effective(table_name)
        for pk in sorted(effective):
            record = effective[pk]
            in_base = pk in base.rows
            if record.op_marker == DELETE:
                if in_base:
                    statements.append(
                        Delete(table_name, (Comparison(pk_col, "=", pk),))
                    )
                # A row inserted and then deleted inside the overlay never
                # existed as far as the group is concerned.
            elif in_base:
                assignments = tuple(
                    (col, record.after_values[col])
                    for col in schema.column_names
                    if col != pk_col
                )
                statements.append(
                    Update(table_name, assignments, (Comparison(pk_col, "=", pk),))
                )
            else:
                statements.append(
                    Insert(
                        table_name,
                        schema.column_names,
                        tuple(record.after_values[c] for c in schema.column_names),
                    )
                )
    for stmt in statements:
        site.execute_local(stmt, now)
    overlay.records = {}
    return statements
