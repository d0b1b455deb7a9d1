"""Replication engine: sites, deferred transactions, conflicts, reconcile.

Each site owns full copies of its group tables. Local DML is applied
immediately, captured as a deferred transaction of row-level operations with
full after-images and old-version stamps, and queued FIFO per destination.
Remote application is all-or-nothing: the first conflicting operation rolls
the whole transaction back and parks it in the site's error queue (the
analog of a deferred-error view), where periodic reconcile passes retry it.

Conflict kinds on an old-version mismatch:

* the incoming op's old version is *older* than the local row: a concurrent
  write won the race locally -> Update conflict, resolved at reconcile by
  version order (highest RowVersion wins);
* the incoming op's old version is *newer* than the local row: this site has
  not yet seen a prerequisite write (out-of-order arrival after a partition)
  -> Ordering conflict, retried until the missing transaction lands.

Inserts hitting an existing pk are Uniqueness conflicts; updates or deletes
of an absent row are Delete conflicts. Reconcile keeps per-table tombstone
stamps so that delete/update races resolve to the version-order winner
instead of wedging the queue.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    DmlRejectedQuiesced,
    PrimaryKeyAssignment,
    SchemaMismatch,
    UnknownColumn,
    UnknownTable,
    UnknownTxn,
)
from .minisql import Delete, Insert, Select, Statement, Update
from .relmodel import (
    QUIESCED,
    MasterGroup,
    RowVersion,
    Table,
    TableSchema,
    check_value,
)

UPDATE = "update"
UNIQUENESS = "uniqueness"
DELETE = "delete"
ORDERING = "ordering"

CONFLICT_KINDS = (UPDATE, UNIQUENESS, DELETE, ORDERING)


@dataclass
class InsertOp:
    table: str
    values: dict  # full row image
    new_version: RowVersion


@dataclass
class UpdateOp:
    table: str
    pk: object
    after_values: dict  # full row image after the update
    old_version: RowVersion
    new_version: RowVersion


@dataclass
class DeleteOp:
    table: str
    pk: object
    old_version: RowVersion
    # Deletes are writes too: the stamp lets delete/update races resolve by
    # version order during reconcile.
    delete_version: RowVersion


@dataclass
class DeferredTxn:
    """One client statement captured for propagation."""

    txn_id: tuple  # (origin_site, seq)
    origin_site: str
    origin_tick: int
    ops: list


@dataclass
class ErrorEntry:
    """A conflicted remote transaction parked for reconciliation."""

    txn: DeferredTxn
    conflict: str
    failed_op_index: int
    recorded_tick: int


@dataclass
class SelectResult:
    columns: tuple
    rows: list


@dataclass
class DmlResult:
    rows_affected: int
    txn: DeferredTxn | None = None


@dataclass
class ApplyResult:
    applied: bool
    conflict: str | None = None
    failed_op_index: int | None = None


@dataclass
class ReconcileStats:
    resolved: int
    remaining: int


class Site:
    """One master database: tables, group views, queues, error state."""

    def __init__(self, site_id: str) -> None:
        self.site_id = site_id
        self.tables: dict = {}
        self.groups: dict = {}
        self.outbound: dict = {}  # dest site_id -> list[DeferredTxn]
        self.error_queue: list = []
        self.tombstones: dict = {}  # table -> {pk: RowVersion}
        self.overlays: dict = {}  # group_name -> active overlay router
        self.holding = False
        self.held: list = []  # txns buffered while instantiating
        self._version_counter = 0
        self._txn_counter = 0

    # --- plumbing ---------------------------------------------------------

    def add_table(self, schema: TableSchema) -> Table:
        table = Table(schema)
        self.tables[schema.name] = table
        return table

    def next_version(self, now: int) -> RowVersion:
        self._version_counter += 1
        return RowVersion(now, self.site_id, self._version_counter)

    def group_of(self, table_name: str) -> MasterGroup | None:
        for group in self.groups.values():
            if table_name in group.table_names:
                return group
        return None

    def _table(self, name: str) -> Table:
        table = self.tables.get(name)
        if table is None:
            raise UnknownTable(f"{self.site_id} has no table {name!r}")
        return table

    def _tombstone(self, table: str, pk):
        return self.tombstones.get(table, {}).get(pk)

    def _set_tombstone(self, table: str, pk, version: RowVersion) -> None:
        stones = self.tombstones.setdefault(table, {})
        old = stones.get(pk)
        if old is None or version > old:
            stones[pk] = version

    # --- local execution ---------------------------------------------------

    def execute_local(self, stmt: Statement, now: int):
        """Run one client statement at this site.

        SELECTs always succeed. DML on a quiesced group raises
        DmlRejectedQuiesced unless an overlay router is absorbing writes for
        that group, in which case the statement is buffered instead of
        applied. DML on a normal group table applies locally and queues a
        deferred transaction to every other member.
        """
        table = self._table(stmt.table)
        group = self.group_of(stmt.table)
        overlay = self.overlays.get(group.group_name) if group else None
        if overlay is not None and overlay.active:
            if isinstance(stmt, Select):
                return overlay.merged_select(self, stmt)
            return overlay.route(self, stmt)

        if isinstance(stmt, Select):
            cols = stmt.projection if stmt.projection is not None else table.schema.column_names
            return SelectResult(tuple(cols), table.select(stmt.projection, stmt.predicate))

        if group is not None and group.state == QUIESCED:
            raise DmlRejectedQuiesced(
                f"{self.site_id}: group {group.group_name} is quiesced"
            )

        ops: list = []
        if isinstance(stmt, Insert):
            values = complete_insert_values(table.schema, stmt)
            version = self.next_version(now)
            table.insert(values, version)
            ops.append(InsertOp(stmt.table, values, version))
            affected = 1
        elif isinstance(stmt, Update):
            validate_assignments(table.schema, stmt.assignments)
            pks = table.matching_pks(stmt.predicate)
            for pk in pks:
                row = table.rows[pk]
                old_version = row.version
                new_version = self.next_version(now)
                table.update(pk, dict(stmt.assignments), new_version)
                # row.values now holds the after-image.
                ops.append(
                    UpdateOp(stmt.table, pk, dict(row.values), old_version, new_version)
                )
            affected = len(pks)
        elif isinstance(stmt, Delete):
            pks = table.matching_pks(stmt.predicate)
            for pk in pks:
                old_version = table.rows[pk].version
                delete_version = self.next_version(now)
                table.delete(pk)
                self._set_tombstone(stmt.table, pk, delete_version)
                ops.append(DeleteOp(stmt.table, pk, old_version, delete_version))
            affected = len(pks)
        else:
            raise TypeError(f"not a statement: {stmt!r}")

        txn = None
        if ops and group is not None:
            self._txn_counter += 1
            txn = DeferredTxn((self.site_id, self._txn_counter), self.site_id, now, ops)
            for dest in sorted(group.members - {self.site_id}):
                self.outbound.setdefault(dest, []).append(txn)
        return DmlResult(affected, txn)

    def drain_outbound(self) -> dict:
        """Remove and return queued transactions, per destination."""
        batches = {dest: txns for dest, txns in sorted(self.outbound.items()) if txns}
        self.outbound = {}
        return batches

    # --- remote application -------------------------------------------------

    def apply_remote(self, txn: DeferredTxn, now: int) -> ApplyResult:
        """Apply a deferred transaction, all-or-nothing.

        On the first conflicting operation every already-applied op is rolled
        back, an ErrorEntry is queued, and the conflict kind is returned.
        """
        saved = self._save_tables(txn)
        for index, op in enumerate(txn.ops):
            conflict = self._apply_op(op)
            if conflict is not None:
                self._restore_tables(saved)
                self.error_queue.append(ErrorEntry(txn, conflict, index, now))
                return ApplyResult(False, conflict, index)
        return ApplyResult(True)

    def _save_tables(self, txn: DeferredTxn) -> dict:
        names = []
        for op in txn.ops:
            if op.table not in names:
                names.append(op.table)
        return {
            name: (self._table(name).snapshot(), dict(self.tombstones.get(name, {})))
            for name in names
        }

    def _restore_tables(self, saved: dict) -> None:
        for name, (table, stones) in saved.items():
            self.tables[name] = table
            self.tombstones[name] = stones

    def _apply_op(self, op) -> str | None:
        """First-arrival semantics; returns a conflict kind or None."""
        table = self._table(op.table)
        if isinstance(op, InsertOp):
            pk = op.values[table.schema.pk_column]
            if pk in table.rows:
                return UNIQUENESS
            tomb = self._tombstone(op.table, pk)
            if tomb is not None and op.new_version < tomb:
                return None  # dead write: a later delete already covered it
            table.insert(op.values, op.new_version)
            return None
        if isinstance(op, UpdateOp):
            row = table.get(op.pk)
            if row is None:
                return DELETE
            if row.version != op.old_version:
                return ORDERING if op.old_version > row.version else UPDATE
            table.put(op.after_values, op.new_version)
            return None
        if isinstance(op, DeleteOp):
            row = table.get(op.pk)
            if row is None:
                return DELETE
            if row.version != op.old_version:
                return ORDERING if op.old_version > row.version else UPDATE
            table.delete(op.pk)
            self._set_tombstone(op.table, op.pk, op.delete_version)
            return None
        raise TypeError(f"not a row op: {op!r}")

    # --- reconciliation ------------------------------------------------------

    def select_error_queue(self) -> list:
        """Queued conflict entries in arrival order (the deferred-error view)."""
        return list(self.error_queue)

    def reconcile(self, now: int) -> ReconcileStats:
        """One pass over the error queue in arrival order.

        Entries whose transaction now applies (or resolves by version order)
        leave the queue; the rest stay for the next pass.
        """
        resolved = 0
        remaining = []
        for entry in self.error_queue:
            if self._try_resolve(entry.txn):
                resolved += 1
            else:
                remaining.append(entry)
        self.error_queue = remaining
        return ReconcileStats(resolved, len(self.error_queue))

    def execute_error(self, txn_id: tuple, now: int) -> bool:
        """Re-execute one queued transaction by id; True when it resolved."""
        for entry in self.error_queue:
            if entry.txn.txn_id == txn_id:
                if self._try_resolve(entry.txn):
                    self.error_queue.remove(entry)
                    return True
                return False
        raise UnknownTxn(f"{self.site_id}: no queued txn {txn_id!r}")

    def _try_resolve(self, txn: DeferredTxn) -> bool:
        """Retry a conflicted transaction with version-order resolution.

        Still all-or-nothing: if any op stays blocked (missing prerequisite
        write, or an absent row with no local tombstone to rule on) the
        attempt rolls back and the entry persists.
        """
        saved = self._save_tables(txn)
        for op in txn.ops:
            if not self._resolve_op(op):
                self._restore_tables(saved)
                return False
        return True

    def _resolve_op(self, op) -> bool:
        """Apply, discard (version-order loss) or block one retried op."""
        table = self._table(op.table)
        if isinstance(op, InsertOp):
            pk = op.values[table.schema.pk_column]
            existing = table.get(pk)
            if existing is not None:
                # Concurrent same-pk inserts settle like update races:
                # the higher version is installed, the lower discarded.
                if op.new_version > existing.version:
                    table.put(op.values, op.new_version)
                return True
            tomb = self._tombstone(op.table, pk)
            if tomb is not None and op.new_version < tomb:
                return True  # deleted after it was written: dead
            table.insert(op.values, op.new_version)
            return True
        if isinstance(op, UpdateOp):
            row = table.get(op.pk)
            if row is None:
                tomb = self._tombstone(op.table, op.pk)
                if tomb is None:
                    return False  # prerequisite insert has not arrived yet
                if op.new_version > tomb:
                    table.insert(op.after_values, op.new_version)
                return True
            if row.version == op.old_version:
                table.put(op.after_values, op.new_version)
                return True
            if op.old_version > row.version:
                return False  # ordering: prerequisite write still missing
            if op.new_version > row.version:
                table.put(op.after_values, op.new_version)
            return True
        if isinstance(op, DeleteOp):
            row = table.get(op.pk)
            if row is None:
                # Target already gone: the delete is satisfied.
                self._set_tombstone(op.table, op.pk, op.delete_version)
                return True
            if row.version == op.old_version:
                table.delete(op.pk)
                self._set_tombstone(op.table, op.pk, op.delete_version)
                return True
            if op.old_version > row.version:
                return False
            if op.delete_version > row.version:
                table.delete(op.pk)
                self._set_tombstone(op.table, op.pk, op.delete_version)
            return True
        raise TypeError(f"not a row op: {op!r}")


# --- statement helpers shared with the overlay router -----------------------

def complete_insert_values(schema: TableSchema, stmt: Insert) -> dict:
    """Expand an insert's column list to a full row image (missing -> Null)."""
    seen = set()
    for col in stmt.columns:
        if col not in schema.column_names:
            raise UnknownColumn(f"{schema.name} has no column {col!r}")
        if col in seen:
            raise SchemaMismatch(f"{schema.name}: column {col!r} listed twice")
        seen.add(col)
    if schema.pk_column not in seen:
        raise SchemaMismatch(f"{schema.name}: insert must provide pk {schema.pk_column!r}")
    values = {col: None for col in schema.column_names}
    for col, value in zip(stmt.columns, stmt.values):
        check_value(schema, col, value)
        values[col] = value
    return values


def validate_assignments(schema: TableSchema, assignments) -> None:
    for col, value in assignments:
        if col not in schema.column_names:
            raise UnknownColumn(f"{schema.name} has no column {col!r}")
        if col == schema.pk_column:
            raise PrimaryKeyAssignment(f"{schema.name}: cannot assign pk {col!r}")
        check_value(schema, col, value)
