"""Randomized overlay verification against a direct-application oracle.

For each seed this builds a random schema set and base data, then feeds one
random statement stream to two independent routes:

* the overlay route: a single-member site with the session manager active,
  exactly as during a zero-downtime addition;
* the oracle route: plain tables mutated directly with the raw primitives.

Transparency requires every statement outcome (rows affected, select rows,
raised error) to match between the routes at every prefix; replay
equivalence requires the base tables after finalization to equal the oracle
tables exactly. Any mismatch is reported with the index of the first
offending statement.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import minisql
from .engine import (
    DmlResult,
    SelectResult,
    Site,
    complete_insert_values,
    validate_assignments,
)
from .errors import ReplicationError
from .minisql import Comparison, Delete, Insert, Select, Update
from .overlay import OverlaySet, finalize_overlay
from .relmodel import (
    INT,
    TEXT,
    MasterGroup,
    RowVersion,
    Table,
    TableSchema,
    table_equal,
)

GROUP = "g"


@dataclass
class VerifyOutcome:
    seed: int
    ok: bool
    statements: int
    failure_index: int | None = None
    detail: str = ""

    def line(self) -> str:
        if self.ok:
            return f"seed {self.seed}: ok ({self.statements} statements)"
        return f"seed {self.seed}: FAIL at statement {self.failure_index}: {self.detail}"


def random_schema(rng: random.Random, index: int) -> TableSchema:
    columns = [("id", INT)]
    for j in range(rng.randint(1, 4)):
        columns.append((f"c{j}", rng.choice([INT, TEXT])))
    return TableSchema(f"t{index}", tuple(columns), "id")


def _random_value(rng: random.Random, kind: str):
    if rng.random() < 0.06:
        return None
    if kind == INT:
        return rng.randrange(0, 1000)
    return rng.choice(["alpha", "beta", f"w{rng.randrange(1000)}", "it''s"])


class _Oracle:
    """Direct single-site execution using only the raw table primitives."""

    def __init__(self) -> None:
        self.tables: dict = {}
        self._counter = 0

    def _version(self) -> RowVersion:
        self._counter += 1
        return RowVersion(0, "oracle", self._counter)

    def execute(self, stmt):
        table = self.tables[stmt.table]
        schema = table.schema
        if isinstance(stmt, Select):
            cols = stmt.projection if stmt.projection is not None else schema.column_names
            return SelectResult(tuple(cols), table.select(stmt.projection, stmt.predicate))
        if isinstance(stmt, Insert):
            values = complete_insert_values(schema, stmt)
            table.insert(values, self._version())
            return DmlResult(1)
        if isinstance(stmt, Update):
            validate_assignments(schema, stmt.assignments)
            pks = table.matching_pks(stmt.predicate)
            for pk in pks:
                table.update(pk, dict(stmt.assignments), self._version())
            return DmlResult(len(pks))
        if isinstance(stmt, Delete):
            pks = table.matching_pks(stmt.predicate)
            for pk in pks:
                table.delete(pk)
            return DmlResult(len(pks))
        raise TypeError(f"not a statement: {stmt!r}")


def _random_statement(rng: random.Random, schemas: list, live_pks: dict, fresh: list):
    schema = schemas[rng.randrange(len(schemas))]
    pks = live_pks[schema.name]
    roll = rng.random()

    def target_pk() -> int:
        if pks and rng.random() < 0.7:
            return rng.choice(sorted(pks))
        return rng.randrange(0, 2000)

    def predicate() -> tuple:
        if rng.random() < 0.7:
            return (Comparison("id", "=", target_pk()),)
        col, kind = schema.columns[rng.randrange(1, len(schema.columns))]
        op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
        value = _random_value(rng, kind)
        while value is None:
            value = _random_value(rng, kind)
        return (Comparison(col, op, value),)

    if roll < 0.3:
        # Inserts: mostly fresh pks, sometimes a deliberate duplicate.
        if pks and rng.random() < 0.2:
            pk = rng.choice(sorted(pks))
        else:
            pk = fresh[0]
            fresh[0] += 1
        columns, values = ["id"], [pk]
        for col, kind in schema.columns[1:]:
            if rng.random() < 0.85:
                columns.append(col)
                values.append(_random_value(rng, kind))
        return Insert(schema.name, tuple(columns), tuple(values))
    if roll < 0.55:
        non_pk = schema.columns[1:]
        count = rng.randint(1, len(non_pk))
        picked = sorted(rng.sample(range(len(non_pk)), count))
        assignments = tuple(
            (non_pk[i][0], _random_value(rng, non_pk[i][1])) for i in picked
        )
        return Update(schema.name, assignments, predicate())
    if roll < 0.7:
        return Delete(schema.name, predicate())
    if rng.random() < 0.4:
        projection = None
    else:
        count = rng.randint(1, len(schema.columns))
        picked = sorted(rng.sample(range(len(schema.columns)), count))
        projection = tuple(schema.column_names[i] for i in picked)
    return Select(schema.name, projection, predicate() if rng.random() < 0.8 else ())


def _outcome_mismatch(got, expected) -> str | None:
    if isinstance(expected, Exception):
        if not isinstance(got, Exception):
            return f"oracle raised {type(expected).__name__}, overlay returned {got!r}"
        if type(got) is not type(expected):
            return f"oracle raised {type(expected).__name__}, overlay raised {type(got).__name__}"
        return None
    if isinstance(got, Exception):
        return f"overlay raised {type(got).__name__}, oracle returned {expected!r}"
    if isinstance(expected, DmlResult):
        if got.rows_affected != expected.rows_affected:
            return f"rows_affected {got.rows_affected} != {expected.rows_affected}"
        return None
    if got.columns != expected.columns or got.rows != expected.rows:
        return f"select returned {got.rows!r}, oracle {expected.rows!r}"
    return None


def run_verification(
    seed: int,
    statements: int = 200,
    overlay_cls: type = OverlaySet,
) -> VerifyOutcome:
    """One seeded transparency + replay-equivalence check.

    ``overlay_cls`` exists so tests can inject a deliberately broken router
    and watch the harness catch it.
    """
    rng = random.Random(seed)
    schemas = [random_schema(rng, i) for i in range(rng.randint(1, 5))]

    site = Site("a")
    oracle = _Oracle()
    live_pks: dict = {}
    fresh = [10_000]
    for schema in schemas:
        site.add_table(schema)
        oracle.tables[schema.name] = Table(schema)
        live_pks[schema.name] = set()
        for pk in range(1, rng.randint(3, 12)):
            values = {"id": pk}
            for col, kind in schema.columns[1:]:
                values[col] = _random_value(rng, kind)
            version = RowVersion(0, "seed", pk)
            site.tables[schema.name].insert(values, version)
            oracle.tables[schema.name].insert(values, version)
            live_pks[schema.name].add(pk)
    site.groups[GROUP] = MasterGroup(GROUP, tuple(s.name for s in schemas), {"a"})
    overlay = overlay_cls("a", GROUP)
    for schema in schemas:
        overlay.records[schema.name] = []
    site.overlays[GROUP] = overlay

    for index in range(statements):
        stmt = _random_statement(rng, schemas, live_pks, fresh)
        # Round-trip through text, as a client would submit it.
        stmt = minisql.parse(minisql.render(stmt))
        try:
            expected = oracle.execute(stmt)
        except ReplicationError as exc:
            expected = exc
        try:
            got = site.execute_local(stmt, index)
        except ReplicationError as exc:
            got = exc
        problem = _outcome_mismatch(got, expected)
        if problem is None:
            # Full-view transparency at every prefix, not just on selects.
            for schema in schemas:
                view = site.execute_local(Select(schema.name, None, ()), index)
                direct = oracle.execute(Select(schema.name, None, ()))
                if view.rows != direct.rows:
                    problem = f"merged view of {schema.name} diverged: {view.rows!r} != {direct.rows!r}"
                    break
        if problem is not None:
            return VerifyOutcome(
                seed, False, statements, index, f"{minisql.render(stmt)}: {problem}"
            )
        live_pks_update(stmt, expected, oracle, live_pks)

    finalize_overlay(site, GROUP, now=statements)
    for schema in schemas:
        if not table_equal(site.tables[schema.name], oracle.tables[schema.name]):
            return VerifyOutcome(
                seed, False, statements, statements,
                f"post-finalize {schema.name} differs from direct execution",
            )
    return VerifyOutcome(seed, True, statements)


def live_pks_update(stmt, outcome, oracle: _Oracle, live_pks: dict) -> None:
    """Refresh the generator's notion of which pks exist (oracle is truth)."""
    if isinstance(outcome, Exception) or isinstance(stmt, Select):
        return
    live_pks[stmt.table] = set(oracle.tables[stmt.table].rows)


def run_many(seeds: int, statements: int = 200) -> list:
    return [run_verification(seed, statements) for seed in range(1, seeds + 1)]
