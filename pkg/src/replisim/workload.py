"""Seeded client workload generation.

A workload is a deterministic function of its spec: the same seed always
yields the same statement texts at the same ticks on the same sites. Inserts
draw primary keys from a per-site arithmetic progression above the seeded
data range, so two sites never race to insert the same pk (uniqueness
conflicts persist by design and would block convergence); updates, deletes
and selects target the shared range unless ``disjoint_pks`` confines every
site to its own slice, which makes the run conflict-free.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import minisql
from .minisql import Comparison, Delete, Insert, Select, Update
from .relmodel import INT, TableSchema

DEFAULT_OPS = {"insert": 2, "update": 4, "delete": 1, "select": 3}


@dataclass
class WorkloadSpec:
    """Knobs for one generated workload."""

    seed: int = 1
    sites: tuple = ()
    tables: tuple = ()  # TableSchema objects
    rate_per_100: int = 20  # statements per site per 100 ticks
    start_tick: int = 0
    stop_tick: int = 400
    pk_low: int = 1
    pk_high: int = 40
    ops: dict = field(default_factory=lambda: dict(DEFAULT_OPS))
    disjoint_pks: bool = False
    null_chance: float = 0.05


@dataclass(frozen=True)
class WorkloadItem:
    tick: int
    site_id: str
    text: str


def _weighted(rng: random.Random, weights: dict) -> str:
    choices = sorted(weights)
    return rng.choices(choices, weights=[weights[c] for c in choices], k=1)[0]


def _value_for(rng: random.Random, kind: str, null_chance: float):
    if null_chance and rng.random() < null_chance:
        return None
    if kind == INT:
        return rng.randrange(0, 100_000)
    return f"w{rng.randrange(0, 100_000)}"


class _SiteStream:
    """Per-site statement source; owns the insert pk progression."""

    def __init__(self, spec: WorkloadSpec, site_index: int, rng: random.Random) -> None:
        self.spec = spec
        self.site_index = site_index
        self.rng = rng
        self.nsites = len(spec.sites)
        self.insert_base = spec.pk_high + 1
        self.inserted = 0
        if spec.disjoint_pks:
            # Contiguous slice of the shared range, one per site.
            span = max(1, (spec.pk_high - spec.pk_low + 1) // self.nsites)
            self.slice_low = spec.pk_low + site_index * span
            self.slice_high = min(spec.pk_high, self.slice_low + span - 1)

    def _target_pk(self) -> int:
        if self.spec.disjoint_pks:
            return self.rng.randint(self.slice_low, self.slice_high)
        return self.rng.randint(self.spec.pk_low, self.spec.pk_high)

    def _next_insert_pk(self) -> int:
        pk = self.insert_base + self.site_index + self.inserted * self.nsites
        self.inserted += 1
        return pk

    def _schema(self) -> TableSchema:
        tables = self.spec.tables
        return tables[self.rng.randrange(len(tables))]

    def _predicate(self, schema: TableSchema) -> tuple:
        # Non-pk predicates can match rows outside this site's slice, so
        # disjoint mode sticks to pk lookups to keep its no-conflict promise.
        if self.spec.disjoint_pks or self.rng.random() < 0.8:
            return (Comparison(schema.pk_column, "=", self._target_pk()),)
        cols = [c for c, _ in schema.columns if c != schema.pk_column]
        if not cols:
            return (Comparison(schema.pk_column, "=", self._target_pk()),)
        col = cols[self.rng.randrange(len(cols))]
        kind = schema.kind_of(col)
        op = self.rng.choice(["=", "!=", "<", "<=", ">", ">="])
        value = _value_for(self.rng, kind, 0.0)
        return (Comparison(col, op, value),)

    def statement(self) -> str:
        schema = self._schema()
        op = _weighted(self.rng, self.spec.ops)
        if op == "insert":
            values = []
            for col, kind in schema.columns:
                if col == schema.pk_column:
                    values.append(self._next_insert_pk())
                else:
                    values.append(_value_for(self.rng, kind, self.spec.null_chance))
            stmt = Insert(schema.name, schema.column_names, tuple(values))
        elif op == "update":
            non_pk = [(c, k) for c, k in schema.columns if c != schema.pk_column]
            if not non_pk:
                return self.statement()
            count = 1 if len(non_pk) == 1 else self.rng.randint(1, 2)
            picked = sorted(self.rng.sample(range(len(non_pk)), count))
            assignments = tuple(
                (non_pk[i][0], _value_for(self.rng, non_pk[i][1], self.spec.null_chance))
                for i in picked
            )
            stmt = Update(schema.name, assignments, self._predicate(schema))
        elif op == "delete":
            stmt = Delete(
                schema.name, (Comparison(schema.pk_column, "=", self._target_pk()),)
            )
        else:
            if self.rng.random() < 0.5:
                projection = None
            else:
                count = self.rng.randint(1, len(schema.columns))
                picked = sorted(self.rng.sample(range(len(schema.columns)), count))
                projection = tuple(schema.column_names[i] for i in picked)
            stmt = Select(schema.name, projection, self._predicate(schema))
        return minisql.render(stmt)


def generate_workload(spec: WorkloadSpec) -> list:
    """Expand a spec into (tick, site, statement text) items, ready to schedule.

    Items are ordered by (tick, site, generation order); sites are processed
    in sorted order with a single seeded stream, so output is reproducible
    byte for byte.
    """
    if not spec.sites or not spec.tables:
        return []
    rng = random.Random(spec.seed)
    span = max(0, spec.stop_tick - spec.start_tick)
    per_site = span * spec.rate_per_100 // 100
    items: list = []
    for index, site_id in enumerate(sorted(spec.sites)):
        stream = _SiteStream(spec, index, rng)
        ticks = sorted(rng.randrange(spec.start_tick, spec.stop_tick) for _ in range(per_site))
        for tick in ticks:
            items.append(WorkloadItem(tick, site_id, stream.statement()))
    items.sort(key=lambda item: (item.tick, item.site_id))
    return items
