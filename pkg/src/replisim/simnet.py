"""Deterministic discrete-event network simulator for the replication engine.

Virtual time is an integer tick counter. Events are totally ordered by
(due_tick, sequence number), so a run is a pure function of its inputs: the
same scenario and seed produce byte-identical traces and reports. Links are
directed, with latency and bandwidth; a partition takes a link down for a
window and deliveries that fire while it is down are requeued for the
recovery tick, never dropped.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .engine import DeferredTxn, DeleteOp, DmlResult, InsertOp, Site, UpdateOp
from .errors import DmlRejectedQuiesced, LinkDown, ReplicationError
from .minisql import parse
from .relmodel import Table, table_equal

ROW_HEADER = 16  # serialized per-row fixed cost, bytes
TXN_HEADER = 16  # serialized per-txn and per-op fixed cost, bytes


def serialized_value_size(value) -> int:
    """8 bytes per Integer, 2+len(utf-8) per Text, 1 per Null."""
    if value is None:
        return 1
    if isinstance(value, int):
        return 8
    return 2 + len(value.encode("utf-8"))


def serialized_row_size(values: dict) -> int:
    return ROW_HEADER + sum(serialized_value_size(v) for v in values.values())


def serialized_size(table: Table) -> int:
    """Bytes needed to ship a whole table."""
    return sum(serialized_row_size(row.values) for row in table.rows.values())


def serialized_txn_size(txn: DeferredTxn) -> int:
    total = TXN_HEADER
    for op in txn.ops:
        if isinstance(op, InsertOp):
            total += TXN_HEADER + sum(serialized_value_size(v) for v in op.values.values())
        elif isinstance(op, UpdateOp):
            total += TXN_HEADER + sum(
                serialized_value_size(v) for v in op.after_values.values()
            )
        elif isinstance(op, DeleteOp):
            total += TXN_HEADER + 8
        else:
            raise TypeError(f"not a row op: {op!r}")
    return total


@dataclass
class Link:
    """Directed connection; cost = ceil(bytes / bandwidth) + latency ticks."""

    src: str
    dst: str
    latency: int = 1
    bandwidth: int = 1024
    up: bool = True
    down_until: int = 0


def transfer_cost(nbytes: int, link: Link) -> int:
    """Ticks to move nbytes over a link (latency only for an empty payload)."""
    if not link.up:
        raise LinkDown(f"{link.src}->{link.dst} is partitioned")
    return _nominal_cost(nbytes, link)


def _nominal_cost(nbytes: int, link: Link) -> int:
    return math.ceil(nbytes / link.bandwidth) + link.latency


@dataclass
class Metrics:
    """Counters a run reports; all integers so reports stay byte-stable."""

    downtime_ticks: int = 0
    rejected_dml: int = 0
    conflicts: dict = field(
        default_factory=lambda: {"update": 0, "uniqueness": 0, "delete": 0, "ordering": 0}
    )
    statements_executed: int = 0
    statement_errors: int = 0
    bytes_transferred: int = 0
    convergence_tick: int | None = None
    converged: bool = False

    def conflicts_total(self) -> int:
        return sum(self.conflicts.values())


@dataclass
class TraceRecord:
    tick: int
    site: str
    kind: str  # statement kind or event tag
    detail: str
    outcome: str


class SimEvent:
    """Base event; subclasses override run(sim)."""

    def run(self, sim: "Simulation") -> None:  # pragma: no cover - abstract
        raise NotImplementedError


class ClientStatement(SimEvent):
    """One client statement arriving at a site."""

    def __init__(self, site_id: str, text: str) -> None:
        self.site_id = site_id
        self.text = text

    def run(self, sim: "Simulation") -> None:
        sim.execute_statement(self.site_id, self.text)


class DeliverTxn(SimEvent):
    """A deferred transaction reaching its destination."""

    def __init__(self, txn: DeferredTxn, src: str, dst: str, nbytes: int) -> None:
        self.txn = txn
        self.src = src
        self.dst = dst
        self.nbytes = nbytes

    def run(self, sim: "Simulation") -> None:
        link = sim.link(self.src, self.dst)
        if not link.up:
            # Partitioned: queue for the recovery tick, preserving order.
            sim.schedule_at(max(link.down_until, sim.now + 1), self)
            return
        sim.metrics.bytes_transferred += self.nbytes
        dest = sim.sites[self.dst]
        if dest.holding:
            dest.held.append(self.txn)
            sim.trace.append(
                TraceRecord(sim.now, self.dst, "deliver", txn_label(self.txn), "held")
            )
            return
        result = dest.apply_remote(self.txn, sim.now)
        if result.applied:
            outcome = "applied"
        else:
            outcome = f"conflict:{result.conflict}"
            sim.metrics.conflicts[result.conflict] += 1
        sim.trace.append(
            TraceRecord(sim.now, self.dst, "deliver", txn_label(self.txn), outcome)
        )


class PartitionStart(SimEvent):
    def __init__(self, src: str, dst: str, until: int) -> None:
        self.src = src
        self.dst = dst
        self.until = until

    def run(self, sim: "Simulation") -> None:
        link = sim.link(self.src, self.dst)
        link.up = False
        link.down_until = max(link.down_until, self.until)
        sim.trace.append(
            TraceRecord(sim.now, self.src, "partition", f"->{self.dst}", f"down until {self.until}")
        )


class PartitionEnd(SimEvent):
    def __init__(self, src: str, dst: str) -> None:
        self.src = src
        self.dst = dst

    def run(self, sim: "Simulation") -> None:
        link = sim.link(self.src, self.dst)
        if sim.now >= link.down_until:
            link.up = True
            sim.trace.append(
                TraceRecord(sim.now, self.src, "partition", f"->{self.dst}", "recovered")
            )


class Call(SimEvent):
    """Run an arbitrary callback; the instantiation procedures step with these."""

    def __init__(self, fn, label: str = "call") -> None:
        self.fn = fn
        self.label = label

    def run(self, sim: "Simulation") -> None:
        self.fn()


class Simulation:
    """Sites, links and the (due_tick, seq) event loop."""

    def __init__(self, reconcile_every: int = 10, max_ticks: int = 100_000) -> None:
        self.now = 0
        self.sites: dict = {}
        self.links: dict = {}
        self.metrics = Metrics()
        self.trace: list = []
        self.reconcile_every = reconcile_every
        self.max_ticks = max_ticks
        self._heap: list = []
        self._seq = 0
        self._pair_clock: dict = {}  # (src, dst) -> last scheduled arrival

    # --- topology -----------------------------------------------------------

    def add_site(self, site_id: str) -> Site:
        site = Site(site_id)
        self.sites[site_id] = site
        return site

    def set_link(self, src: str, dst: str, latency: int = 1, bandwidth: int = 1024) -> Link:
        link = Link(src, dst, latency, bandwidth)
        self.links[(src, dst)] = link
        return link

    def link(self, src: str, dst: str) -> Link:
        key = (src, dst)
        if key not in self.links:
            self.links[key] = Link(src, dst)
        return self.links[key]

    # --- scheduling -----------------------------------------------------------

    def schedule_at(self, tick: int, event: SimEvent) -> None:
        if tick < self.now:
            raise ValueError(f"cannot schedule at {tick}, now is {self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (tick, self._seq, event))

    def schedule_after(self, delay: int, event: SimEvent) -> None:
        self.schedule_at(self.now + delay, event)

    def pending(self) -> int:
        return len(self._heap)

    def step(self) -> SimEvent:
        """Pop and run the next event, advancing the clock to its due tick."""
        tick, _, event = heapq.heappop(self._heap)
        self.now = tick
        event.run(self)
        return event

    def run_until(self, tick: int) -> None:
        """Run every event due at or before the given tick."""
        while self._heap and self._heap[0][0] <= tick:
            self.step()
        self.now = max(self.now, tick)

    # --- statement execution ---------------------------------------------------

    def execute_statement(self, site_id: str, text: str):
        """Parse and run one client statement, then push any queued txn out."""
        site = self.sites[site_id]
        kind = "statement"
        try:
            stmt = parse(text)
            kind = type(stmt).__name__.lower()
            result = site.execute_local(stmt, self.now)
        except DmlRejectedQuiesced:
            self.metrics.rejected_dml += 1
            self.trace.append(TraceRecord(self.now, site_id, kind, text, "rejected"))
            return None
        except ReplicationError as exc:
            self.metrics.statement_errors += 1
            self.trace.append(TraceRecord(self.now, site_id, kind, text, f"error:{exc}"))
            return None
        self.metrics.statements_executed += 1
        if isinstance(result, DmlResult):
            outcome = f"rows:{result.rows_affected}"
        else:
            outcome = f"rows:{len(result.rows)}"
        self.trace.append(TraceRecord(self.now, site_id, kind, text, outcome))
        self.flush_site(site)
        return result

    def flush_site(self, site: Site) -> None:
        """Schedule deliveries for everything in the site's outbound FIFOs.

        Per-destination order is preserved even when a later transaction is
        smaller: an arrival never overtakes its predecessor on the same pair.
        """
        for dest, txns in site.drain_outbound().items():
            link = self.link(site.site_id, dest)
            for txn in txns:
                nbytes = serialized_txn_size(txn)
                # A link that is down right now still gets its nominal arrival;
                # the delivery event re-enqueues itself at recovery.
                arrival = self.now + _nominal_cost(nbytes, link)
                key = (site.site_id, dest)
                arrival = max(arrival, self._pair_clock.get(key, 0))
                self._pair_clock[key] = arrival
                self.schedule_at(arrival, DeliverTxn(txn, site.site_id, dest, nbytes))

    # --- drain / convergence ------------------------------------------------------

    def deliveries_pending(self, members: set | None = None) -> bool:
        """True when a delivery between the given sites is still in flight."""
        return bool(self.pending_delivery_ticks(members))

    def pending_delivery_ticks(self, members: set | None = None) -> list:
        """Due ticks of in-flight deliveries between the given sites."""
        return [
            tick
            for tick, _, event in self._heap
            if isinstance(event, DeliverTxn)
            and (members is None or (event.src in members and event.dst in members))
        ]

    def group_drained(self, group_name: str) -> bool:
        """No queued or in-flight inter-member traffic for the group."""
        members = set()
        for site in self.sites.values():
            group = site.groups.get(group_name)
            if group is not None:
                members |= group.members
        for site_id in members:
            site = self.sites[site_id]
            for dest, txns in site.outbound.items():
                if dest in members and txns:
                    return False
        return not self.deliveries_pending(members)

    def reconcile_all(self, record: bool = True) -> int:
        """One reconcile pass at every site, in site order; returns resolutions."""
        resolved = 0
        for site_id in sorted(self.sites):
            stats = self.sites[site_id].reconcile(self.now)
            resolved += stats.resolved
        if record and resolved:
            self.trace.append(TraceRecord(self.now, "*", "reconcile", "", f"resolved:{resolved}"))
        return resolved

    def check_convergence(self, group_name: str) -> bool:
        """Queues drained, error queues empty, and member tables value-equal."""
        if not self.group_drained(group_name):
            return False
        members = sorted(
            site_id
            for site_id, site in self.sites.items()
            if group_name in site.groups and not site.holding
        )
        if not members:
            return False
        for site_id in members:
            if self.sites[site_id].error_queue:
                return False
        first = self.sites[members[0]]
        group = first.groups[group_name]
        for other_id in members[1:]:
            other = self.sites[other_id]
            for table_name in group.table_names:
                if not table_equal(first.tables[table_name], other.tables[table_name]):
                    return False
        return True

    def run(self, group_names: list | None = None) -> Metrics:
        """Drive the run to completion and settle convergence.

        Processes every scheduled event, then runs reconcile passes every
        ``reconcile_every`` ticks until two consecutive passes resolve
        nothing, then records whether each group converged. Gives up at
        ``max_ticks``.
        """
        if group_names is None:
            group_names = sorted(
                {g for site in self.sites.values() for g in site.groups}
            )
        while self._heap and self.now <= self.max_ticks:
            self.step()
        quiet = 0
        while quiet < 2 and self.now <= self.max_ticks:
            if self.reconcile_all():
                quiet = 0
            else:
                quiet += 1
            if self._heap:
                # A reconcile or hold release scheduled more work; drain it.
                while self._heap and self.now <= self.max_ticks:
                    self.step()
                quiet = 0
                continue
            if quiet < 2:
                self.now += self.reconcile_every
        converged = all(self.check_convergence(name) for name in group_names)
        self.metrics.converged = converged and bool(group_names)
        if self.metrics.converged:
            self.metrics.convergence_tick = self.now
        return self.metrics


def txn_label(txn: DeferredTxn) -> str:
    return f"{txn.txn_id[0]}#{txn.txn_id[1]}"
