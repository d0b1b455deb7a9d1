"""Adding a master site to a running group: two quiesce baselines and the
overlay-based zero-downtime method.

All three procedures are event-driven step chains on the simulator clock:

* ``online``: suspend every member (client DML rejected), drain, copy all
  group tables over the network to the new site, register it, resume.
  Downtime spans the whole window, dominated by the copy.
* ``offline``: suspend, drain, register the new site so peers start queueing
  deferred transactions for it (which it holds), export a dump locally,
  resume (downtime ends here), then transfer, import, and apply the held
  transactions in origin order. Downtime covers only the local export.
* ``zero``: activate an overlay for the group at every member, drain, then
  quiesce (the session manager absorbs client DML, so nothing is rejected),
  copy to the new site, resume, finalize every overlay so the buffered work
  replays through normal replication, and reconcile to a fixed point.
  Downtime is zero by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import AlreadyQuiesced, NotQuiesced
from .overlay import begin_overlay, finalize_overlay
from .relmodel import NORMAL, QUIESCED, MasterGroup
from .simnet import Call, Simulation, serialized_size, transfer_cost

ONLINE = "online"
OFFLINE = "offline"
ZERO = "zero"

METHODS = (ONLINE, OFFLINE, ZERO)


@dataclass
class CostModel:
    """Local I/O cost knobs; network cost comes from the link."""

    export_bytes_per_tick: int = 1024
    import_bytes_per_tick: int = 1024
    per_table_overhead_ticks: int = 1

    def export_ticks(self, nbytes: int, ntables: int) -> int:
        return ntables * self.per_table_overhead_ticks + math.ceil(
            nbytes / self.export_bytes_per_tick
        )

    def import_ticks(self, nbytes: int, ntables: int) -> int:
        return ntables * self.per_table_overhead_ticks + math.ceil(
            nbytes / self.import_bytes_per_tick
        )


@dataclass
class AdditionPlan:
    group_name: str
    new_site: str
    source_site: str
    method: str
    start_tick: int
    costs: CostModel = field(default_factory=CostModel)


@dataclass
class AdditionReport:
    method: str
    start_tick: int = 0
    effective_tick: int = 0  # quiesce (or overlay drain) completed
    resume_tick: int = 0
    end_tick: int = 0
    downtime_ticks: int = 0
    rejected_dml: int = 0
    bytes_transferred: int = 0
    conflicts_during: dict = field(default_factory=dict)
    replayed_statements: int = 0
    held_applied: int = 0
    done: bool = False


def member_ids(sim: Simulation, group_name: str) -> list:
    """Sites currently holding the group, sorted."""
    return sorted(
        site_id for site_id, site in sim.sites.items() if group_name in site.groups
    )


def set_group_state(sim: Simulation, group_name: str, state: str) -> None:
    for site_id in member_ids(sim, group_name):
        sim.sites[site_id].groups[group_name].state = state


def suspend_master_activity(sim: Simulation, group_name: str) -> int:
    """Quiesce the group everywhere; client DML is rejected from this tick."""
    for site_id in member_ids(sim, group_name):
        if sim.sites[site_id].groups[group_name].state == QUIESCED:
            raise AlreadyQuiesced(f"{group_name} already quiesced at {site_id}")
    set_group_state(sim, group_name, QUIESCED)
    return sim.now


def resume_master_activity(sim: Simulation, group_name: str) -> int:
    for site_id in member_ids(sim, group_name):
        if sim.sites[site_id].groups[group_name].state != QUIESCED:
            raise NotQuiesced(f"{group_name} is not quiesced at {site_id}")
    set_group_state(sim, group_name, NORMAL)
    return sim.now


def settle_members(sim: Simulation, group_name: str) -> None:
    """Reconcile every member until its error queue empties.

    Run after the group drains: at that point every parked transaction's
    prerequisites have arrived, so repeated passes always terminate. Skipping
    this would let a parked conflict resolve *after* the snapshot is taken,
    mutating member tables in a way the new site never hears about.
    """
    while True:
        resolved = 0
        remaining = 0
        for site_id in member_ids(sim, group_name):
            stats = sim.sites[site_id].reconcile(sim.now)
            resolved += stats.resolved
            remaining += stats.remaining
        if remaining == 0 or resolved == 0:
            return


def wait_drained(sim: Simulation, group_name: str, fn) -> None:
    """Call fn at the tick the group's inter-member traffic finishes draining.

    When undrained, the check reschedules itself for the due tick of the last
    in-flight member delivery (scheduling order guarantees it runs after that
    delivery), so fn observes effective_tick == last delivery tick.
    """
    for site_id in member_ids(sim, group_name):
        sim.flush_site(sim.sites[site_id])

    def check() -> None:
        if sim.group_drained(group_name):
            fn()
            return
        members = set(member_ids(sim, group_name))
        due = sim.pending_delivery_ticks(members)
        sim.schedule_at(max(due) if due else sim.now + 1, Call(check, "drain-check"))

    sim.schedule_at(sim.now, Call(check, "drain-check"))


class Addition:
    """Event-driven execution of one AdditionPlan; keeps the report."""

    def __init__(self, sim: Simulation, plan: AdditionPlan) -> None:
        if plan.method not in METHODS:
            raise ValueError(f"unknown method {plan.method!r}")
        self.sim = sim
        self.plan = plan
        self.report = AdditionReport(method=plan.method)
        self._conflicts_at_start: dict = {}
        self._rejected_at_start = 0
        self._snapshots: dict = {}
        self._members_at_start: list = []
        self._quiet_passes = 0
        self._conflicts_seen = 0

    def start(self) -> None:
        self.sim.schedule_at(self.plan.start_tick, Call(self._begin, "addition-begin"))

    # --- shared steps ----------------------------------------------------------

    def _begin(self) -> None:
        sim, plan = self.sim, self.plan
        self.report.start_tick = sim.now
        self._conflicts_at_start = dict(sim.metrics.conflicts)
        self._rejected_at_start = sim.metrics.rejected_dml
        self._members_at_start = member_ids(sim, plan.group_name)
        if plan.method == ZERO:
            for site_id in self._members_at_start:
                begin_overlay(sim.sites[site_id], plan.group_name)
            wait_drained(sim, plan.group_name, self._zero_quiesce)
        else:
            suspend_master_activity(sim, plan.group_name)
            next_step = self._online_copy if plan.method == ONLINE else self._offline_begin
            wait_drained(sim, plan.group_name, next_step)

    def _take_snapshots(self) -> int:
        source = self.sim.sites[self.plan.source_site]
        group = source.groups[self.plan.group_name]
        self._snapshots = {
            name: source.tables[name].snapshot() for name in group.table_names
        }
        return sum(serialized_size(t) for t in self._snapshots.values())

    def _install_new_site(self, state: str) -> None:
        """Install tables at the new site and register it as a member everywhere."""
        sim, plan = self.sim, self.plan
        new = sim.sites[plan.new_site]
        source_group = sim.sites[plan.source_site].groups[plan.group_name]
        members = set(source_group.members) | {plan.new_site}
        for name, snap in self._snapshots.items():
            new.tables[name] = snap
        new.groups[plan.group_name] = MasterGroup(
            plan.group_name, source_group.table_names, members, state
        )
        for site_id in self._members_at_start:
            sim.sites[site_id].groups[plan.group_name].members = set(members)

    def _finish(self) -> None:
        sim = self.sim
        self.report.end_tick = sim.now
        self.report.conflicts_during = {
            kind: sim.metrics.conflicts[kind] - self._conflicts_at_start.get(kind, 0)
            for kind in sorted(sim.metrics.conflicts)
        }
        self.report.rejected_dml = sim.metrics.rejected_dml - self._rejected_at_start
        self.report.done = True

    # --- online -------------------------------------------------------------------

    def _online_copy(self) -> None:
        sim, plan = self.sim, self.plan
        self.report.effective_tick = sim.now
        settle_members(sim, plan.group_name)
        nbytes = self._take_snapshots()
        self.report.bytes_transferred = nbytes
        link = sim.link(plan.source_site, plan.new_site)
        delay = transfer_cost(nbytes, link) + plan.costs.import_ticks(
            nbytes, len(self._snapshots)
        )
        sim.schedule_after(delay, Call(self._online_install, "online-install"))

    def _online_install(self) -> None:
        sim, plan = self.sim, self.plan
        sim.metrics.bytes_transferred += self.report.bytes_transferred
        self._install_new_site(QUIESCED)
        resume_master_activity(sim, plan.group_name)
        self.report.resume_tick = sim.now
        self.report.downtime_ticks = sim.now - self.report.start_tick
        sim.metrics.downtime_ticks += self.report.downtime_ticks
        self._finish()

    # --- offline --------------------------------------------------------------------

    def _offline_begin(self) -> None:
        """Peers start queueing for the new site; it holds whatever arrives."""
        sim, plan = self.sim, self.plan
        self.report.effective_tick = sim.now
        settle_members(sim, plan.group_name)
        new = sim.sites[plan.new_site]
        new.holding = True
        for site_id in self._members_at_start:
            sim.sites[site_id].groups[plan.group_name].members.add(plan.new_site)
        nbytes = self._take_snapshots()
        self.report.bytes_transferred = nbytes
        delay = plan.costs.export_ticks(nbytes, len(self._snapshots))
        sim.schedule_after(delay, Call(self._offline_resume, "offline-resume"))

    def _offline_resume(self) -> None:
        sim, plan = self.sim, self.plan
        resume_master_activity(sim, plan.group_name)
        self.report.resume_tick = sim.now
        self.report.downtime_ticks = sim.now - self.report.start_tick
        sim.metrics.downtime_ticks += self.report.downtime_ticks
        link = sim.link(plan.source_site, plan.new_site)
        delay = transfer_cost(self.report.bytes_transferred, link)
        sim.schedule_after(delay, Call(self._offline_import, "offline-import"))

    def _offline_import(self) -> None:
        sim, plan = self.sim, self.plan
        sim.metrics.bytes_transferred += self.report.bytes_transferred
        delay = plan.costs.import_ticks(
            self.report.bytes_transferred, len(self._snapshots)
        )
        sim.schedule_after(delay, Call(self._offline_finish, "offline-finish"))

    def _offline_finish(self) -> None:
        """Install the dump, then apply held transactions in origin order."""
        sim, plan = self.sim, self.plan
        self._install_new_site(NORMAL)
        new = sim.sites[plan.new_site]
        new.holding = False
        held = sorted(
            new.held, key=lambda t: (t.origin_tick, t.origin_site, t.txn_id[1])
        )
        new.held = []
        for txn in held:
            result = new.apply_remote(txn, sim.now)
            if not result.applied:
                sim.metrics.conflicts[result.conflict] += 1
        self.report.held_applied = len(held)
        self._reconcile_until_quiet()

    # --- zero-downtime ---------------------------------------------------------------

    def _zero_quiesce(self) -> None:
        sim, plan = self.sim, self.plan
        suspend_master_activity(sim, plan.group_name)
        self.report.effective_tick = sim.now
        settle_members(sim, plan.group_name)
        nbytes = self._take_snapshots()
        self.report.bytes_transferred = nbytes
        link = sim.link(plan.source_site, plan.new_site)
        delay = transfer_cost(nbytes, link) + plan.costs.import_ticks(
            nbytes, len(self._snapshots)
        )
        sim.schedule_after(delay, Call(self._zero_install, "zero-install"))

    def _zero_install(self) -> None:
        sim, plan = self.sim, self.plan
        sim.metrics.bytes_transferred += self.report.bytes_transferred
        self._install_new_site(QUIESCED)
        resume_master_activity(sim, plan.group_name)
        self.report.resume_tick = sim.now
        # The session manager absorbed every client write; nothing was
        # rejected, so this method contributes no downtime.
        for site_id in self._members_at_start:
            stmts = finalize_overlay(sim.sites[site_id], plan.group_name, sim.now)
            self.report.replayed_statements += len(stmts)
            sim.flush_site(sim.sites[site_id])
        self._reconcile_until_quiet()

    # --- reconcile tail ---------------------------------------------------------------

    def _reconcile_until_quiet(self) -> None:
        """Reconcile every reconcile_every ticks until two quiet passes.

        A pass is quiet when it resolved nothing and no new conflict arrived
        since the previous pass.
        """
        sim = self.sim
        self._quiet_passes = 0
        self._conflicts_seen = sim.metrics.conflicts_total()
        sim.schedule_after(sim.reconcile_every, Call(self._reconcile_step, "reconcile"))

    def _reconcile_step(self) -> None:
        sim = self.sim
        if sim.now > sim.max_ticks:
            self._finish()
            return
        resolved = sim.reconcile_all()
        total = sim.metrics.conflicts_total()
        fresh = total - self._conflicts_seen
        self._conflicts_seen = total
        if resolved == 0 and fresh == 0:
            self._quiet_passes += 1
        else:
            self._quiet_passes = 0
        if self._quiet_passes >= 2:
            self._finish()
        else:
            sim.schedule_after(sim.reconcile_every, Call(self._reconcile_step, "reconcile"))


def add_master(sim: Simulation, plan: AdditionPlan) -> Addition:
    """Schedule one addition on the simulator; returns its live report holder."""
    addition = Addition(sim, plan)
    addition.start()
    return addition


def _add_with(sim: Simulation, plan: AdditionPlan, method: str) -> Addition:
    if plan.method != method:
        raise ValueError(f"plan method {plan.method!r} does not match {method!r}")
    return add_master(sim, plan)


def add_master_online(sim: Simulation, plan: AdditionPlan) -> Addition:
    """The suspend/copy/resume baseline; downtime spans the whole copy."""
    return _add_with(sim, plan, ONLINE)


def add_master_offline(sim: Simulation, plan: AdditionPlan) -> Addition:
    """The export/import baseline; downtime covers only the local export."""
    return _add_with(sim, plan, OFFLINE)


def add_master_zero_downtime(sim: Simulation, plan: AdditionPlan) -> Addition:
    """The overlay method; no rejected DML and no downtime by construction."""
    return _add_with(sim, plan, ZERO)
