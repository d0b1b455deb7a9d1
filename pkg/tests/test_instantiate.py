"""Tests for the three site-addition procedures.

The interesting oracles here are hand-computed tick arithmetic: each test
pins the exact suspend/resume/downtime ticks from the cost model and link
parameters, so a regression in event ordering or cost accounting shows up
as an off-by-N rather than a vague "something drifted".
"""

from replisim.engine import Site
from replisim.errors import AlreadyQuiesced, NotQuiesced
from replisim.instantiate import (
    METHODS,
    OFFLINE,
    ONLINE,
    ZERO,
    AdditionPlan,
    CostModel,
    add_master,
    add_master_offline,
    add_master_online,
    add_master_zero_downtime,
    member_ids,
    resume_master_activity,
    suspend_master_activity,
)
from replisim.relmodel import INT, NORMAL, QUIESCED, TEXT, MasterGroup, RowVersion, Table, TableSchema, table_equal
from replisim.simnet import Call, ClientStatement, Simulation

import pytest

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


def build_group(member_ids=("a", "b"), latency=1, bandwidth=1024, rows=ROWS):
    """Members share table1 and pairwise links; 'c' exists but is empty."""
    sim = Simulation()
    for site_id in member_ids:
        site = sim.add_site(site_id)
        table = site.add_table(SCHEMA)
        for i, (f1, f2, f3) in enumerate(rows):
            table.insert(
                {"field_1": f1, "field_2": f2, "field_3": f3},
                RowVersion(0, "seed", i + 1),
            )
        site.groups["g1"] = MasterGroup("g1", ("table1",), set(member_ids))
    sim.add_site("c")
    all_ids = tuple(member_ids) + ("c",)
    for src in all_ids:
        for dst in all_ids:
            if src != dst:
                sim.set_link(src, dst, latency=latency, bandwidth=bandwidth)
    return sim


def plan(method, start_tick=10, costs=None):
    return AdditionPlan(
        group_name="g1",
        new_site="c",
        source_site="a",
        method=method,
        start_tick=start_tick,
        costs=costs or CostModel(),
    )


def test_unknown_method_rejected():
    sim = build_group()
    with pytest.raises(ValueError):
        add_master(sim, plan("sideways"))


def test_suspend_and_resume_toggle_group_state():
    sim = build_group()
    assert member_ids(sim, "g1") == ["a", "b"]
    before = {pk: dict(row.values) for pk, row in sim.sites["a"].tables["table1"].rows.items()}
    suspend_master_activity(sim, "g1")
    assert all(sim.sites[s].groups["g1"].state == QUIESCED for s in ("a", "b"))
    with pytest.raises(AlreadyQuiesced):
        suspend_master_activity(sim, "g1")
    resume_master_activity(sim, "g1")
    assert all(sim.sites[s].groups["g1"].state == NORMAL for s in ("a", "b"))
    with pytest.raises(NotQuiesced):
        resume_master_activity(sim, "g1")
    after = {pk: dict(row.values) for pk, row in sim.sites["a"].tables["table1"].rows.items()}
    assert after == before


def test_named_entry_points_check_the_plan_method():
    runs = {
        ONLINE: add_master_online,
        OFFLINE: add_master_offline,
        ZERO: add_master_zero_downtime,
    }
    for method, entry in runs.items():
        sim = build_group()
        addition = entry(sim, plan(method))
        sim.run_until(400)
        assert addition.report.done and addition.report.method == method
    with pytest.raises(ValueError, match="does not match"):
        add_master_online(build_group(), plan(ZERO))


def test_quiesce_waits_for_in_flight_traffic():
    # A txn executed at tick 1 is due at b at tick 5 (51 bytes over a
    # bandwidth-1024, latency-3 link: 1 + 3 ticks).  An addition starting at
    # tick 2 must not report the group quiesced until that delivery lands.
    sim = build_group(latency=3)
    sim.schedule_at(1, ClientStatement("a", "UPDATE table1 SET field_2 = 'x' WHERE field_1 = 1"))
    addition = add_master(sim, plan(ONLINE, start_tick=2))
    sim.run_until(200)
    assert addition.report.start_tick == 2
    assert addition.report.effective_tick == 5
    assert addition.report.done


def test_quiesce_is_immediate_when_nothing_is_in_flight():
    sim = build_group(latency=3)
    addition = add_master(sim, plan(ONLINE, start_tick=10))
    sim.run_until(200)
    assert addition.report.effective_tick == 10


def test_online_downtime_covers_copy_and_rejects_dml():
    # 156 snapshot bytes over a latency-3 link: transfer ceil(156/1024)+3 = 4,
    # import 1 + ceil(156/1024) = 2, so the group resumes at 10+6 = 16.
    sim = build_group(latency=3)
    sim.schedule_at(12, ClientStatement("a", "UPDATE table1 SET field_2 = 'no' WHERE field_1 = 1"))
    sim.schedule_at(13, ClientStatement("a", "SELECT * FROM table1"))
    sim.schedule_at(20, ClientStatement("a", "UPDATE table1 SET field_2 = 'yes' WHERE field_1 = 3"))
    addition = add_master(sim, plan(ONLINE, start_tick=10))
    sim.run_until(200)

    report = addition.report
    assert report.start_tick == 10
    assert report.effective_tick == 10
    assert report.resume_tick == 16
    assert report.end_tick == 16
    assert report.downtime_ticks == 16 - 10
    assert report.bytes_transferred == 156
    assert report.rejected_dml == 1
    assert report.done

    # Reads pass through the suspend window; only the write was turned away.
    assert sim.metrics.rejected_dml == 1
    assert sim.metrics.statements_executed == 2
    rejected = [r for r in sim.trace if r.outcome == "rejected"]
    assert [(r.tick, r.site) for r in rejected] == [(12, "a")]

    # The new member is registered everywhere and receives post-resume DML.
    for site_id in ("a", "b", "c"):
        assert sim.sites[site_id].groups["g1"].members == {"a", "b", "c"}
        assert sim.sites[site_id].groups["g1"].state == NORMAL
        assert sim.sites[site_id].tables["table1"].rows[3].values["field_2"] == "yes"
    assert table_equal(sim.sites["a"].tables["table1"], sim.sites["c"].tables["table1"])
    assert sim.check_convergence("g1")


def test_online_downtime_on_empty_tables_is_overhead_only():
    # Zero data bytes: transfer is pure latency (3), import is the single
    # per-table overhead tick, so downtime is 4 ticks.
    sim = build_group(latency=3, rows=[])
    addition = add_master(sim, plan(ONLINE, start_tick=10))
    sim.run_until(200)
    assert addition.report.bytes_transferred == 0
    assert addition.report.downtime_ticks == 4


def test_offline_downtime_is_export_only_and_held_txns_apply_in_origin_order():
    # Export stretches the suspend window: 1 + ceil(156/16) = 11 ticks, so
    # the group resumes at 21 while the copy (13 ticks) and import (21 ticks)
    # still lie ahead; the new site only finishes installing at tick 55.
    sim = build_group(latency=1)
    sim.set_link("a", "c", latency=12, bandwidth=1024)
    sim.set_link("c", "a", latency=12, bandwidth=1024)
    costs = CostModel(
        export_bytes_per_tick=16, import_bytes_per_tick=8, per_table_overhead_ticks=1
    )
    addition = add_master(sim, plan(OFFLINE, start_tick=10, costs=costs))

    # Two causally ordered updates of the same row land at c out of order:
    # a's (origin tick 22) is due at 22+13 = 35, b's follow-up (origin tick
    # 30) at 30+2 = 32.  Applying them as held, in origin order, needs no
    # conflict handling at all; arrival order would trip an old-version check.
    sim.schedule_at(22, ClientStatement("a", "UPDATE table1 SET field_2 = 'first' WHERE field_1 = 1"))
    sim.schedule_at(30, ClientStatement("b", "UPDATE table1 SET field_2 = 'second' WHERE field_1 = 1"))

    sim.run_until(54)
    assert "table1" not in sim.sites["c"].tables  # import still running
    assert len(sim.sites["c"].held) == 2
    assert sim.sites["b"].groups["g1"].members == {"a", "b", "c"}

    sim.run_until(400)
    report = addition.report
    assert report.effective_tick == 10
    assert report.resume_tick == 21
    assert report.downtime_ticks == 11
    assert report.held_applied == 2
    assert report.conflicts_during == {
        "delete": 0,
        "ordering": 0,
        "uniqueness": 0,
        "update": 0,
    }
    assert report.done
    for site_id in ("a", "b", "c"):
        assert sim.sites[site_id].tables["table1"].rows[1].values["field_2"] == "second"
    assert sim.check_convergence("g1")


def test_zero_method_absorbs_writes_with_no_downtime():
    sim = build_group(latency=3)
    addition = add_master(sim, plan(ZERO, start_tick=10))

    # All three writes fall inside the copy window (quiesced ticks 10..16).
    sim.schedule_at(11, ClientStatement("a", "UPDATE table1 SET field_2 = 'x' WHERE field_1 = 1"))
    sim.schedule_at(12, ClientStatement("a", "INSERT INTO table1 (field_1, field_2, field_3) VALUES (5, 'Text5', 5555)"))
    sim.schedule_at(13, ClientStatement("b", "UPDATE table1 SET field_3 = 1 WHERE field_1 = 2"))

    seen = {}

    def probe():
        seen["base_pk1"] = sim.sites["a"].tables["table1"].rows[1].values["field_2"]
        seen["c_has_table"] = "table1" in sim.sites["c"].tables

    sim.schedule_at(15, Call(probe, "probe"))
    sim.run_until(400)

    # Mid-window the base table is untouched and the new site not yet built.
    assert seen == {"base_pk1": "Text1", "c_has_table": False}

    report = addition.report
    assert report.downtime_ticks == 0
    assert report.rejected_dml == 0
    assert report.effective_tick == 10
    assert report.resume_tick == 16
    assert report.bytes_transferred == 156
    assert report.replayed_statements == 3
    assert report.done
    assert sim.metrics.rejected_dml == 0
    assert sim.metrics.statements_executed == 3

    for site_id in ("a", "b", "c"):
        table = sim.sites[site_id].tables["table1"]
        assert table.rows[1].values["field_2"] == "x"
        assert table.rows[2].values["field_3"] == 1
        assert table.rows[5].values["field_2"] == "Text5"
    assert sim.check_convergence("g1")


def test_snapshot_includes_resolutions_of_parked_conflicts():
    # Symmetric update race at tick 1 parks one conflict entry at each
    # member. The addition must reconcile those away before copying: the
    # entries' resolutions mutate member tables, and the new site would
    # never hear about transactions sent before it joined.
    for method in METHODS:
        sim = build_group(latency=1)
        sim.schedule_at(1, ClientStatement("a", "UPDATE table1 SET field_2 = 'from-a' WHERE field_1 = 2"))
        sim.schedule_at(1, ClientStatement("b", "UPDATE table1 SET field_2 = 'from-b' WHERE field_1 = 2"))
        add_master(sim, plan(method, start_tick=5))
        sim.run(["g1"])
        assert sim.metrics.converged, method
        assert sim.sites["c"].tables["table1"].rows[2].values["field_2"] == "from-b"


def test_all_methods_reach_the_same_final_state():
    # With writes kept clear of every suspend window, the three procedures
    # are interchangeable: same tables at every site afterwards.
    finished = {}
    for method in METHODS:
        sim = build_group(latency=1)
        addition = add_master(sim, plan(method, start_tick=10))
        sim.schedule_at(1, ClientStatement("a", "UPDATE table1 SET field_2 = 'early' WHERE field_1 = 1"))
        sim.schedule_at(2, ClientStatement("b", "DELETE FROM table1 WHERE field_1 = 4"))
        sim.schedule_at(300, ClientStatement("a", "INSERT INTO table1 (field_1, field_2, field_3) VALUES (6, 'Text6', 6)"))
        sim.schedule_at(301, ClientStatement("b", "UPDATE table1 SET field_3 = 0 WHERE field_1 = 2"))
        sim.run_until(500)
        assert addition.report.done
        assert sim.check_convergence("g1")
        finished[method] = sim

    for site_id in ("a", "b", "c"):
        online_table = finished[ONLINE].sites[site_id].tables["table1"]
        for method in (OFFLINE, ZERO):
            assert table_equal(online_table, finished[method].sites[site_id].tables["table1"])
        assert sorted(online_table.rows) == [1, 2, 3, 6]
