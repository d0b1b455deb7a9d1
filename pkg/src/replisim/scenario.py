"""Scenario files: a line-oriented declarative format driving one simulation.

A scenario is ``[section]`` blocks of ``key = value`` lines. Full-line
comments start with ``#``. Sections:

* ``[sites]``: ``names = db1, db2, db3``
* ``[links]``: default ``latency`` / ``bandwidth`` plus per-pair overrides
  like ``db1->db3 = latency 4 bandwidth 128``
* ``[table NAME]``: ``columns = field_1 int, field_2 text`` and ``pk = field_1``
* ``[group NAME]``: ``tables = ...`` and ``members = ...``
* ``[data NAME]``: repeated ``row = 1, 'Text1', 1234`` lines
* ``[workload]``: seed, rate, ops, pk_range, start/stop, optional sites/tables
* ``[costs]``: export/import bytes per tick, per-table overhead
* ``[timeline]``: ``partition = a -> b from T to T`` lines, one optional
  ``add_site = NEW at TICK method M source SRC [group G]``, plus
  ``reconcile_every`` and ``max_ticks``

Seeded data rows are installed at every group member with identical version
stamps, so the sites start from one consistent state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ReplicationError, ScenarioError
from .instantiate import (
    METHODS,
    Addition,
    AdditionPlan,
    CostModel,
    add_master,
)
from .minisql import _tokenize
from .relmodel import INT, TEXT, MasterGroup, RowVersion, TableSchema
from .simnet import ClientStatement, Metrics, PartitionEnd, PartitionStart, Simulation
from .workload import DEFAULT_OPS, WorkloadSpec, generate_workload

SEED_VERSION_SITE = "seed"  # origin marker for preloaded rows


@dataclass
class PartitionSpec:
    src: str
    dst: str
    from_tick: int
    to_tick: int


@dataclass
class AdditionSpec:
    new_site: str
    tick: int
    method: str
    source: str
    group: str


@dataclass
class Scenario:
    name: str
    sites: list = field(default_factory=list)
    link_latency: int = 1
    link_bandwidth: int = 1024
    link_overrides: dict = field(default_factory=dict)
    schemas: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)  # name -> (tables, members)
    data: dict = field(default_factory=dict)  # table -> [row tuples]
    workload: dict | None = None  # raw knobs; resolved in build_simulation
    costs: CostModel = field(default_factory=CostModel)
    partitions: list = field(default_factory=list)
    addition: AdditionSpec | None = None
    reconcile_every: int = 10
    max_ticks: int = 100_000


# --- low-level line parsing ---------------------------------------------------

def _split_csv(value: str) -> list:
    return [part.strip() for part in value.split(",") if part.strip()]


def _int(value: str, what: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScenarioError(f"{what} must be an integer, got {value!r}", line) from None


def _literals(value: str, line: int) -> tuple:
    """Parse a comma-separated literal list using the statement tokenizer."""
    try:
        tokens = _tokenize(value)
    except ParseError as exc:
        raise ScenarioError(f"bad literal list: {exc}", line) from None
    out = []
    expect_value = True
    for tok in tokens:
        if tok.kind == "end":
            break
        if expect_value:
            if tok.kind in ("int", "text"):
                out.append(tok.value)
            elif tok.kind == "keyword" and tok.text == "null":
                out.append(None)
            else:
                raise ScenarioError(f"bad literal {tok.text!r}", line)
            expect_value = False
        else:
            if not (tok.kind == "punct" and tok.text == ","):
                raise ScenarioError(f"expected ',' before {tok.text!r}", line)
            expect_value = True
    if expect_value:
        raise ScenarioError("trailing comma or empty literal list", line)
    return tuple(out)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    scenario = Scenario(name)
    section: tuple | None = None
    table_cols: dict = {}
    table_pk: dict = {}
    group_raw: dict = {}
    workload: dict = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            parts = line[1:-1].split()
            if not parts:
                raise ScenarioError("empty section header", lineno)
            kind = parts[0]
            if kind in ("sites", "links", "workload", "costs", "timeline"):
                if len(parts) != 1:
                    raise ScenarioError(f"section [{kind}] takes no name", lineno)
                section = (kind, None)
            elif kind in ("table", "group", "data"):
                if len(parts) != 2:
                    raise ScenarioError(f"section [{kind}] needs a name", lineno)
                section = (kind, parts[1])
                if kind == "table":
                    table_cols.setdefault(parts[1], [])
                elif kind == "group":
                    group_raw.setdefault(parts[1], {})
                else:
                    scenario.data.setdefault(parts[1], [])
            else:
                raise ScenarioError(f"unknown section [{kind}]", lineno)
            continue
        if "=" not in line:
            raise ScenarioError(f"expected key = value, got {line!r}", lineno)
        if section is None:
            raise ScenarioError("key outside any [section]", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        kind, section_name = section

        if kind == "sites":
            if key != "names":
                raise ScenarioError(f"unknown [sites] key {key!r}", lineno)
            scenario.sites = _split_csv(value)
        elif kind == "links":
            _parse_link_line(scenario, key, value, lineno)
        elif kind == "table":
            if key == "columns":
                for part in _split_csv(value):
                    bits = part.split()
                    if len(bits) != 2 or bits[1] not in (INT, TEXT):
                        raise ScenarioError(
                            f"column spec must be 'name int|text', got {part!r}", lineno
                        )
                    table_cols[section_name].append((bits[0], bits[1]))
            elif key == "pk":
                table_pk[section_name] = value
            else:
                raise ScenarioError(f"unknown [table] key {key!r}", lineno)
        elif kind == "group":
            if key not in ("tables", "members"):
                raise ScenarioError(f"unknown [group] key {key!r}", lineno)
            group_raw[section_name][key] = _split_csv(value)
        elif kind == "data":
            if key != "row":
                raise ScenarioError(f"unknown [data] key {key!r}", lineno)
            scenario.data[section_name].append((_literals(value, lineno), lineno))
        elif kind == "workload":
            workload[key] = (value, lineno)
        elif kind == "costs":
            _parse_cost_line(scenario.costs, key, value, lineno)
        elif kind == "timeline":
            _parse_timeline_line(scenario, key, value, lineno)

    for name_, cols in table_cols.items():
        if name_ not in table_pk:
            raise ScenarioError(f"table {name_!r} has no pk")
        try:
            scenario.schemas[name_] = TableSchema(name_, tuple(cols), table_pk[name_])
        except ReplicationError as exc:
            raise ScenarioError(f"table {name_!r}: {exc}") from None
    for name_, raw_ in group_raw.items():
        scenario.groups[name_] = (
            tuple(raw_.get("tables", ())),
            tuple(raw_.get("members", ())),
        )
    if workload:
        scenario.workload = workload
    _validate(scenario)
    return scenario


def _parse_link_line(scenario: Scenario, key: str, value: str, lineno: int) -> None:
    if key == "latency":
        scenario.link_latency = _int(value, "latency", lineno)
    elif key == "bandwidth":
        scenario.link_bandwidth = _int(value, "bandwidth", lineno)
        if scenario.link_bandwidth < 1:
            raise ScenarioError("bandwidth must be >= 1", lineno)
    elif "->" in key:
        src, _, dst = key.partition("->")
        src, dst = src.strip(), dst.strip()
        bits = value.split()
        if len(bits) % 2 != 0:
            raise ScenarioError("override needs 'latency N' and/or 'bandwidth N'", lineno)
        override = {}
        for i in range(0, len(bits), 2):
            if bits[i] not in ("latency", "bandwidth"):
                raise ScenarioError(f"unknown link knob {bits[i]!r}", lineno)
            override[bits[i]] = _int(bits[i + 1], bits[i], lineno)
        scenario.link_overrides[(src, dst)] = override
    else:
        raise ScenarioError(f"unknown [links] key {key!r}", lineno)


def _parse_cost_line(costs: CostModel, key: str, value: str, lineno: int) -> None:
    if key == "export_bytes_per_tick":
        costs.export_bytes_per_tick = _int(value, key, lineno)
    elif key == "import_bytes_per_tick":
        costs.import_bytes_per_tick = _int(value, key, lineno)
    elif key == "per_table_overhead_ticks":
        costs.per_table_overhead_ticks = _int(value, key, lineno)
    else:
        raise ScenarioError(f"unknown [costs] key {key!r}", lineno)
    if getattr(costs, key) < (1 if key.endswith("per_tick") else 0):
        raise ScenarioError(f"{key} out of range", lineno)


def _parse_timeline_line(scenario: Scenario, key: str, value: str, lineno: int) -> None:
    if key == "partition":
        # partition = a -> b from 100 to 200   (or a <-> b for both ways)
        bits = value.split()
        ok = len(bits) == 7 and bits[1] in ("->", "<->") and bits[3] == "from" and bits[5] == "to"
        if not ok:
            raise ScenarioError(
                "partition syntax: SRC -> DST from TICK to TICK", lineno
            )
        src, dst = bits[0], bits[2]
        start = _int(bits[4], "from tick", lineno)
        end = _int(bits[6], "to tick", lineno)
        if end <= start or start < 0:
            raise ScenarioError("partition window must be 0 <= from < to", lineno)
        scenario.partitions.append(PartitionSpec(src, dst, start, end))
        if bits[1] == "<->":
            scenario.partitions.append(PartitionSpec(dst, src, start, end))
    elif key == "add_site":
        # add_site = db3 at 500 method online source db1 [group g1]
        bits = value.split()
        if scenario.addition is not None:
            raise ScenarioError("only one add_site event is supported", lineno)
        if len(bits) < 7 or bits[1] != "at" or bits[3] != "method" or bits[5] != "source":
            raise ScenarioError(
                "add_site syntax: NEW at TICK method M source SRC [group G]", lineno
            )
        group = ""
        if len(bits) == 9 and bits[7] == "group":
            group = bits[8]
        elif len(bits) != 7:
            raise ScenarioError("trailing junk after add_site", lineno)
        scenario.addition = AdditionSpec(
            bits[0], _int(bits[2], "add_site tick", lineno), bits[4], bits[6], group
        )
    elif key == "reconcile_every":
        scenario.reconcile_every = _int(value, key, lineno)
        if scenario.reconcile_every < 1:
            raise ScenarioError("reconcile_every must be >= 1", lineno)
    elif key == "max_ticks":
        scenario.max_ticks = _int(value, key, lineno)
    else:
        raise ScenarioError(f"unknown [timeline] key {key!r}", lineno)


def _validate(scenario: Scenario) -> None:
    if not scenario.sites:
        raise ScenarioError("no sites defined")
    if len(set(scenario.sites)) != len(scenario.sites):
        raise ScenarioError("duplicate site names")
    if not scenario.groups:
        raise ScenarioError("no [group ...] section; nothing to replicate")
    sites = set(scenario.sites)
    grouped_tables: dict = {}
    for gname, (tables, members) in scenario.groups.items():
        if not tables:
            raise ScenarioError(f"group {gname!r} has no tables")
        if len(members) < 1:
            raise ScenarioError(f"group {gname!r} has no members")
        for t in tables:
            if t not in scenario.schemas:
                raise ScenarioError(f"group {gname!r}: unknown table {t!r}")
            if t in grouped_tables:
                raise ScenarioError(
                    f"table {t!r} is in both {grouped_tables[t]!r} and {gname!r}"
                )
            grouped_tables[t] = gname
        for m in members:
            if m not in sites:
                raise ScenarioError(f"group {gname!r}: unknown member {m!r}")
    for table, rows in scenario.data.items():
        if table not in scenario.schemas:
            raise ScenarioError(f"[data {table}]: unknown table")
        schema = scenario.schemas[table]
        for values, lineno in rows:
            if len(values) != len(schema.columns):
                raise ScenarioError(
                    f"row has {len(values)} values, schema has {len(schema.columns)}",
                    lineno,
                )
    for (src, dst) in scenario.link_overrides:
        if src not in sites or dst not in sites:
            raise ScenarioError(f"link override names unknown site: {src}->{dst}")
    for part in scenario.partitions:
        if part.src not in sites or part.dst not in sites:
            raise ScenarioError(f"partition names unknown site: {part.src}->{part.dst}")
    add = scenario.addition
    if add is not None:
        if add.method not in METHODS + ("all",):
            raise ScenarioError(f"unknown add_site method {add.method!r}")
        if add.new_site not in sites:
            raise ScenarioError(f"add_site: unknown site {add.new_site!r}")
        if add.source not in sites:
            raise ScenarioError(f"add_site: unknown source {add.source!r}")
        if not add.group:
            if len(scenario.groups) != 1:
                raise ScenarioError("add_site needs 'group G' when several groups exist")
            add.group = next(iter(scenario.groups))
        if add.group not in scenario.groups:
            raise ScenarioError(f"add_site: unknown group {add.group!r}")
        tables, members = scenario.groups[add.group]
        if add.new_site in members:
            raise ScenarioError(f"add_site: {add.new_site!r} is already a member")
        if add.source not in members:
            raise ScenarioError(f"add_site: source {add.source!r} is not a member")
    if scenario.workload:
        _resolve_workload(scenario)  # validates; result discarded


def load_scenario(path: str) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    return parse_scenario(text, p.stem)


# --- building a simulation ---------------------------------------------------

def _resolve_workload(scenario: Scenario, seed_override: int | None = None) -> WorkloadSpec:
    raw = dict(scenario.workload or {})
    spec = WorkloadSpec()

    def take(key, default=None):
        if key in raw:
            value, lineno = raw.pop(key)
            return value, lineno
        return default, None

    value, lineno = take("seed")
    if value is not None:
        spec.seed = _int(value, "seed", lineno)
    value, lineno = take("rate")
    if value is not None:
        spec.rate_per_100 = _int(value, "rate", lineno)
    value, lineno = take("start")
    if value is not None:
        spec.start_tick = _int(value, "start", lineno)
    value, lineno = take("stop")
    if value is not None:
        spec.stop_tick = _int(value, "stop", lineno)
    value, lineno = take("pk_range")
    if value is not None:
        bits = value.replace("..", " ").split()
        if len(bits) != 2:
            raise ScenarioError("pk_range syntax: LOW .. HIGH", lineno)
        spec.pk_low = _int(bits[0], "pk_range low", lineno)
        spec.pk_high = _int(bits[1], "pk_range high", lineno)
        if spec.pk_high < spec.pk_low:
            raise ScenarioError("pk_range high < low", lineno)
    value, lineno = take("ops")
    if value is not None:
        ops = {}
        for part in _split_csv(value):
            bits = part.split()
            if len(bits) != 2 or bits[0] not in DEFAULT_OPS:
                raise ScenarioError(f"ops entry must be 'insert|update|delete|select N', got {part!r}", lineno)
            ops[bits[0]] = _int(bits[1], "op weight", lineno)
        for name in DEFAULT_OPS:
            ops.setdefault(name, 0)
        if sum(ops.values()) <= 0:
            raise ScenarioError("ops weights sum to zero", lineno)
        spec.ops = ops
    value, lineno = take("disjoint_pks")
    if value is not None:
        if value not in ("true", "false"):
            raise ScenarioError("disjoint_pks must be true or false", lineno)
        spec.disjoint_pks = value == "true"
    value, lineno = take("sites")
    if value is not None:
        names = _split_csv(value)
        for name in names:
            if name not in scenario.sites:
                raise ScenarioError(f"workload site {name!r} unknown", lineno)
        spec.sites = tuple(names)
    else:
        members: set = set()
        for _, (_, ms) in sorted(scenario.groups.items()):
            members |= set(ms)
        spec.sites = tuple(sorted(members))
    value, lineno = take("tables")
    if value is not None:
        names = _split_csv(value)
        for name in names:
            if name not in scenario.schemas:
                raise ScenarioError(f"workload table {name!r} unknown", lineno)
        spec.tables = tuple(scenario.schemas[n] for n in names)
    else:
        grouped = []
        for _, (tables, _) in sorted(scenario.groups.items()):
            grouped.extend(tables)
        spec.tables = tuple(scenario.schemas[n] for n in grouped)
    if raw:
        key = sorted(raw)[0]
        raise ScenarioError(f"unknown [workload] key {key!r}", raw[key][1])
    if seed_override is not None:
        spec.seed = seed_override
    if not spec.sites:
        raise ScenarioError("workload has no sites to run on")
    if not spec.tables:
        raise ScenarioError("workload has no tables to target")
    return spec


def build_simulation(
    scenario: Scenario,
    seed: int | None = None,
    max_ticks: int | None = None,
    method: str | None = None,
) -> tuple[Simulation, Addition | None]:
    """Materialize sites, links, data, workload and timeline events."""
    sim = Simulation(
        reconcile_every=scenario.reconcile_every,
        max_ticks=max_ticks if max_ticks is not None else scenario.max_ticks,
    )
    for site_id in sorted(scenario.sites):
        sim.add_site(site_id)
    for src in sorted(scenario.sites):
        for dst in sorted(scenario.sites):
            if src == dst:
                continue
            override = scenario.link_overrides.get((src, dst), {})
            sim.set_link(
                src,
                dst,
                latency=override.get("latency", scenario.link_latency),
                bandwidth=override.get("bandwidth", scenario.link_bandwidth),
            )

    grouped: set = set()
    for gname, (tables, members) in sorted(scenario.groups.items()):
        grouped |= set(tables)
        for member in members:
            site = sim.sites[member]
            site.groups[gname] = MasterGroup(gname, tuple(tables), set(members))
            for tname in tables:
                site.add_table(scenario.schemas[tname])
    for tname, schema in sorted(scenario.schemas.items()):
        if tname not in grouped:  # ungrouped tables are site-local everywhere
            for site in sim.sites.values():
                site.add_table(schema)

    for tname, rows in sorted(scenario.data.items()):
        schema = scenario.schemas[tname]
        for index, (values, lineno) in enumerate(rows):
            version = RowVersion(0, SEED_VERSION_SITE, index + 1)
            row = dict(zip(schema.column_names, values))
            for site in sim.sites.values():
                if tname in site.tables:
                    try:
                        site.tables[tname].insert(row, version)
                    except ReplicationError as exc:
                        raise ScenarioError(f"[data {tname}]: {exc}", lineno) from None

    if scenario.workload:
        spec = _resolve_workload(scenario, seed)
        for item in generate_workload(spec):
            sim.schedule_at(item.tick, ClientStatement(item.site_id, item.text))

    for part in scenario.partitions:
        sim.schedule_at(part.from_tick, PartitionStart(part.src, part.dst, part.to_tick))
        sim.schedule_at(part.to_tick, PartitionEnd(part.src, part.dst))

    addition = None
    if scenario.addition is not None:
        chosen = method if method is not None else scenario.addition.method
        if chosen == "all":
            raise ScenarioError("method 'all' is only valid with the compare command")
        plan = AdditionPlan(
            group_name=scenario.addition.group,
            new_site=scenario.addition.new_site,
            source_site=scenario.addition.source,
            method=chosen,
            start_tick=scenario.addition.tick,
            costs=scenario.costs,
        )
        addition = add_master(sim, plan)
    return sim, addition


@dataclass
class RunOutcome:
    scenario: str
    seed: int
    method: str  # "none" when the timeline adds no site
    metrics: Metrics
    addition: Addition | None
    sim: Simulation


def run_scenario(
    scenario: Scenario,
    seed: int | None = None,
    max_ticks: int | None = None,
    method: str | None = None,
) -> RunOutcome:
    sim, addition = build_simulation(scenario, seed=seed, max_ticks=max_ticks, method=method)
    metrics = sim.run(sorted(scenario.groups))
    used_seed = seed
    if used_seed is None:
        used_seed = _resolve_workload(scenario).seed if scenario.workload else 0
    if addition is not None:
        chosen = addition.plan.method
    else:
        chosen = "none"
    return RunOutcome(scenario.name, used_seed, chosen, metrics, addition, sim)


def compare_scenario(scenario: Scenario, seed: int | None = None) -> list:
    """Run the same scenario once per addition method, same seed."""
    if scenario.addition is None:
        raise ScenarioError("compare needs an add_site event in [timeline]")
    return [run_scenario(scenario, seed=seed, method=m) for m in METHODS]
