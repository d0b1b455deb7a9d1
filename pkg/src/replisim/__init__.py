"""Deterministic simulator for asynchronous multimaster replication.

The package models peer master databases exchanging deferred row-level
transactions, the conflict taxonomy that comes with asynchronous
propagation, and three ways of adding a master site to a running group: two
quiesce-based baselines and an overlay-based method that keeps every site
writable throughout.
"""

from .engine import DeferredTxn, DmlResult, ErrorEntry, SelectResult, Site
from .errors import ReplicationError
from .instantiate import (
    AdditionPlan,
    AdditionReport,
    CostModel,
    add_master,
    add_master_offline,
    add_master_online,
    add_master_zero_downtime,
)
from .minisql import parse, render
from .overlay import OverlaySet, begin_overlay, finalize_overlay
from .relmodel import MasterGroup, Row, RowVersion, Table, TableSchema, table_equal
from .scenario import Scenario, compare_scenario, load_scenario, parse_scenario, run_scenario
from .simnet import Link, Metrics, Simulation, serialized_size, transfer_cost
from .workload import WorkloadSpec, generate_workload

__version__ = "0.1.0"

__all__ = [
    "AdditionPlan",
    "AdditionReport",
    "CostModel",
    "DeferredTxn",
    "DmlResult",
    "ErrorEntry",
    "Link",
    "MasterGroup",
    "Metrics",
    "OverlaySet",
    "ReplicationError",
    "Row",
    "RowVersion",
    "Scenario",
    "SelectResult",
    "Simulation",
    "Site",
    "Table",
    "TableSchema",
    "WorkloadSpec",
    "add_master",
    "add_master_offline",
    "add_master_online",
    "add_master_zero_downtime",
    "begin_overlay",
    "compare_scenario",
    "finalize_overlay",
    "generate_workload",
    "load_scenario",
    "parse",
    "parse_scenario",
    "render",
    "run_scenario",
    "serialized_size",
    "table_equal",
    "transfer_cost",
    "__version__",
]
