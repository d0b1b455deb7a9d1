"""Fixed-format text reports plus optional matplotlib figures.

Reports are deliberately boring: fixed key order, ``key: value`` lines, no
timestamps, so two runs with the same scenario and seed emit byte-identical
text. Figure rendering writes PNG files next to the report and never touches
the report content.
"""

from __future__ import annotations

from pathlib import Path

from .scenario import RunOutcome

CONFLICT_ORDER = ("update", "uniqueness", "delete", "ordering")


def _metric_lines(outcome: RunOutcome) -> list:
    m = outcome.metrics
    lines = [
        f"method: {outcome.method}",
        f"downtime_ticks: {m.downtime_ticks}",
        f"rejected_dml: {m.rejected_dml}",
    ]
    for kind in CONFLICT_ORDER:
        lines.append(f"conflicts_{kind}: {m.conflicts[kind]}")
    lines += [
        f"conflicts_total: {m.conflicts_total()}",
        f"statements_executed: {m.statements_executed}",
        f"statement_errors: {m.statement_errors}",
        f"bytes_transferred: {m.bytes_transferred}",
        f"convergence_tick: {m.convergence_tick if m.converged else -1}",
        f"converged: {'true' if m.converged else 'false'}",
    ]
    return lines


def run_report(outcome: RunOutcome) -> str:
    lines = [
        "== METRICS ==",
        f"scenario: {outcome.scenario}",
        f"seed: {outcome.seed}",
    ]
    lines += _metric_lines(outcome)
    return "\n".join(lines) + "\n"


def compare_report(outcomes: list) -> str:
    """One block per method, fixed method order, machine-parseable."""
    lines = ["== COMPARISON =="]
    first = outcomes[0]
    lines.append(f"scenario: {first.scenario}")
    lines.append(f"seed: {first.seed}")
    for outcome in outcomes:
        lines += _metric_lines(outcome)
    return "\n".join(lines) + "\n"


# --- figures -------------------------------------------------------------------

def _agg_plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_run_figures(outcome: RunOutcome, outdir: str) -> list:
    """Conflict-by-kind and statement-outcome bars; returns written paths."""
    plt = _agg_plt()
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    m = outcome.metrics
    fig, ax = plt.subplots(figsize=(5, 3.2))
    kinds = list(CONFLICT_ORDER)
    ax.bar(kinds, [m.conflicts[k] for k in kinds], color="#c44e52")
    ax.set_ylabel("conflicts")
    ax.set_title(f"{outcome.scenario}: conflicts by kind")
    fig.tight_layout()
    path = out / "conflicts_by_kind.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))

    fig, ax = plt.subplots(figsize=(5, 3.2))
    labels = ["executed", "rejected", "errors"]
    ax.bar(labels, [m.statements_executed, m.rejected_dml, m.statement_errors],
           color=["#55a868", "#c44e52", "#8172b2"])
    ax.set_ylabel("statements")
    ax.set_title(f"{outcome.scenario}: statement outcomes")
    fig.tight_layout()
    path = out / "statement_outcomes.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))
    return written


def save_compare_figures(outcomes: list, outdir: str) -> list:
    """Downtime and conflict totals per addition method."""
    plt = _agg_plt()
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    methods = [o.method for o in outcomes]

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(methods, [o.metrics.downtime_ticks for o in outcomes], color="#4c72b0")
    ax.set_ylabel("downtime (ticks)")
    ax.set_title(f"{outcomes[0].scenario}: downtime per method")
    fig.tight_layout()
    path = out / "downtime_per_method.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(methods, [o.metrics.conflicts_total() for o in outcomes], color="#c44e52")
    ax.set_ylabel("conflicts")
    ax.set_title(f"{outcomes[0].scenario}: conflicts per method")
    fig.tight_layout()
    path = out / "conflicts_per_method.png"
    fig.savefig(path)
    plt.close(fig)
    written.append(str(path))
    return written


def write_report_file(text: str, outdir: str) -> str:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.txt"
    path.write_text(text)
    return str(path)
