"""Run reports: per-iteration trace table plus loss and energy figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .optimizer import SceneReport


def write_trace_csv(report: SceneReport, path: str | Path) -> None:
    """One row per optimizer iteration across all levels."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["level", "subject", "iteration", "s1", "s2", "s3", "s4", "s5", "loss"])
        for trace in report.edge_traces:
            for record in trace.iterations:
                writer.writerow([trace.level, trace.subject, record.index,
                                 *record.scores.as_tuple(), record.loss])
        for trace in report.placement_traces:
            for record in trace.iterations:
                writer.writerow(["place", f"subgraph-{trace.subgraph_index}", record.index,
                                 *record.scores.as_tuple(), record.loss])


def plot_loss_curves(report: SceneReport, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    for trace in report.edge_traces:
        if not trace.iterations:
            continue
        xs = [r.index for r in trace.iterations]
        ys = [r.loss for r in trace.iterations]
        style = "-" if trace.level == "edge" else "--"
        ax.plot(xs, ys, style, marker="o", markersize=3, label=f"{trace.level} {trace.subject}")
    for trace in report.placement_traces:
        if not trace.iterations:
            continue
        xs = [r.index for r in trace.iterations]
        ys = [r.loss for r in trace.iterations]
        ax.plot(xs, ys, ":", marker="s", markersize=3,
                label=f"place subgraph-{trace.subgraph_index}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title("Optimization loss per step")
    if report.edge_traces or report.placement_traces:
        ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_energy(report: SceneReport, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    groups: list[str] = []
    before: list[float] = []
    after: list[float] = []
    if report.energy_before and report.energy_after:
        after_terms = {members: term for members, term in report.energy_after.subgraph_terms}
        for i, (members, term) in enumerate(report.energy_before.subgraph_terms):
            groups.append(f"G{i}\n({len(members)} nodes)")
            before.append(term)
            after.append(after_terms.get(members, 0.0))
        groups.append("cross")
        before.append(report.energy_before.cross_penalty)
        after.append(report.energy_after.cross_penalty)
    xs = range(len(groups))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], before, width, label="before")
    ax.bar([x + width / 2 for x in xs], after, width, label="after")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(groups, fontsize=8)
    ax.set_ylabel("energy")
    ax.set_title("Scene energy by component")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_run_report(report: SceneReport, out_dir: str | Path) -> list[Path]:
    """Write traces.csv plus the loss/energy figures into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "traces.csv", out / "loss_curves.png", out / "energy.png"]
    write_trace_csv(report, paths[0])
    plot_loss_curves(report, paths[1])
    plot_energy(report, paths[2])
    return paths
