"""Markdown tables and static plots rendered from run artifacts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import RunReport

REPORT_MD = "report.md"


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.3f}({std:.3f})"


def run_report_markdown(report: RunReport) -> str:
    lines = [f"# Run report: {report.method}", ""]
    cfg = report.config
    noise = cfg.get("noise")
    noise_desc = "none" if noise is None else f"{noise['kind']} tau={noise['tau']}"
    lines.append(f"- dataset: {cfg['dataset']['name']} (N={cfg['dataset']['n_instances']})")
    lines.append(f"- noise: {noise_desc}")
    lines.append(f"- folds: {cfg['k']}, seeds: {cfg['seeds']}")
    lines.append(f"- weighted F1: {format_cell(report.mean_f1, report.std_f1)}")
    lines.append("")
    lines.append("| fold | seed | weighted F1 |")
    lines.append("| --- | --- | --- |")
    for s in report.scores:
        lines.append(f"| {s.fold} | {s.seed} | {s.f1:.4f} |")
    lines.append("")
    if report.selection_summary is not None:
        lines.append("## Selection diagnostics")
        for key, value in report.selection_summary.items():
            if value is not None:
                lines.append(f"- {key}: {value:.4f}")
        lines.append("")
    lines.append("## Conventions")
    for note in report.notes:
        lines.append(f"- {note}")
    lines.append("")
    return "\n".join(lines)


def sweep_markdown(grid: dict, methods, settings) -> str:
    """Table of mean(std) cells; cells of failed runs show ERR.

    ``grid`` maps (method, setting_label) to either a RunReport or None.
    """
    lines = ["# Sweep report", "", "| method | " + " | ".join(settings) + " |"]
    lines.append("| --- |" + " --- |" * len(settings))
    for method in methods:
        row = [method]
        for setting in settings:
            report = grid.get((method, setting))
            row.append("ERR" if report is None else format_cell(report.mean_f1, report.std_f1))
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    return "\n".join(lines)


def _series(records, attr):
    xs, ys = [], []
    for rec in records:
        value = getattr(rec, attr)
        if value is not None:
            xs.append(rec.epoch)
            ys.append(value)
    return xs, ys


def save_history_plots(records, out_dir) -> list:
    """Loss curves, correction-weight curve, and partition sizes over epochs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    for attr, label in [
        ("loss_ce", "certain CE (sum)"),
        ("loss_recon", "reconstruction (mean)"),
        ("loss_aug", "augmentation CE (sum)"),
        ("loss_corr", "uncertain soft CE (mean)"),
        ("loss_total", "total"),
    ]:
        xs, ys = _series(records, attr)
        if xs:
            ax.plot(xs, ys, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "loss_curves.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 3))
    xs, ys = _series(records, "correction_weight")
    ax.plot(xs, ys)
    ax.set_xlabel("epoch")
    ax.set_ylabel("correction weight")
    ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    path = out_dir / "correction_weight.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    for attr in ("n_certain", "n_uncertain", "n_hard"):
        xs, ys = _series(records, attr)
        if xs:
            ax.plot(xs, ys, label=attr)
    ax.set_xlabel("epoch")
    ax.set_ylabel("set size")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "partition_sizes.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)
    return written
