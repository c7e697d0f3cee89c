"""Figure rendering for evaluation and simulation reports.

All functions write PNG files and return the paths written; nothing is
shown interactively (Agg backend), so they are safe in batch runs.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import EvalReport
from .sim import SimReport


def save_pr_curves(report: EvalReport, path: str | os.PathLike) -> str:
    """Precision-recall curves, one line per class with ground truth."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name, (recalls, precisions) in sorted(report.pr_curves.items()):
        if report.counts[name].n_gt == 0 or not recalls:
            continue
        ap = report.per_class_ap[name]
        ax.plot(recalls, precisions, drawstyle="steps-post", label=f"{name} (AP {ap:.3f})")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_title("Precision-recall")
    ax.legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def save_ap_bars(reports: dict[str, EvalReport], path: str | os.PathLike) -> str:
    """Per-class AP bars; multiple reports are drawn side by side."""
    names = sorted({n for rep in reports.values() for n in rep.per_class_ap})
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(names)), 4))
    width = 0.8 / max(1, len(reports))
    for i, (label, rep) in enumerate(sorted(reports.items())):
        values = [rep.per_class_ap.get(n) or 0.0 for n in names]
        xs = [j + i * width for j in range(len(names))]
        ax.bar(xs, values, width=width, label=f"{label} (mAP {rep.map_score:.3f})")
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(names))])
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("AP@0.5")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def save_threshold_series(report: SimReport, path: str | os.PathLike) -> str:
    """Smoothed per-class thresholds over iterations."""
    iterations = [r.iteration for r in report.records]
    fig, ax = plt.subplots(figsize=(7, 4))
    if report.records:
        for name in report.records[0].thresholds:
            ax.plot(iterations, [r.thresholds[name] for r in report.records], label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("smoothed threshold")
    ax.set_title("Dynamic pseudo-label thresholds")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)


def save_pseudo_counts(report: SimReport, path: str | os.PathLike) -> str:
    """Per-class pseudo-label counts over iterations."""
    iterations = [r.iteration for r in report.records]
    fig, ax = plt.subplots(figsize=(7, 4))
    if report.records:
        for name in report.records[0].pseudo_counts:
            ax.plot(iterations, [r.pseudo_counts[name] for r in report.records], label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("pseudo-labels kept")
    ax.set_title("Pseudo-label counts")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return os.fspath(path)
