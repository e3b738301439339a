"""Figures written next to the CSV outputs. The CSV files are the primary output."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analytics import RegretReport  # noqa: E402


def plot_regret(report: RegretReport, path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    t = [max(c, 1) for c in report.checkpoints]
    for name, pr in report.policies.items():
        line, = ax.plot(t, pr.mean_regret, marker="o", ms=3, label=name.upper())
        ax.fill_between(t, pr.mean_regret - pr.ci_half, pr.mean_regret + pr.ci_half, color=line.get_color(), alpha=0.2)
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("mean regret")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_sweep(eps: Sequence[float], sup: dict[str, Sequence[float]], path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, vals in sup.items():
        ax.plot(eps, vals, marker="o", label=name.upper())
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("sup of mean regret")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_queues(checkpoints: Sequence[int], totals: dict[str, Sequence[float]], path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    t = [max(c, 1) for c in checkpoints]
    for name, vals in totals.items():
        ax.plot(t, vals, marker="o", ms=3, label=name.upper())
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("mean total queue (over-demanded types)")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
