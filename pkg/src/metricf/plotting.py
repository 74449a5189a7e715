"""Report figures written next to the JSON/text output."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.8),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def metric_bars(reports: Mapping[str, EvalReport], path, title: str = "") -> Path:
    """Grouped bars (one group per metric, one bar per model) with std error bars."""
    names = list(reports)
    metrics: list[str] = []
    for rep in reports.values():
        metrics += [m for m in rep.summary() if m not in metrics]
    x = np.arange(len(metrics))
    width = 0.8 / max(len(names), 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for j, name in enumerate(names):
            s = reports[name].summary()
            means = [s[m]["mean"] if m in s else np.nan for m in metrics]
            stds = [s[m]["std"] if m in s else 0.0 for m in metrics]
            ax.bar(x + (j - (len(names) - 1) / 2) * width, means, width, yerr=stds, capsize=2, label=name)
        ax.set_xticks(x, metrics)
        ax.set_ylabel("mean over splits")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0), fontsize=8)
        return _save(fig, path)


def training_curves(histories: list[list[dict]], path, key: str = "loss") -> Path:
    """Per-epoch ``key`` for every repeat."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for r, hist in enumerate(histories):
            ax.plot([h["epoch"] for h in hist], [h[key] for h in hist], marker=".", lw=1, label=f"split {r + 1}")
        ax.set_xlabel("epoch")
        ax.set_ylabel(key)
        ax.legend(fontsize=8)
        return _save(fig, path)


def sensitivity(key: str, values: list, reports: list[EvalReport], metric: str, path) -> Path:
    """Mean +- std of ``metric`` against the swept ``key``."""
    means = [rep.summary()[metric]["mean"] for rep in reports]
    stds = [rep.summary()[metric]["std"] for rep in reports]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        numeric = all(isinstance(v, (int, float)) for v in values)
        x = values if numeric else list(range(len(values)))
        ax.errorbar(x, means, yerr=stds, marker="o", capsize=3)
        if not numeric:
            ax.set_xticks(x, [str(v) for v in values])
        ax.set_xlabel(key)
        ax.set_ylabel(metric)
        return _save(fig, path)
