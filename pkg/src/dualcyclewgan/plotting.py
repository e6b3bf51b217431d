"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricsReport  # noqa: E402

golden_mean = (math.sqrt(5) - 1.0) / 2.0
colors = ["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#a8ddb5"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "font.size": 8,
    "font.family": "sans-serif",
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "lines.linewidth": 1.0,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

METRIC_LABELS = [("ssim", "SSIM"), ("psnr", "PSNR (dB)"), ("snr", "SNR (dB)"), ("enl", "ENL")]


def figure(width: float = 6.8, height: float | None = None, nrows: int = 1, ncols: int = 1):
    if height is None:
        height = width * golden_mean
    with plt.rc_context(params):
        return plt.subplots(nrows, ncols, figsize=(width, height), squeeze=False)


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(params):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_training_curves(history: Sequence[Mapping[str, float]], path: str | Path) -> Path:
    fig, ax = figure(6.8, 2.6, 1, 2)
    it = [row["iter"] for row in history]
    for key in ("critic_loss_X", "critic_loss_Y", "gen_loss"):
        ax[0, 0].plot(it, [row[key] for row in history], label=key)
    ax[0, 0].set_xlabel("iteration")
    ax[0, 0].set_title("adversarial terms")
    ax[0, 0].legend(frameon=False)
    ax[0, 1].plot(it, [row["cycle_loss"] for row in history], label="cycle")
    ax[0, 1].plot(it, [row["total"] for row in history], label="total")
    ax[0, 1].set_xlabel("iteration")
    ax[0, 1].set_title("objective")
    ax[0, 1].legend(frameon=False)
    return save(fig, path)


def plot_stage_panel(noisy, clean1, noise1, clean2, reference=None, path: str | Path = "stages.png") -> Path:
    """Input, stage-1 output, merged image, stage-2 output (and reference)."""
    panels = [("noise", noisy), ("clean1", clean1), ("noise1 (merged)", noise1), ("clean2", clean2)]
    if reference is not None:
        panels.append(("reference", reference))
    fig, ax = figure(1.6 * len(panels), 1.9, 1, len(panels))
    for a, (title, img) in zip(ax[0], panels):
        a.imshow(np.asarray(img), cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        a.set_title(title)
        a.axis("off")
    return save(fig, path)


def plot_metric_bars(rows: Mapping[str, MetricsReport], path: str | Path,
                     baseline: MetricsReport | None = None) -> Path:
    """One bar group per metric; ``baseline`` (e.g. the noisy input) drawn dashed."""
    names = list(rows)
    fig, ax = figure(6.8, 2.4, 1, 4)
    for a, (field, label) in zip(ax[0], METRIC_LABELS):
        vals = [getattr(rows[n], field) for n in names]
        finite = [v if math.isfinite(v) else np.nan for v in vals]
        a.bar(range(len(names)), finite, color=colors[: len(names)] or colors[0])
        if baseline is not None and math.isfinite(getattr(baseline, field)):
            a.axhline(getattr(baseline, field), color="k", ls="--", lw=0.8, label="noisy input")
        a.set_xticks(range(len(names)))
        a.set_xticklabels(names, rotation=45, ha="right")
        a.set_title(label)
    if baseline is not None:
        ax[0, 0].legend(frameon=False)
    return save(fig, path)


def plot_metric_distributions(reports: Sequence[MetricsReport], path: str | Path) -> Path:
    fig, ax = figure(6.8, 2.0, 1, 4)
    for a, (field, label) in zip(ax[0], METRIC_LABELS):
        vals = np.array([getattr(r, field) for r in reports], dtype=np.float64)
        vals = vals[np.isfinite(vals)]
        if vals.size:
            a.hist(vals, bins=min(20, max(3, vals.size // 3)), color=colors[1])
        a.set_title(label)
    return save(fig, path)
