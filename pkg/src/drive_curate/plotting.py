"""Report figures written next to the CSV outputs.

Figures are rendered with the Agg backend and saved as PNG without the
software/date metadata chunks, so identical inputs give identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.linewidth": 0.8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "svg.hashsalt": "drive-curate",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_bucket_report(report, path) -> Path:
    """Bar chart of PSNR and SSIM per azimuth bucket (empty buckets left blank)."""
    names = [r.bucket for r in report.rows]
    ps = [np.nan if r.psnr_db is None else r.psnr_db for r in report.rows]
    ss = [np.nan if r.ssim is None else r.ssim for r in report.rows]
    x = np.arange(len(names))
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        a1.bar(x, ps, color="#4c72b0")
        a1.set_ylabel("PSNR (dB)")
        a2.bar(x, ss, color="#dd8452")
        a2.set_ylabel("SSIM")
        for ax in (a1, a2):
            ax.set_xticks(x, names)
            ax.set_xlabel("|delta azimuth| bucket (deg)")
        for i, r in enumerate(report.rows):
            a1.annotate(f"n={r.count}", (i, 0), xytext=(0, 2), textcoords="offset points",
                        ha="center", fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def plot_loss_curve(steps, losses, path, smooth: int = 25) -> Path:
    """Training loss per step with a trailing moving average."""
    steps = np.asarray(steps)
    losses = np.asarray(losses, dtype=np.float64)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        ax.plot(steps, losses, color="0.7", lw=0.6, label="per step")
        if smooth > 1 and len(losses) >= smooth:
            kernel = np.ones(smooth) / smooth
            ax.plot(steps[smooth - 1:], np.convolve(losses, kernel, mode="valid"),
                    color="#c44e52", lw=1.2, label=f"mean of {smooth}")
        ax.set_xlabel("step")
        ax.set_ylabel("masked loss")
        if len(losses) and np.all(losses > 0):
            ax.set_yscale("log")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_examples(rows, path, titles=("source", "prediction", "target")) -> Path:
    """Grid with one row per example; each row is a sequence of HxWx3 images."""
    rows = [list(r) for r in rows]
    if not rows:
        raise ValueError("no examples to plot")
    ncol = max(len(r) for r in rows)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(rows), ncol, figsize=(1.8 * ncol, 1.8 * len(rows)),
                                 squeeze=False)
        for i, r in enumerate(rows):
            for j in range(ncol):
                ax = axes[i][j]
                ax.axis("off")
                if j < len(r):
                    img = r[j].data if hasattr(r[j], "data") else r[j]
                    ax.imshow(np.clip(img, 0, 1), interpolation="nearest")
                if i == 0 and j < len(titles):
                    ax.set_title(titles[j])
        fig.tight_layout()
        return _save(fig, path)
