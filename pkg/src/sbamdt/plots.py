"""Figure rendering for report output. Uses the Agg backend only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def pred_vs_truth(truth, mean, sd, path) -> str:
    """Scatter of posterior mean against truth with a unit diagonal."""
    truth = np.asarray(truth, dtype=float)
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.errorbar(truth, mean, yerr=sd, fmt="o", ms=3, alpha=0.5,
                elinewidth=0.6, capsize=0, color="tab:blue")
    lo = min(truth.min(), mean.min())
    hi = max(truth.max(), mean.max())
    ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel("truth")
    ax.set_ylabel("posterior mean")
    ax.set_title("prediction vs truth")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def importance_bars(importance: dict, path) -> str:
    """Horizontal bars of per-feature split shares."""
    labels = list(importance)
    values = [importance[k] for k in labels]
    fig, ax = plt.subplots(figsize=(5, max(2.0, 0.4 * len(labels) + 1)))
    ypos = np.arange(len(labels))
    ax.barh(ypos, values, color="tab:green")
    ax.set_yticks(ypos, labels)
    ax.invert_yaxis()
    ax.set_xlabel("share of splits")
    ax.set_title("feature importance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def residual_hist(truth, mean, path) -> str:
    """Histogram of posterior-mean residuals."""
    resid = np.asarray(mean, dtype=float) - np.asarray(truth, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(resid, bins=min(40, max(10, len(resid) // 10)), color="tab:orange")
    ax.axvline(0.0, color="k", lw=1)
    ax.set_xlabel("posterior mean minus truth")
    ax.set_ylabel("count")
    ax.set_title("residuals")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
