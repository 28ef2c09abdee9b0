"""Point and distributional accuracy metrics."""

from __future__ import annotations

import numpy as np


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.atleast_1d(np.asarray(pred, dtype=float))
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if pred.ndim != 1 or truth.ndim != 1:
        raise ValueError("predictions and truth must be one-dimensional")
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if pred.size == 0:
        raise ValueError("empty inputs")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(truth))):
        raise ValueError("non-finite values in metric inputs")
    return pred, truth


def rmspe(pred, truth) -> float:
    """Root mean squared prediction error."""
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mape(pred, truth) -> float:
    """Mean absolute prediction error."""
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def crps_empirical(draws, truth) -> np.ndarray:
    """Per-point CRPS of an empirical predictive ensemble.

    ``draws`` has shape (n_draws, n_points). Uses the identity
    CRPS = E|X - y| - 0.5 E|X - X'| with X, X' drawn independently from the
    ensemble (all ordered pairs, self-pairs included); the pairwise term is
    evaluated in O(S log S) from the sorted draws.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    if draws.ndim != 2:
        raise ValueError("draws must be a (n_draws, n_points) matrix")
    s, n = draws.shape
    if s < 2:
        raise ValueError("need at least 2 draws per point")
    truth = np.asarray(truth, dtype=float).ravel()
    if truth.shape != (n,):
        raise ValueError("truth length must match the number of points")
    term1 = np.mean(np.abs(draws - truth[None, :]), axis=0)
    srt = np.sort(draws, axis=0)
    w = 2.0 * np.arange(s) + 1.0 - s
    term2 = (w[:, None] * srt).sum(axis=0) / (s * s)
    return term1 - term2


def crps_mean(draws, truth) -> float:
    return float(np.mean(crps_empirical(draws, truth)))


def metric_report(pred_mean, draws, truth) -> dict:
    """Bundle of rmspe, mape, and mean CRPS against a common truth."""
    return {
        "rmspe": rmspe(pred_mean, truth),
        "mape": mape(pred_mean, truth),
        "crps": crps_mean(draws, truth),
    }
