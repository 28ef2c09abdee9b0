"""Synthetic benchmarks on a rotated U-shaped domain and a piecewise square.

Canonical U geometry (before the 45-degree rotation): outer rectangle
[-0.8, 0.8] x [-0.25, 1.6] minus the open notch (-0.3, 0.3) x (0.25, 1.6].
The base straddles the origin so the 0.9-radius circle swallows it whole and
severs both arms, which yields exactly three clusters: the inside of the
circle plus the two arm tips.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset

ROT = np.pi / 4.0
U_X = (-0.8, 0.8)
U_Y = (-0.25, 1.6)
NOTCH_X = (-0.3, 0.3)
NOTCH_Y = 0.25          # notch spans (NOTCH_X) x (NOTCH_Y, U_Y[1]]
CIRCLE_RADIUS = 0.9


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotate(points: np.ndarray, theta: float = ROT) -> np.ndarray:
    return np.atleast_2d(np.asarray(points, dtype=float)) @ _rotation(theta).T


def in_ushape_axis(points: np.ndarray) -> np.ndarray:
    """Membership test in the axis-aligned (unrotated) U."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ux, uy = pts[:, 0], pts[:, 1]
    in_outer = (U_X[0] <= ux) & (ux <= U_X[1]) & (U_Y[0] <= uy) & (uy <= U_Y[1])
    in_notch = (NOTCH_X[0] < ux) & (ux < NOTCH_X[1]) & (uy > NOTCH_Y)
    return in_outer & ~in_notch


def sample_ushape(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws on the rotated U via rejection from the bounding box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        ux = rng.uniform(U_X[0], U_X[1], size=m)
        uy = rng.uniform(U_Y[0], U_Y[1], size=m)
        cand = np.column_stack([ux, uy])
        keep = cand[in_ushape_axis(cand)]
        take = min(len(keep), n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return rotate(out)


def circle_cluster(points: np.ndarray) -> np.ndarray:
    """Cluster labels on the rotated U: 0 inside the circle, 1 and 2 the arms.

    Boundary points (radius exactly 0.9) count as outside. The two outside
    components sit entirely within one arm each, so the sign of the
    unrotated first coordinate identifies the component.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.sqrt((pts * pts).sum(axis=1))
    back = rotate(pts, -ROT)
    labels = np.where(back[:, 0] < 0.0, 1, 2)
    return np.where(r < CIRCLE_RADIUS, 0, labels)


def ushape_truth(points: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Cluster-wise response surface on the rotated U."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x1 = np.asarray(x1, dtype=float)
    s1, s2 = pts[:, 0], pts[:, 1]
    lab = circle_cluster(pts)
    f = np.where(lab == 0, np.sin(3.0 * s1) * x1,
                 np.where(lab == 1, 2.0 + np.cos(3.0 * s2) * x1,
                          -2.0 + s1 * s2))
    return f


def gp_features(points: np.ndarray, n_features: int, rng: np.random.Generator,
                length_scale: float = 0.5, variance: float = 1.0,
                jitter: float = 1e-8) -> np.ndarray:
    """Independent squared-exponential GP draws evaluated at the points.

    Duplicate rows receive exactly identical values: the GP is sampled on the
    unique points and broadcast back.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if n_features < 0:
        raise ValueError("n_features must be >= 0")
    if variance < 0 or length_scale <= 0:
        raise ValueError("variance must be >= 0 and length_scale > 0")
    if n_features == 0:
        return np.zeros((n, 0))
    if variance == 0.0:
        return np.zeros((n, n_features))
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    diff = uniq[:, None, :] - uniq[None, :, :]
    sq = (diff * diff).sum(axis=2)
    cov = variance * np.exp(-sq / (2.0 * length_scale ** 2))
    cov[np.diag_indices_from(cov)] += jitter
    chol = np.linalg.cholesky(cov)
    z = rng.standard_normal((uniq.shape[0], n_features))
    return (chol @ z)[inverse]


def square_truth(s1, s2) -> np.ndarray:
    """Piecewise surface with a smooth quadrant and two constant plateaus."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    smooth = np.sin(7.0 * s1) * np.cos(4.0 * s2)
    bowl = 1.0 + (2.0 / 7.0) * (2.0 * s1 + 1.0) ** 2 + (2.0 * s2 + 1.0) ** 2
    pos = np.where(s2 > 0.0, bowl, smooth)
    neg = np.where(s2 > 0.2, -5.0, 5.0)
    return np.where(s1 >= 0.0, pos, neg)


SCENARIOS = ("ushape", "square")


def simulate(scenario: str, n_train: int, n_test: int, seed: int,
             noise_sd: float = 0.1, n_features: int = 10,
             length_scale: float = 0.5, variance: float = 1.0) -> tuple[Dataset, Dataset]:
    """Draw matched train/test sets; GP features share one realization."""
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    if n_train < 1 or n_test < 0:
        raise ValueError("need n_train >= 1 and n_test >= 0")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    if scenario == "ushape":
        s = sample_ushape(n, rng)
        x = gp_features(s, n_features, rng, length_scale, variance)
        x1 = x[:, 0] if n_features > 0 else np.zeros(n)
        f = ushape_truth(s, x1)
    else:
        s = rng.uniform(-1.0, 1.0, size=(n, 2))
        x = s.copy()
        f = square_truth(s[:, 0], s[:, 1])
    y = f + noise_sd * rng.standard_normal(n)
    train = Dataset(s[:n_train], x[:n_train], y[:n_train], f[:n_train])
    test = Dataset(s[n_train:], x[n_train:], y[n_train:], f[n_train:])
    return train, test
