"""Gaussian-process views of the tree ensemble prior and posterior.

A sum of trees with normal leaf values is, conditionally on the tree
structures, a degenerate Gaussian process. These helpers compute its
covariance in closed form and cross-check the algebra against brute-force
Monte Carlo simulation of the same generative model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import likelihood
from .priors import Hyperparams
from .trees import DecisionTree, gate_probability, knot_distances


def tree_levels(tree: DecisionTree, hyper: Hyperparams) -> tuple[float, ...]:
    """Soft gate sharpness levels in effect for one tree."""
    if tree.alpha is not None:
        return (hyper.q * tree.alpha,)
    return tuple(hyper.q * l for l in hyper.soft_levels)


def _phi_stack(trees, s_std, x, hyper) -> np.ndarray:
    blocks = []
    for tree in trees:
        memo: dict = {}
        blocks.append(tree.phi_points(s_std, x, tree_levels(tree, hyper), memo))
    return np.hstack(blocks)


def prior_cov_given_ta(trees, s, x, hyper: Hyperparams) -> np.ndarray:
    """Prior covariance conditional on tree structures and decision codes.

    Leaf values are iid N(0, sigma_mu^2) with sigma_mu^2 integrated against
    its inverse-gamma prior, so C = beta_mu/(alpha_mu - 1) * sum_h Phi Phi^T.
    Requires alpha_mu > 1 for the prior mean to exist.
    """
    if hyper.alpha_mu <= 1.0:
        raise ValueError("alpha_mu must exceed 1 for a finite prior variance")
    if hyper.beta_mu is None:
        raise ValueError("beta_mu must be resolved to a number")
    s_std = trees[0].system.standardize(s)
    phi = _phi_stack(trees, s_std, np.atleast_2d(np.asarray(x, dtype=float)), hyper)
    return hyper.beta_mu / (hyper.alpha_mu - 1.0) * (phi @ phi.T)


def prior_cov_given_t(trees, s, x, hyper: Hyperparams, masses) -> np.ndarray:
    """Prior covariance conditional on tree structures only.

    Decision codes are additionally integrated out: independence of the codes
    across nodes factorizes each leaf's contribution into per-node terms
    sum_v p_v G_v(d_i) G_v(d_j) accumulated down the path.
    """
    if hyper.alpha_mu <= 1.0:
        raise ValueError("alpha_mu must exceed 1 for a finite prior variance")
    if hyper.beta_mu is None:
        raise ValueError("beta_mu must be resolved to a number")
    masses = np.asarray(masses, dtype=float)
    if masses.ndim != 1 or abs(masses.sum() - 1.0) > 1e-9 or (masses < 0).any():
        raise ValueError("masses must be a probability vector")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    total = None
    for tree in trees:
        s_std = tree.system.standardize(s)
        n = s_std.shape[0]
        levels = tree_levels(tree, hyper)
        if len(masses) != len(levels) + 1:
            raise ValueError("masses length must be one more than the level count")
        acc = np.zeros((n, n))

        def walk(node, prod):
            nonlocal acc
            if node.is_leaf:
                acc = acc + prod
                return
            dl, dr = knot_distances(node.rule, tree.system, s_std, x)
            left = np.zeros((n, n))
            right = np.zeros((n, n))
            for code, p_code in enumerate(masses):
                if p_code == 0.0:
                    continue
                g = gate_probability(code, dl, dr, node.c_eta, levels)
                left += p_code * np.outer(g, g)
                right += p_code * np.outer(1.0 - g, 1.0 - g)
            walk(node.left, prod * left)
            walk(node.right, prod * right)

        walk(tree.root, np.ones((n, n)))
        total = acc if total is None else total + acc
    return hyper.beta_mu / (hyper.alpha_mu - 1.0) * total


@dataclass
class CovarianceReport:
    """Analytic covariance against its Monte Carlo estimate."""

    analytic: np.ndarray
    mc: np.ndarray
    mc_se: np.ndarray
    max_abs_dev: float
    psd: bool
    n_draws: int

    def within(self, n_se: float, atol: float = 1e-12) -> bool:
        """True when every entry deviates by at most n_se standard errors."""
        bound = n_se * self.mc_se + atol
        return bool((np.abs(self.analytic - self.mc) <= bound).all())

    def as_dict(self) -> dict:
        return {
            "analytic": self.analytic.tolist(),
            "mc": self.mc.tolist(),
            "mc_se": self.mc_se.tolist(),
            "max_abs_dev": self.max_abs_dev,
            "psd": self.psd,
            "n_draws": self.n_draws,
        }


def _report(analytic: np.ndarray, prods: np.ndarray) -> CovarianceReport:
    n_draws = prods.shape[0]
    mc = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / np.sqrt(n_draws)
    eigs = np.linalg.eigvalsh(analytic)
    psd = bool(eigs.min() >= -1e-8 * max(1.0, abs(eigs.max())))
    return CovarianceReport(analytic, mc, se,
                            float(np.abs(analytic - mc).max()), psd, n_draws)


def _draw_sigma_mu2(hyper: Hyperparams, n_draws: int, rng) -> np.ndarray:
    return hyper.beta_mu / rng.gamma(hyper.alpha_mu, 1.0, size=n_draws)


def mc_prior_ta(trees, s, x, hyper: Hyperparams, n_draws: int,
                rng: np.random.Generator) -> CovarianceReport:
    """Monte Carlo check of prior_cov_given_ta by simulating leaf values."""
    analytic = prior_cov_given_ta(trees, s, x, hyper)
    s_std = trees[0].system.standardize(s)
    phi = _phi_stack(trees, s_std, np.atleast_2d(np.asarray(x, dtype=float)), hyper)
    sig2 = _draw_sigma_mu2(hyper, n_draws, rng)
    z = rng.standard_normal((n_draws, phi.shape[1]))
    f = (z * np.sqrt(sig2)[:, None]) @ phi.T
    prods = f[:, :, None] * f[:, None, :]
    return _report(analytic, prods)


def _combo_phis(tree: DecisionTree, s_std, x, hyper, masses):
    """Enumerate decision-code assignments with their probabilities."""
    internal = tree.internal_nodes()
    levels = tree_levels(tree, hyper)
    codes = [c for c, p in enumerate(masses) if p > 0.0]
    saved = [node.decision for node in internal]
    phis, probs = [], []
    for combo in itertools.product(codes, repeat=len(internal)):
        p = 1.0
        for node, code in zip(internal, combo):
            node.decision = code
            p *= masses[code]
        phis.append(tree.phi_points(s_std, x, levels, {}))
        probs.append(p)
    for node, dec in zip(internal, saved):
        node.decision = dec
    return np.array(phis), np.asarray(probs, dtype=float)


def mc_prior_t(trees, s, x, hyper: Hyperparams, masses, n_draws: int,
               rng: np.random.Generator) -> CovarianceReport:
    """Monte Carlo check of prior_cov_given_t, resampling decision codes."""
    analytic = prior_cov_given_t(trees, s, x, hyper, masses)
    masses = np.asarray(masses, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sig2 = _draw_sigma_mu2(hyper, n_draws, rng)
    n_pts = np.atleast_2d(np.asarray(s, dtype=float)).shape[0]
    f = np.zeros((n_draws, n_pts))
    for tree in trees:
        s_std = tree.system.standardize(s)
        phis, probs = _combo_phis(tree, s_std, x, hyper, masses)
        idx = rng.choice(len(probs), size=n_draws, p=probs / probs.sum())
        z = rng.standard_normal((n_draws, phis.shape[2]))
        mu = z * np.sqrt(sig2)[:, None]
        f += np.einsum("nl,npl->np", mu, phis[idx])
    prods = f[:, :, None] * f[:, None, :]
    return _report(analytic, prods)


def posterior_tree_moments(trees, h: int, y_scaled, train_s, train_x,
                           s, x, sigma2: float, sigma_mu2: float,
                           hyper: Hyperparams):
    """Posterior mean and covariance of the ensemble fit at new points,
    integrating only tree h's leaf values and conditioning on the rest."""
    if not 0 <= h < len(trees):
        raise ValueError("tree index out of range")
    y_scaled = np.asarray(y_scaled, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    system = trees[h].system
    train_std = system.standardize(train_s)
    pts_std = system.standardize(s)
    resid = y_scaled.copy()
    other_mean = np.zeros(pts_std.shape[0])
    for j, tree in enumerate(trees):
        if j == h:
            continue
        levels = tree_levels(tree, hyper)
        resid -= tree.phi_train(levels, len(y_scaled)) @ tree.leaf_mu()
        other_mean += tree.predict_points(pts_std, x, levels, {})
    levels_h = tree_levels(trees[h], hyper)
    phi_train = trees[h].phi_train(levels_h, len(y_scaled))
    post = likelihood.leaf_posterior(resid, phi_train, sigma2, sigma_mu2)
    phi_pts = trees[h].phi_points(pts_std, x, levels_h, {})
    mean = phi_pts @ post.mean + other_mean
    cov = phi_pts @ post.covariance() @ phi_pts.T
    return mean, cov


def posterior_empirical_moments(f_draws) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of posterior function draws."""
    f_draws = np.asarray(f_draws, dtype=float)
    if f_draws.ndim != 2 or f_draws.shape[0] < 2:
        raise ValueError("need a (n_draws, n_points) matrix with >= 2 draws")
    mean = f_draws.mean(axis=0)
    cov = np.cov(f_draws, rowvar=False, ddof=1)
    return mean, np.atleast_2d(cov)
