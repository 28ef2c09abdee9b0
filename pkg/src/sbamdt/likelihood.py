"""Gaussian likelihoods for one tree's leaf weights, exact and integrated.

With leaf basis Phi (rows sum to one) and residual vector R, the conditional
model is R_i ~ N(Phi_i . M, sigma2) and the leaf weights have prior
M ~ N(0, sigma_mu2 I). Integrating M out in closed form gives the marginal
used by the tree moves; the same factorization yields the Gibbs conditional
N(mu_hat, Omega) with Omega^{-1} = I/sigma_mu2 + sum_i Phi_i Phi_i^T / sigma2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

LOG_2PI = float(np.log(2.0 * np.pi))


def conditional_loglik(resid: np.ndarray, phi: np.ndarray, mu: np.ndarray,
                       sigma2: float) -> float:
    """Log N(R | Phi mu, sigma2 I)."""
    resid = np.asarray(resid, dtype=float)
    err = resid - phi @ mu
    n = resid.shape[0]
    return float(-0.5 * n * (LOG_2PI + np.log(sigma2)) - 0.5 * err @ err / sigma2)


def _factor(resid, phi, sigma2, sigma_mu2):
    """Cholesky of Omega^{-1} plus the posterior mean; jitters once if needed."""
    n_leaves = phi.shape[1]
    prec = phi.T @ phi / sigma2 + np.eye(n_leaves) / sigma_mu2
    jittered = False
    try:
        chol = cholesky(prec, lower=True)
    except LinAlgError:
        prec = prec + (1e-10 * np.trace(prec) / n_leaves) * np.eye(n_leaves)
        chol = cholesky(prec, lower=True)
        jittered = True
    b = phi.T @ resid / sigma2
    mean = cho_solve((chol, True), b)
    return b, chol, mean, jittered


@dataclass
class LeafPosterior:
    """Gaussian conditional of the leaf weights: N(mean, Omega)."""

    mean: np.ndarray
    chol_prec: np.ndarray   # lower Cholesky factor of Omega^{-1}
    jittered: bool

    def covariance(self) -> np.ndarray:
        return cho_solve((self.chol_prec, True), np.eye(len(self.mean)))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(len(self.mean))
        return self.mean + solve_triangular(self.chol_prec, z, trans="T", lower=True)


def leaf_posterior(resid, phi, sigma2: float, sigma_mu2: float) -> LeafPosterior:
    resid = np.asarray(resid, dtype=float)
    phi = np.asarray(phi, dtype=float)
    _, chol, mean, jittered = _factor(resid, phi, sigma2, sigma_mu2)
    return LeafPosterior(mean, chol, jittered)


def integrated_loglik(resid, phi, sigma2: float, sigma_mu2: float) -> float:
    """Log marginal of R with the leaf weights integrated out.

    log |2 pi Omega|^(1/2) - (n/2) log(2 pi sigma2) - (L/2) log(2 pi sigma_mu2)
    - ||R||^2 / (2 sigma2) + mu_hat^T Omega^{-1} mu_hat / 2.
    """
    resid = np.asarray(resid, dtype=float)
    phi = np.asarray(phi, dtype=float)
    n, n_leaves = phi.shape
    b, chol, mean, _ = _factor(resid, phi, sigma2, sigma_mu2)
    logdet_prec = 2.0 * float(np.log(np.diag(chol)).sum())
    out = 0.5 * (n_leaves * LOG_2PI - logdet_prec)
    out -= 0.5 * n * (LOG_2PI + np.log(sigma2))
    out -= 0.5 * n_leaves * (LOG_2PI + np.log(sigma_mu2))
    out -= 0.5 * float(resid @ resid) / sigma2
    out += 0.5 * float(mean @ b)
    return float(out)
