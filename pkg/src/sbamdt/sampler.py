"""Backfitting MCMC for the additive ensemble of gated decision trees.

Each sweep loops over trees: form the partial residual, propose one tree
move (GROW / PRUNE / CHANGE) through Metropolis-Hastings with the leaf
weights integrated out, draw the new node's decision type on an accepted
GROW, then Gibbs-refresh the leaf weights. The continuous-softness variant
also MH-updates the per-tree softness before the tree move. Noise variance,
leaf variance and the decision-type probabilities are refreshed once per
sweep from their conjugate conditionals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import likelihood, priors
from .priors import Hyperparams, SplitContext, prune_node
from .spectral import KnotSystem
from .trees import HARD, DecisionTree, Node, compute_normalizer, gate_probability, knot_distances

GROW, PRUNE, CHANGE = 0, 1, 2

VARIANTS = ("sk", "s2")
ABLATIONS = ("full", "hard_only", "no_multivariate")


@dataclass
class MoveStats:
    """Proposal and acceptance counters for every move kind."""

    grow_proposed: int = 0
    grow_accepted: int = 0
    prune_proposed: int = 0
    prune_accepted: int = 0
    change_proposed: int = 0
    change_accepted: int = 0
    alpha_proposed: int = 0
    alpha_accepted: int = 0
    chol_jitter: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def mh_accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """Metropolis acceptance; always consumes exactly one uniform."""
    return np.log(rng.random()) < log_ratio


def sample_sigma2(y, f, v: float, lambda_: float, rng) -> float:
    """Inverse-gamma conditional of the noise variance."""
    resid = np.asarray(y, dtype=float) - np.asarray(f, dtype=float)
    shape = 0.5 * (len(resid) + v)
    scale = 0.5 * (resid @ resid + v * lambda_)
    return float(scale / rng.gamma(shape))


def sample_sigma_mu2(leaf_weights, alpha_mu: float, beta_mu: float, rng) -> float:
    """Inverse-gamma conditional of the leaf weight variance.

    leaf_weights: iterable with one weight vector per tree.
    """
    total_leaves = sum(len(m) for m in leaf_weights)
    ssq = sum(float(np.dot(m, m)) for m in leaf_weights)
    shape = alpha_mu + 0.5 * total_leaves
    scale = beta_mu + 0.5 * ssq
    return float(scale / rng.gamma(shape))


def sample_p_a_dirichlet(counts, psi, rng) -> np.ndarray:
    """Dirichlet conditional over decision-type probabilities (fixed levels)."""
    return rng.dirichlet(np.asarray(counts, dtype=float) + np.asarray(psi, dtype=float))


def sample_p_a_beta(n_hard: int, n_soft: int, s_a: float, s_b: float, rng) -> float:
    """Beta conditional of P(hard) (continuous-softness variant)."""
    return float(rng.beta(n_hard + s_a, n_soft + s_b))


def sample_decision(log_masses, logliks, rng) -> int:
    """Draw a decision code with weight prior mass times integrated likelihood."""
    logw = np.asarray(log_masses, dtype=float) + np.asarray(logliks, dtype=float)
    w = np.exp(logw - logsumexp(logw))
    w = w / w.sum()
    return int(rng.choice(len(w), p=w))


def alpha_mh_step(alpha: float, loglik_fn, hyper: Hyperparams, rng) -> tuple[float, bool]:
    """One MH update of a per-tree softness with a Gamma(d, d/alpha) proposal."""
    d = hyper.mh_d
    prop = float(rng.gamma(d, alpha / d))
    log_tr = (2.0 * d - 1.0) * (np.log(alpha) - np.log(prop)) \
        + d * (prop / alpha - alpha / prop)
    log_pr = (hyper.alpha_g - 1.0) * (np.log(prop) - np.log(alpha)) \
        - hyper.beta_g * (prop - alpha)
    log_lr = loglik_fn(prop) - loglik_fn(alpha)
    if mh_accept(log_tr + log_pr + log_lr, rng):
        return prop, True
    return alpha, False


class Sampler:
    """Markov chain state for one chain of the backfitting sampler."""

    def __init__(self, y, s_std, x, system: KnotSystem, hyper: Hyperparams,
                 variant: str = "sk", ablation: str = "full",
                 rng: np.random.Generator | None = None,
                 update_sigma2: bool = True, update_sigma_mu2: bool = True,
                 update_p_a: bool = True):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {ablation!r}")
        if hyper.beta_mu is None or hyper.lambda_ is None:
            raise ValueError("hyperparameters must be resolved before sampling")
        self.y = np.asarray(y, dtype=float)
        self.s_std = np.asarray(s_std, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.system = system
        self.hyper = hyper
        self.variant = variant
        self.ablation = ablation
        self.rng = rng if rng is not None else np.random.default_rng()
        self.update_sigma2 = update_sigma2
        self.update_sigma_mu2 = update_sigma_mu2
        self.update_p_a = update_p_a
        self.n = len(self.y)

        d_m = self.s_std.shape[1]
        p = self.x.shape[1]
        if ablation == "no_multivariate":
            p_m = 0.0
            if p == 0:
                raise ValueError("no-multivariate ablation needs unstructured features")
        elif hyper.p_m is not None:
            p_m = float(hyper.p_m)
        else:
            p_m = priors.multivariate_split_prob(d_m, p)
        grids = [np.linspace(self.x[:, j].min(), self.x[:, j].max(),
                             hyper.cutoff_grid_size) for j in range(p)]
        self.ctx = SplitContext(system, grids, p_m)

        self.k = 1 if variant == "s2" else hyper.k_levels
        # both reduced modes keep every decision hard; no_multivariate is the
        # plain axis-aligned baseline, not a soft-gated one
        if ablation in ("hard_only", "no_multivariate"):
            self.codes = np.array([HARD])
        else:
            self.codes = np.arange(self.k + 1)
        psi = hyper.psi if hyper.psi is not None else tuple([1.0] * (self.k + 1))
        if len(psi) != self.k + 1:
            raise ValueError("psi length must be k + 1")
        self.psi = np.asarray(psi, dtype=float)

        m = hyper.n_trees
        alpha0 = hyper.alpha_g / hyper.beta_g
        self.trees = [DecisionTree(system, alpha=alpha0 if variant == "s2" else None)
                      for _ in range(m)]
        self.phi = [np.ones((self.n, 1)) for _ in range(m)]
        self.g = np.zeros((m, self.n))
        self.sigma2 = float(np.var(self.y))
        if self.sigma2 <= 0:
            self.sigma2 = 1e-6
        self.sigma_mu2 = hyper.beta_mu / (hyper.alpha_mu - 1.0) \
            if hyper.alpha_mu > 1.0 else hyper.beta_mu
        self.p_a = self.psi / self.psi.sum()
        self.p_hard = hyper.s_a / (hyper.s_a + hyper.s_b)
        self.stats = MoveStats()

    # ---- decision bookkeeping -------------------------------------------

    def levels_for(self, tree: DecisionTree) -> np.ndarray:
        if self.variant == "s2":
            return np.array([self.hyper.q * tree.alpha])
        return self.hyper.q * np.asarray(self.hyper.soft_levels, dtype=float)

    def decision_masses(self) -> np.ndarray:
        if self.ablation in ("hard_only", "no_multivariate"):
            return np.array([1.0])
        if self.variant == "s2":
            return np.array([self.p_hard, 1.0 - self.p_hard])
        return self.p_a

    # ---- per-tree residual ----------------------------------------------

    def residual(self, h: int) -> np.ndarray:
        others = np.ones(len(self.trees), dtype=bool)
        others[h] = False
        return self.y - self.g[others].sum(axis=0)

    # ---- tree moves ------------------------------------------------------

    def _leaf_column(self, tree: DecisionTree, node: Node) -> int:
        for i, leaf in enumerate(tree.leaves()):
            if leaf is node:
                return i
        raise ValueError("node is not a leaf of this tree")

    def _parent_of(self, tree: DecisionTree, node: Node) -> Node | None:
        for cand in tree.internal_nodes():
            if cand.left is node or cand.right is node:
                return cand
        return None

    def _candidate_logliks(self, resid, phi_base, col, width, pi, dl, dr, c_eta, levels):
        """Integrated likelihoods with `width` columns at `col` replaced by the
        gated pair (pi * z, pi * (1 - z)) for each candidate decision code."""
        out = np.empty(len(self.codes))
        phis = []
        for j, code in enumerate(self.codes):
            z = gate_probability(int(code), dl, dr, c_eta, levels)
            cand = np.column_stack([phi_base[:, :col], pi * z, pi * (1.0 - z),
                                    phi_base[:, col + width:]])
            out[j] = likelihood.integrated_loglik(resid, cand, self.sigma2, self.sigma_mu2)
            phis.append(cand)
        return out, phis

    def propose_grow(self, h: int, resid: np.ndarray):
        """GROW move; returns True on acceptance."""
        tree = self.trees[h]
        self.stats.grow_proposed += 1
        leaves = tree.leaves()
        leaf = leaves[self.rng.integers(len(leaves))]
        rule = priors.sample_rule(leaf.knot_mask, self.ctx, self.rng)
        if rule is None:
            return False
        depth = tree.node_depths()[id(leaf)]
        dl, dr = knot_distances(rule, self.system, self.s_std, self.x)
        c_eta = compute_normalizer(dl, dr)
        levels = self.levels_for(tree)
        masses = self.decision_masses()
        col = self._leaf_column(tree, leaf)
        phi_cur = self.phi[h]
        pi = phi_cur[:, col]
        logliks, phis = self._candidate_logliks(resid, phi_cur, col, 1, pi, dl, dr, c_eta, levels)
        loglik_cur = likelihood.integrated_loglik(resid, phi_cur, self.sigma2, self.sigma_mu2)
        log_lr = logsumexp(np.log(masses) + logliks) - loglik_cur

        p_grow, p_prune, _ = self.hyper.move_probs
        n_s = len(leaves)
        parent = self._parent_of(tree, leaf)
        n_m_new = len(tree.prune_eligible()) + 1
        if parent is not None and parent.left.is_leaf and parent.right.is_leaf:
            n_m_new -= 1
        p_rule = priors.rule_probability(rule, leaf.knot_mask, self.ctx)
        log_tr = np.log(p_prune) + np.log(n_s) \
            - np.log(p_grow) - np.log(n_m_new) - np.log(p_rule)
        gam_d = priors.p_split(depth, self.hyper.gamma, self.hyper.delta)
        gam_c = priors.p_split(depth + 1, self.hyper.gamma, self.hyper.delta)
        log_tsr = np.log(gam_d) + 2.0 * np.log1p(-gam_c) + np.log(p_rule) \
            - np.log1p(-gam_d)

        if not mh_accept(log_tr + log_tsr + log_lr, self.rng):
            return False
        code = sample_decision(np.log(masses), logliks, self.rng)
        leaf.rule = rule
        leaf.decision = int(self.codes[code])
        leaf.train_dl, leaf.train_dr = dl, dr
        leaf.c_eta = c_eta
        leaf.left = Node(rule.left_mask)
        leaf.right = Node(rule.right_mask)
        leaf.mu = 0.0
        self.phi[h] = phis[code]
        self.stats.grow_accepted += 1
        return True

    def propose_prune(self, h: int, resid: np.ndarray):
        """PRUNE move, the exact inverse of GROW; returns True on acceptance."""
        tree = self.trees[h]
        self.stats.prune_proposed += 1
        eligible = tree.prune_eligible()
        if not eligible:
            return False
        node = eligible[self.rng.integers(len(eligible))]
        depth = tree.node_depths()[id(node)]
        levels = self.levels_for(tree)
        masses = self.decision_masses()
        col = self._leaf_column(tree, node.left)
        phi_cur = self.phi[h]
        pi = phi_cur[:, col] + phi_cur[:, col + 1]
        phi_pruned = np.column_stack([phi_cur[:, :col], pi, phi_cur[:, col + 2:]])
        loglik_pruned = likelihood.integrated_loglik(resid, phi_pruned,
                                                     self.sigma2, self.sigma_mu2)
        logliks, _ = self._candidate_logliks(
            resid, phi_cur, col, 2, pi, node.train_dl, node.train_dr, node.c_eta, levels)
        log_lr = loglik_pruned - logsumexp(np.log(masses) + logliks)

        p_grow, p_prune, _ = self.hyper.move_probs
        n_s = tree.n_leaves
        n_m = len(eligible)
        p_rule = priors.rule_probability(node.rule, node.knot_mask, self.ctx)
        log_tr = np.log(p_grow) + np.log(n_m) + np.log(p_rule) \
            - np.log(p_prune) - np.log(n_s - 1)
        gam_d = priors.p_split(depth, self.hyper.gamma, self.hyper.delta)
        gam_c = priors.p_split(depth + 1, self.hyper.gamma, self.hyper.delta)
        log_tsr = np.log1p(-gam_d) - np.log(gam_d) - 2.0 * np.log1p(-gam_c) \
            - np.log(p_rule)

        if not mh_accept(log_tr + log_tsr + log_lr, self.rng):
            return False
        prune_node(node)
        self.phi[h] = phi_pruned
        self.stats.prune_accepted += 1
        return True

    def propose_change(self, h: int, resid: np.ndarray):
        """CHANGE move: redraw the decision type of one two-leaf internal node."""
        tree = self.trees[h]
        self.stats.change_proposed += 1
        eligible = tree.prune_eligible()
        if not eligible:
            return False
        node = eligible[self.rng.integers(len(eligible))]
        masses = self.decision_masses()
        new_code = int(self.codes[self.rng.integers(len(self.codes))])
        cur_pos = int(np.nonzero(self.codes == node.decision)[0][0])
        new_pos = int(np.nonzero(self.codes == new_code)[0][0])
        levels = self.levels_for(tree)
        col = self._leaf_column(tree, node.left)
        phi_cur = self.phi[h]
        pi = phi_cur[:, col] + phi_cur[:, col + 1]
        z = gate_probability(new_code, node.train_dl, node.train_dr, node.c_eta, levels)
        phi_new = phi_cur.copy()
        phi_new[:, col] = pi * z
        phi_new[:, col + 1] = pi * (1.0 - z)
        log_lr = likelihood.integrated_loglik(resid, phi_new, self.sigma2, self.sigma_mu2) \
            - likelihood.integrated_loglik(resid, phi_cur, self.sigma2, self.sigma_mu2)
        log_tar = np.log(masses[new_pos]) - np.log(masses[cur_pos])

        if not mh_accept(log_tar + log_lr, self.rng):
            return False
        node.decision = new_code
        self.phi[h] = phi_new
        self.stats.change_accepted += 1
        return True

    # ---- sweep ------------------------------------------------------------

    def _alpha_move(self, h: int, resid: np.ndarray):
        tree = self.trees[h]
        self.stats.alpha_proposed += 1
        mu = tree.leaf_mu()

        def loglik_fn(a):
            levels = np.array([self.hyper.q * a])
            phi = tree.phi_train(levels, self.n)
            return likelihood.conditional_loglik(resid, phi, mu, self.sigma2)

        new_alpha, accepted = alpha_mh_step(tree.alpha, loglik_fn, self.hyper, self.rng)
        if accepted:
            tree.alpha = new_alpha
            self.phi[h] = tree.phi_train(self.levels_for(tree), self.n)
            self.g[h] = self.phi[h] @ mu
            self.stats.alpha_accepted += 1

    def update_tree(self, h: int):
        resid = self.residual(h)
        if self.variant == "s2":
            self._alpha_move(h, resid)
        move = self.rng.choice(3, p=np.asarray(self.hyper.move_probs, dtype=float))
        if move == GROW:
            self.propose_grow(h, resid)
        elif move == PRUNE:
            self.propose_prune(h, resid)
        else:
            self.propose_change(h, resid)
        post = likelihood.leaf_posterior(resid, self.phi[h], self.sigma2, self.sigma_mu2)
        if post.jittered:
            self.stats.chol_jitter += 1
        mu = post.sample(self.rng)
        self.trees[h].set_leaf_mu(mu)
        self.g[h] = self.phi[h] @ mu

    def decision_counts(self) -> np.ndarray:
        counts = np.zeros(self.k + 1, dtype=int)
        for tree in self.trees:
            for node in tree.internal_nodes():
                counts[node.decision] += 1
        return counts

    def sweep(self):
        for h in range(len(self.trees)):
            self.update_tree(h)
        f = self.g.sum(axis=0)
        if self.update_sigma2:
            self.sigma2 = sample_sigma2(self.y, f, self.hyper.v,
                                        self.hyper.lambda_, self.rng)
        if self.update_sigma_mu2:
            self.sigma_mu2 = sample_sigma_mu2([t.leaf_mu() for t in self.trees],
                                              self.hyper.alpha_mu,
                                              self.hyper.beta_mu, self.rng)
        if self.update_p_a:
            counts = self.decision_counts()
            if self.variant == "s2":
                self.p_hard = sample_p_a_beta(int(counts[0]), int(counts[1:].sum()),
                                              self.hyper.s_a, self.hyper.s_b, self.rng)
            else:
                self.p_a = sample_p_a_dirichlet(counts, self.psi, self.rng)

    def snapshot(self, iteration: int) -> dict:
        state = {
            "iteration": iteration,
            "sigma2": self.sigma2,
            "sigma_mu2": self.sigma_mu2,
            "trees": [t.to_snapshot() for t in self.trees],
        }
        if self.variant == "s2":
            state["p_A"] = self.p_hard
            state["alpha"] = [t.alpha for t in self.trees]
        else:
            state["p_A"] = [float(v) for v in self.p_a]
            state["alpha"] = None
        return state


def run_chain(sampler: Sampler, n_iter: int, burn_in: int = 0, thin: int = 1,
              collect=True) -> list[dict]:
    """Run sweeps and collect one snapshot per retained iteration."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    if not (0 <= burn_in < n_iter):
        raise ValueError("burn_in must lie in [0, n_iter)")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    states = []
    for it in range(n_iter):
        sampler.sweep()
        if collect and it >= burn_in and (it - burn_in) % thin == 0:
            states.append(sampler.snapshot(it))
    return states
