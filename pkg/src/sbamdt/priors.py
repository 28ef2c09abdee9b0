"""Priors and proposal laws for the additive tree ensemble."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .spectral import KnotSystem
from .trees import HARD, DecisionTree, Node, SplitRule, compute_normalizer, knot_distances


@dataclass
class Hyperparams:
    """Model hyperparameters; None fields are calibrated from the data at fit time."""

    n_trees: int = 30
    gamma: float = 0.95           # split prob at depth 0
    delta: float = 2.0            # split prob depth decay
    p_m: float | None = None      # multivariate branch prob, default d_M / (d_M + p)
    soft_levels: tuple = (0.5, 1.0, 2.0)
    q: float = 8.0                # softness multiplier applied to every soft gate
    psi: tuple | None = None      # Dirichlet prior over decision types (fixed-levels variant)
    s_a: float = 1.0              # Beta prior on P(hard) (continuous-softness variant)
    s_b: float = 2.0
    alpha_g: float = 1.0          # Gamma(shape, rate) prior on per-tree softness
    beta_g: float = 0.5
    mh_d: float = 20.0            # shape of the softness MH proposal
    alpha_mu: float = 3.0         # InvGamma prior on leaf weight variance
    beta_mu: float | None = None  # default 0.5 * Var(y) / n_trees (on the scaled response)
    v: float = 3.0                # InvGamma prior on noise variance
    lambda_: float | None = None  # default: 90th-percentile calibration to the sample variance
    n_knots: int = 100
    embedding_dim: int | None = None   # default min(3, n_knots - 1)
    zero_tol: float = 1e-8
    cutoff_grid_size: int = 100
    move_probs: tuple = (0.4, 0.4, 0.2)   # GROW, PRUNE, CHANGE

    @property
    def k_levels(self) -> int:
        return len(self.soft_levels)


def p_split(depth: int, gamma: float, delta: float) -> float:
    """Galton-Watson split probability gamma / (1 + depth)^delta."""
    return gamma * (1.0 + depth) ** (-delta)


def multivariate_split_prob(d_m: int, p: int) -> float:
    """Probability of choosing a multivariate rule: d_M / (d_M + p)."""
    if d_m < 1:
        raise ValueError("need at least one structured dimension")
    if p < 0:
        raise ValueError("negative feature count")
    return d_m / (d_m + p)


def calibrate_lambda(sample_var: float, v: float, quantile: float = 0.10) -> float:
    """Scale of the noise variance prior so P(sigma^2 < sample_var) = 1 - quantile."""
    if sample_var <= 0:
        raise ValueError("sample variance must be positive")
    return sample_var * chi2.ppf(quantile, v) / v


@dataclass
class SplitContext:
    """Everything rule sampling needs: knots, cutoff grids, branch probability."""

    system: KnotSystem
    grids: list  # per unstructured feature, array of candidate cutoffs
    p_m: float

    @property
    def n_features(self) -> int:
        return len(self.grids)


def sample_rule(node_mask: int, ctx: SplitContext, rng: np.random.Generator,
                max_attempts: int = 20) -> SplitRule | None:
    """Draw a split rule for a node, or None when no valid rule comes up.

    Multivariate branch: two distinct knots uniformly, one edge uniformly on
    their spanning-tree path, bipartition by removing it. Univariate branch:
    feature and grid cutoff uniformly; a cutoff leaving one side without a
    knot is rejected and the whole draw repeated, up to max_attempts.
    """
    t_eta = node_mask.bit_count()
    mult_ok = t_eta >= 2
    uni_ok = ctx.n_features > 0
    if not mult_ok and not uni_ok:
        return None
    node_idx = KnotSystem.indices_of(node_mask)
    for _ in range(max_attempts):
        if mult_ok and (not uni_ok or rng.random() < ctx.p_m):
            u, v = rng.choice(node_idx, size=2, replace=False)
            path = ctx.system.path_edge_children(int(u), int(v))
            child = path[rng.integers(len(path))]
            inside, rest = ctx.system.split_mask(node_mask, child)
            if (inside >> int(u)) & 1:
                left, right = inside, rest
            else:
                left, right = rest, inside
            return SplitRule("multivariate", left, right)
        if uni_ok:
            f = int(rng.integers(ctx.n_features))
            c = float(ctx.grids[f][rng.integers(len(ctx.grids[f]))])
            left = 0
            for i in node_idx:
                if ctx.system.xvals[i, f] <= c:
                    left |= 1 << int(i)
            right = node_mask & ~left
            if left and right:
                return SplitRule("univariate", left, right, feature=f, cutoff=c)
    return None


def rule_probability(rule: SplitRule, node_mask: int, ctx: SplitContext) -> float:
    """Probability of a rule under the sampling law at this node.

    Branch probabilities renormalize over the branches actually available
    (multivariate needs two knots, univariate needs a feature grid). The
    multivariate mass sums over every (knot pair, path edge) draw producing
    the same bipartition.
    """
    t_eta = node_mask.bit_count()
    pm = ctx.p_m if t_eta >= 2 else 0.0
    pu = (1.0 - ctx.p_m) if ctx.n_features > 0 else 0.0
    total = pm + pu
    if total == 0.0:
        raise ValueError("node admits no rule")
    pm, pu = pm / total, pu / total
    if rule.kind == "univariate":
        return pu / ctx.n_features / len(ctx.grids[rule.feature])
    if rule.left_mask | rule.right_mask != node_mask:
        raise ValueError("rule does not partition the node's knot set")
    sides = {rule.left_mask, rule.right_mask}
    n_edges = sum(1 for child in ctx.system.desc_mask
                  if (node_mask & ctx.system.desc_mask[child]) in sides)
    i1 = KnotSystem.indices_of(rule.left_mask)
    i2 = KnotSystem.indices_of(rule.right_mask)
    cross = float((1.0 / ctx.system.path_len[np.ix_(i1, i2)]).sum())
    pairs = t_eta * (t_eta - 1) / 2
    return pm * n_edges * cross / pairs


def grow_node(node: Node, rule: SplitRule, decision: int, system: KnotSystem,
              s_std_train: np.ndarray, x_train: np.ndarray):
    """Turn a leaf into an internal node, caching training distances and C_eta."""
    dl, dr = knot_distances(rule, system, s_std_train, x_train)
    node.rule = rule
    node.decision = decision
    node.train_dl, node.train_dr = dl, dr
    node.c_eta = compute_normalizer(dl, dr)
    node.left = Node(rule.left_mask)
    node.right = Node(rule.right_mask)
    node.mu = 0.0


def prune_node(node: Node):
    """Collapse an internal node whose children are leaves back into a leaf."""
    node.rule = None
    node.left = None
    node.right = None
    node.train_dl = node.train_dr = None
    node.c_eta = 1.0


def sample_tree_from_prior(system: KnotSystem, ctx: SplitContext,
                           s_std_train, x_train, gamma: float, delta: float,
                           decision_masses: np.ndarray, sigma_mu2: float,
                           rng: np.random.Generator,
                           max_depth: int | None = None,
                           alpha: float | None = None) -> DecisionTree:
    """Generative draw of a tree: Galton-Watson topology, rules, decisions, leaves."""
    tree = DecisionTree(system, alpha=alpha)
    codes = np.arange(len(decision_masses))

    def rec(node: Node, depth: int):
        capped = max_depth is not None and depth >= max_depth
        if capped or rng.random() >= p_split(depth, gamma, delta):
            node.mu = rng.normal(0.0, np.sqrt(sigma_mu2))
            return
        rule = sample_rule(node.knot_mask, ctx, rng)
        if rule is None:
            node.mu = rng.normal(0.0, np.sqrt(sigma_mu2))
            return
        decision = int(rng.choice(codes, p=decision_masses))
        grow_node(node, rule, decision, system, s_std_train, x_train)
        rec(node.left, depth + 1)
        rec(node.right, depth + 1)

    rec(tree.root, 0)
    return tree
