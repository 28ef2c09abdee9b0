"""Decision trees whose internal nodes mix hard and soft (logistic) gates.

Every internal node holds a split rule over either one unstructured feature
(univariate, threshold on x_j) or the structured space (multivariate,
spanning-tree bipartition of the node's reference knots). Routing is always
by distance to the nearest knot on each side; the decision type selects a
hard indicator or a logistic gate with one of the softness levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .spectral import KnotSystem

HARD = 0  # decision code; soft levels use codes 1..k


@dataclass(frozen=True)
class SplitRule:
    """Split rule; left/right knot sets are stored as bitmasks over knots."""

    kind: str                  # "univariate" | "multivariate"
    left_mask: int
    right_mask: int
    feature: int | None = None
    cutoff: float | None = None

    def __post_init__(self):
        if self.kind not in ("univariate", "multivariate"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.left_mask == 0 or self.right_mask == 0:
            raise ValueError("each side of a split must hold at least one knot")
        if self.left_mask & self.right_mask:
            raise ValueError("knot sides must be disjoint")
        if self.kind == "univariate" and (self.feature is None or self.cutoff is None):
            raise ValueError("univariate rule needs feature and cutoff")

    def signature(self):
        return (self.kind, self.feature, self.cutoff, self.left_mask, self.right_mask)


class Node:
    """Tree node; a leaf has rule None and a scalar weight mu."""

    __slots__ = ("rule", "decision", "c_eta", "left", "right", "mu",
                 "knot_mask", "train_dl", "train_dr")

    def __init__(self, knot_mask: int):
        self.rule: SplitRule | None = None
        self.decision: int = HARD
        self.c_eta: float = 1.0
        self.left: Node | None = None
        self.right: Node | None = None
        self.mu: float = 0.0
        self.knot_mask = knot_mask
        self.train_dl: np.ndarray | None = None
        self.train_dr: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


def knot_distances(rule: SplitRule, system: KnotSystem,
                   s_std: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each point to its nearest knot on each side of a rule.

    Univariate rules measure |x_j - x_j*| on the split feature only;
    multivariate rules use Euclidean distance in the standardized
    structured coordinates.
    """
    left = KnotSystem.indices_of(rule.left_mask)
    right = KnotSystem.indices_of(rule.right_mask)
    if rule.kind == "univariate":
        vals = np.atleast_2d(np.asarray(x, dtype=float))[:, rule.feature]
        dl = np.abs(vals[:, None] - system.xvals[left, rule.feature][None, :]).min(axis=1)
        dr = np.abs(vals[:, None] - system.xvals[right, rule.feature][None, :]).min(axis=1)
    else:
        pts = np.atleast_2d(np.asarray(s_std, dtype=float))
        dl = _min_dist(pts, system.coords[left])
        dr = _min_dist(pts, system.coords[right])
    return dl, dr


def _min_dist(points: np.ndarray, knots: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - knots[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2).min(axis=1))


def compute_normalizer(dl: np.ndarray, dr: np.ndarray) -> float:
    """Scale C = max over observations of the larger of the two distances."""
    c = float(max(dl.max(), dr.max()))
    return c if c > 0.0 else 1.0


def gate_probability(decision: int, dl, dr, c_eta: float, levels: np.ndarray):
    """P(go left). Hard: indicator d_L <= d_R. Soft: logistic in (d_R - d_L)."""
    dl = np.asarray(dl, dtype=float)
    dr = np.asarray(dr, dtype=float)
    if decision == HARD:
        return (dl <= dr).astype(float)
    alpha = levels[decision - 1]
    return expit(alpha * (dr - dl) / c_eta)


class DecisionTree:
    """Mutable decision tree over a fixed knot system."""

    def __init__(self, system: KnotSystem, alpha: float | None = None):
        self.system = system
        self.root = Node(system.full_mask())
        self.alpha = alpha  # per-tree softness (continuous-softness variant)

    def leaves(self) -> list[Node]:
        out: list[Node] = []
        _collect(self.root, out, leaf=True)
        return out

    def internal_nodes(self) -> list[Node]:
        out: list[Node] = []
        _collect(self.root, out, leaf=False)
        return out

    def node_depths(self) -> dict[int, int]:
        """Map id(node) -> depth for every node."""
        depths = {}

        def rec(node, d):
            depths[id(node)] = d
            if not node.is_leaf:
                rec(node.left, d + 1)
                rec(node.right, d + 1)

        rec(self.root, 0)
        return depths

    def prune_eligible(self) -> list[Node]:
        return [n for n in self.internal_nodes()
                if n.left.is_leaf and n.right.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def leaf_mu(self) -> np.ndarray:
        return np.array([lf.mu for lf in self.leaves()], dtype=float)

    def set_leaf_mu(self, mu: np.ndarray):
        for lf, m in zip(self.leaves(), mu, strict=True):
            lf.mu = float(m)

    def phi_train(self, levels: np.ndarray, n_train: int) -> np.ndarray:
        """Leaf basis on the training points, using per-node cached distances."""
        cols: list[np.ndarray] = []
        _phi_rec(self.root, np.ones(n_train), levels, cols, None)
        return np.column_stack(cols)

    def phi_points(self, s_std: np.ndarray, x: np.ndarray, levels: np.ndarray,
                   memo: dict | None = None) -> np.ndarray:
        """Leaf basis at arbitrary points; distances computed on the fly."""
        pts = np.atleast_2d(np.asarray(s_std, dtype=float))
        n = pts.shape[0]
        provider = _DistProvider(self.system, pts, np.atleast_2d(np.asarray(x, dtype=float)), memo)
        cols: list[np.ndarray] = []
        _phi_rec(self.root, np.ones(n), levels, cols, provider)
        return np.column_stack(cols)

    def predict_points(self, s_std, x, levels, memo=None) -> np.ndarray:
        return self.phi_points(s_std, x, levels, memo) @ self.leaf_mu()

    def to_snapshot(self) -> list[dict]:
        """Flat node list in preorder; multivariate rules carry their knot sides."""
        nodes: list[dict] = []

        def rec(node, parent_id):
            nid = len(nodes)
            entry: dict = {"id": nid, "parent": parent_id, "is_leaf": node.is_leaf}
            if node.is_leaf:
                entry["mu"] = node.mu
            else:
                rule: dict = {"kind": node.rule.kind}
                if node.rule.kind == "univariate":
                    rule["feature"] = node.rule.feature
                    rule["cutoff"] = node.rule.cutoff
                else:
                    rule["left_knots"] = [int(i) for i in KnotSystem.indices_of(node.rule.left_mask)]
                    rule["right_knots"] = [int(i) for i in KnotSystem.indices_of(node.rule.right_mask)]
                entry["rule"] = rule
                entry["decision"] = node.decision
                entry["c_eta"] = node.c_eta
            nodes.append(entry)
            if not node.is_leaf:
                rec(node.left, nid)
                rec(node.right, nid)

        rec(self.root, None)
        return nodes

    @classmethod
    def from_snapshot(cls, nodes: list[dict], system: KnotSystem,
                      alpha: float | None = None) -> "DecisionTree":
        tree = cls(system, alpha=alpha)
        built: dict[int, Node] = {}
        children: dict[int, list[int]] = {}
        for entry in nodes:
            pid = entry["parent"]
            if pid is not None:
                children.setdefault(pid, []).append(entry["id"])
        by_id = {e["id"]: e for e in nodes}

        def build(nid, mask):
            entry = by_id[nid]
            node = Node(mask)
            built[nid] = node
            if entry["is_leaf"]:
                node.mu = float(entry["mu"])
                return node
            spec = entry["rule"]
            if spec["kind"] == "univariate":
                f, c = int(spec["feature"]), float(spec["cutoff"])
                left = 0
                for i in KnotSystem.indices_of(mask):
                    if system.xvals[i, f] <= c:
                        left |= 1 << int(i)
                rule = SplitRule("univariate", left, mask & ~left, feature=f, cutoff=c)
            else:
                lm = KnotSystem.mask_of(spec["left_knots"])
                rm = KnotSystem.mask_of(spec["right_knots"])
                rule = SplitRule("multivariate", lm, rm)
            node.rule = rule
            node.decision = int(entry["decision"])
            node.c_eta = float(entry["c_eta"])
            kids = children[nid]
            node.left = build(kids[0], rule.left_mask)
            node.right = build(kids[1], rule.right_mask)
            return node

        tree.root = build(nodes[0]["id"], system.full_mask())
        return tree


class _DistProvider:
    """Computes (and optionally memoizes) per-rule knot distances for a point set."""

    def __init__(self, system, s_std, x, memo):
        self.system = system
        self.s_std = s_std
        self.x = x
        self.memo = memo

    def get(self, node: Node):
        if self.memo is None:
            return knot_distances(node.rule, self.system, self.s_std, self.x)
        key = node.rule.signature()
        hit = self.memo.get(key)
        if hit is None:
            hit = knot_distances(node.rule, self.system, self.s_std, self.x)
            self.memo[key] = hit
        return hit


def _phi_rec(node: Node, prob: np.ndarray, levels: np.ndarray,
             cols: list[np.ndarray], provider: _DistProvider | None):
    if node.is_leaf:
        cols.append(prob)
        return
    if provider is None:
        dl, dr = node.train_dl, node.train_dr
    else:
        dl, dr = provider.get(node)
    z = gate_probability(node.decision, dl, dr, node.c_eta, levels)
    _phi_rec(node.left, prob * z, levels, cols, provider)
    _phi_rec(node.right, prob * (1.0 - z), levels, cols, provider)


def _collect(node: Node, out: list[Node], leaf: bool):
    if node.is_leaf:
        if leaf:
            out.append(node)
        return
    if not leaf:
        out.append(node)
    _collect(node.left, out, leaf)
    _collect(node.right, out, leaf)


def leaf_path_probability(tree: DecisionTree, s_std, x, levels) -> np.ndarray:
    """Probability of each leaf for a single point (a row of the leaf basis)."""
    phi = tree.phi_points(np.atleast_2d(s_std), np.atleast_2d(x), levels)
    return phi[0]


def tree_predict(tree: DecisionTree, s_std, x, levels) -> np.ndarray:
    """Gate-weighted sum of leaf weights at the given points."""
    return tree.predict_points(s_std, x, levels)
