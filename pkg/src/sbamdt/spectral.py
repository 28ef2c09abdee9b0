"""Spectral infrastructure for structured reference knots.

Pipeline: Gaussian similarity graph on standardized coordinates, normalized
graph Laplacian, spectral embedding into the leading non-null eigenspace,
then a Euclidean minimum spanning tree in the embedded space. Multivariate
splits remove one edge from the path between two knots, which bipartitions
the spanning tree into two connected pieces.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist


def build_similarity(points: np.ndarray) -> np.ndarray:
    """Dense Gaussian similarity matrix w_ij = exp(-||p_i - p_j||^2)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if points.shape[0] < 1:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    sq = cdist(points, points, "sqeuclidean")
    w = np.exp(-sq)
    # enforce exact symmetry and a zero diagonal
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    return w


def normalized_laplacian(weights: np.ndarray) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^{-1/2} W D^{-1/2}."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weights must be square")
    if not np.allclose(w, w.T):
        raise ValueError("weights must be symmetric")
    deg = w.sum(axis=1)
    if np.any(deg <= 0.0):
        raise ValueError("graph has an isolated vertex")
    dinv = 1.0 / np.sqrt(deg)
    lap = np.eye(w.shape[0]) - (dinv[:, None] * w) * dinv[None, :]
    return 0.5 * (lap + lap.T)


def spectral_embedding(laplacian: np.ndarray, k: int, zero_tol: float = 1e-8) -> np.ndarray:
    """Coordinates from the k eigenvectors of the smallest non-zero eigenvalues.

    Eigenvalues below zero_tol relative to the largest one count as null and
    are skipped. Eigenvector signs are fixed so the largest-magnitude entry
    of each column is positive.
    """
    lap = np.asarray(laplacian, dtype=float)
    n = lap.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    vals, vecs = eigh(lap)
    thresh = zero_tol * max(abs(vals[0]), abs(vals[-1]), 1e-300)
    keep = np.nonzero(vals > thresh)[0]
    if len(keep) < k:
        raise ValueError(f"requested {k} non-null eigenvectors, only {len(keep)} available")
    cols = keep[:k]
    emb = vecs[:, cols].copy()
    for j in range(emb.shape[1]):
        lead = np.argmax(np.abs(emb[:, j]))
        if emb[lead, j] < 0:
            emb[:, j] = -emb[:, j]
    return emb


def _norm_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class SpanningTree:
    """Tree on vertices 0..n-1 stored as sorted (u, v) edge tuples."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.edges) != max(self.n - 1, 0):
            raise ValueError("a spanning tree on n vertices has n-1 edges")
        for u, v in self.edges:
            if not (0 <= u < v < self.n):
                raise ValueError("edge endpoints out of range or unsorted")
        if self.n > 0 and len(_components(range(self.n), self.edges)) != 1:
            raise ValueError("edges do not connect all vertices")

    def adjacency(self) -> dict[int, list[int]]:
        return _adjacency(range(self.n), self.edges)

    @property
    def vertices(self) -> tuple[int, ...]:
        return tuple(range(self.n))


@dataclass(frozen=True)
class SubtreeHandle:
    """Connected piece of a spanning tree: vertex subset plus induced edges."""

    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        vs = set(self.vertices)
        if len(vs) != len(self.vertices):
            raise ValueError("duplicate vertices")
        for u, v in self.edges:
            if u not in vs or v not in vs:
                raise ValueError("edge endpoint outside vertex subset")
        if len(self.edges) != len(self.vertices) - 1:
            raise ValueError("induced edges must form a tree on the subset")
        if len(_components(self.vertices, self.edges)) > 1:
            raise ValueError("induced edges do not connect the subset")

    def adjacency(self) -> dict[int, list[int]]:
        return _adjacency(self.vertices, self.edges)


def _adjacency(vertices, edges) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = {int(v): [] for v in vertices}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return adj


def _components(vertices, edges) -> list[set[int]]:
    adj = _adjacency(vertices, edges)
    seen: set[int] = set()
    comps = []
    for start in adj:
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if nxt not in comp:
                    comp.add(nxt)
                    queue.append(nxt)
        seen |= comp
        comps.append(comp)
    return comps


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def minimum_spanning_tree(coords: np.ndarray) -> SpanningTree:
    """Euclidean MST via Kruskal; distance ties broken by lexicographic (i, j)."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2:
        raise ValueError("coords must be 2-D")
    n = coords.shape[0]
    if n < 1:
        raise ValueError("need at least one vertex")
    if n == 1:
        return SpanningTree(1, ())
    dist = cdist(coords, coords)
    cand = [(dist[i, j], i, j) for i in range(n) for j in range(i + 1, n)]
    cand.sort()
    uf = _UnionFind(n)
    chosen = []
    for _, i, j in cand:
        if uf.union(i, j):
            chosen.append((i, j))
            if len(chosen) == n - 1:
                break
    chosen.sort()
    return SpanningTree(n, tuple(chosen))


def tree_path(tree, u: int, v: int) -> list[tuple[int, int]]:
    """Edges on the unique path from u to v, in walk order."""
    adj = tree.adjacency()
    if u not in adj or v not in adj:
        raise ValueError("vertex not in tree")
    if u == v:
        return []
    prev = {u: None}
    queue = deque([u])
    while queue:
        cur = queue.popleft()
        if cur == v:
            break
        for nxt in adj[cur]:
            if nxt not in prev:
                prev[nxt] = cur
                queue.append(nxt)
    if v not in prev:
        raise ValueError("vertices are not connected")
    path = []
    cur = v
    while prev[cur] is not None:
        path.append(_norm_edge(prev[cur], cur))
        cur = prev[cur]
    path.reverse()
    return path


def bipartition(handle: SubtreeHandle, edge: tuple[int, int]) -> tuple[SubtreeHandle, SubtreeHandle]:
    """Split a subtree by removing one edge; first piece contains edge[0]."""
    edge = _norm_edge(*edge)
    if edge not in set(handle.edges):
        raise ValueError("edge not in subtree")
    rest = [e for e in handle.edges if e != edge]
    comps = _components(handle.vertices, rest)
    assert len(comps) == 2
    first = comps[0] if edge[0] in comps[0] else comps[1]
    second = comps[1] if first is comps[0] else comps[0]

    def make(comp):
        vs = tuple(sorted(comp))
        es = tuple(e for e in rest if e[0] in comp)
        return SubtreeHandle(vs, es)

    return make(first), make(second)


@dataclass
class KnotSystem:
    """Reference knots with their spectral spanning tree and fast lookups.

    Structured knot coordinates are kept standardized (training mean/sd).
    Multivariate distance computations and the similarity graph both use
    these standardized coordinates; the embedding is only used to build
    the spanning tree.
    """

    coords: np.ndarray           # (t, d_M) standardized structured coords
    xvals: np.ndarray            # (t, p) unstructured feature values
    mean: np.ndarray
    std: np.ndarray
    embedding: np.ndarray
    mst: SpanningTree
    parent: np.ndarray = field(repr=False)   # rooted at 0
    depth: np.ndarray = field(repr=False)
    desc_mask: dict[int, int] = field(repr=False)   # child vertex -> descendant bitmask
    path_len: np.ndarray = field(repr=False)        # (t, t) hop counts

    @classmethod
    def from_training(cls, structured, unstructured, knot_indices,
                      embedding_dim=None, zero_tol=1e-8):
        structured = np.asarray(structured, dtype=float)
        unstructured = np.asarray(unstructured, dtype=float)
        idx = np.asarray(knot_indices, dtype=int)
        mean = structured.mean(axis=0)
        std = structured.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        coords = (structured[idx] - mean) / std
        xvals = unstructured[idx] if unstructured.size else np.zeros((len(idx), 0))
        return cls.from_standardized(coords, xvals, mean, std,
                                     embedding_dim=embedding_dim, zero_tol=zero_tol)

    @classmethod
    def from_standardized(cls, coords, xvals, mean, std,
                          embedding_dim=None, zero_tol=1e-8):
        coords = np.asarray(coords, dtype=float)
        xvals = np.asarray(xvals, dtype=float)
        if xvals.size == 0:
            xvals = np.zeros((coords.shape[0], 0))
        t = coords.shape[0]
        if t < 2:
            raise ValueError("need at least two knots")
        k = min(3, t - 1) if embedding_dim is None else int(embedding_dim)
        lap = normalized_laplacian(build_similarity(coords))
        emb = spectral_embedding(lap, k, zero_tol)
        mst = minimum_spanning_tree(emb)
        parent, depth = _root_tree(mst, root=0)
        desc = _descendant_masks(mst, parent)
        plen = _pairwise_path_lengths(mst)
        return cls(coords, xvals, np.asarray(mean, dtype=float),
                   np.asarray(std, dtype=float), emb, mst, parent, depth, desc, plen)

    @property
    def n_knots(self) -> int:
        return self.coords.shape[0]

    def standardize(self, structured_raw) -> np.ndarray:
        return (np.asarray(structured_raw, dtype=float) - self.mean) / self.std

    def full_mask(self) -> int:
        return (1 << self.n_knots) - 1

    @staticmethod
    def mask_of(indices) -> int:
        m = 0
        for i in indices:
            m |= 1 << int(i)
        return m

    @staticmethod
    def indices_of(mask: int) -> np.ndarray:
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(i)
            mask >>= 1
            i += 1
        return np.asarray(out, dtype=int)

    def path_edge_children(self, u: int, v: int) -> list[int]:
        """Edges on the MST path u..v, each named by its child-side vertex."""
        children = []
        a, b = int(u), int(v)
        while a != b:
            if self.depth[a] >= self.depth[b]:
                children.append(a)
                a = int(self.parent[a])
            else:
                children.append(b)
                b = int(self.parent[b])
        return children

    def split_mask(self, node_mask: int, child: int) -> tuple[int, int]:
        """Partition a knot mask by removing the edge above `child`."""
        inside = node_mask & self.desc_mask[child]
        return inside, node_mask & ~inside


def _root_tree(mst: SpanningTree, root: int = 0):
    adj = mst.adjacency()
    parent = np.full(mst.n, -1, dtype=int)
    depth = np.zeros(mst.n, dtype=int)
    seen = {root}
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                parent[nxt] = cur
                depth[nxt] = depth[cur] + 1
                queue.append(nxt)
    return parent, depth


def _descendant_masks(mst: SpanningTree, parent: np.ndarray) -> dict[int, int]:
    order = np.argsort([-d for d in _root_tree(mst)[1]])  # deepest first
    masks = {v: 1 << v for v in range(mst.n)}
    for v in order:
        p = parent[v]
        if p >= 0:
            masks[int(p)] |= masks[int(v)]
    return {v: masks[v] for v in range(mst.n) if parent[v] >= 0}


def _pairwise_path_lengths(mst: SpanningTree) -> np.ndarray:
    adj = mst.adjacency()
    n = mst.n
    out = np.zeros((n, n), dtype=np.int32)
    for src in range(n):
        dist = np.full(n, -1, dtype=np.int32)
        dist[src] = 0
        queue = deque([src])
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if dist[nxt] < 0:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        out[src] = dist
    return out
