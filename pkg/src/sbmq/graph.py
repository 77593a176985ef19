"""Sparse undirected simple graphs with O(1) degree access.

The graph container used by every algorithm in this package. Edges are
stored in CSR form with both directions of each undirected edge present;
each directed edge knows the index of its reverse, which is what the
belief-propagation kernels need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components


class EdgeListParseError(ValueError):
    """Raised when an edge-list file contains a malformed line."""


class EmptyGraphError(ValueError):
    """Raised when an edge-list file yields a graph with no vertices."""


@dataclass(frozen=True)
class Graph:
    """Immutable sparse undirected simple graph.

    Attributes
    ----------
    n : int
        Number of vertices.
    m : int
        Number of undirected edges (L).
    indptr : ndarray, shape (n+1,)
        CSR row pointers; the neighbors of vertex i are
        ``neighbors[indptr[i]:indptr[i+1]]`` in ascending order.
    neighbors : ndarray, shape (2m,)
        Target vertex of each directed edge.
    edge_src : ndarray, shape (2m,)
        Source vertex of each directed edge.
    reverse : ndarray, shape (2m,)
        ``reverse[p]`` is the index of the directed edge (j -> i) paired
        with directed edge p = (i -> j).
    degrees : ndarray, shape (n,)
        Vertex degrees; ``degrees.sum() == 2*m``.
    edges_u, edges_v : ndarray, shape (m,)
        Endpoints of each undirected edge with u < v, sorted
        lexicographically.
    edge_dir_index : ndarray, shape (m,)
        Directed-edge index of (u -> v) for each undirected edge; the
        paired (v -> u) index is ``reverse[edge_dir_index]``.
    """

    n: int
    m: int
    indptr: np.ndarray
    neighbors: np.ndarray
    edge_src: np.ndarray
    reverse: np.ndarray
    degrees: np.ndarray
    edges_u: np.ndarray
    edges_v: np.ndarray
    edge_dir_index: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @staticmethod
    def from_edges(edges: np.ndarray, n: int | None = None) -> "Graph":
        """Build a sanitized graph from an (k, 2) array of vertex pairs.

        Self-loops are dropped and duplicate edges collapsed. Vertex ids
        must already be 0..n-1; pass ``n`` to keep isolated vertices.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0:
                raise ValueError("vertex ids must be non-negative")
            n_seen = int(edges.max()) + 1
        else:
            n_seen = 0
        if n is None:
            n = n_seen
        elif n < n_seen:
            raise ValueError(f"n={n} smaller than largest vertex id {n_seen - 1}")

        u = np.minimum(edges[:, 0], edges[:, 1])
        v = np.maximum(edges[:, 0], edges[:, 1])
        keep = u != v
        u, v = u[keep], v[keep]
        if u.size:
            pairs = np.unique(np.stack([u, v], axis=1), axis=0)
            u, v = pairs[:, 0], pairs[:, 1]
        m = int(u.size)

        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        counts = np.bincount(src, minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        degrees = counts.astype(np.int64)

        # directed edges are sorted by (src, dst), so positions can be
        # looked up through the combined key src*n + dst
        key = src * n + dst
        rev = np.searchsorted(key, dst * n + src)
        edge_dir = np.searchsorted(key, u * n + v)

        g = Graph(
            n=int(n),
            m=m,
            indptr=indptr,
            neighbors=dst,
            edge_src=src,
            reverse=rev,
            degrees=degrees,
            edges_u=u,
            edges_v=v,
            edge_dir_index=edge_dir,
        )
        for arr in (g.indptr, g.neighbors, g.edge_src, g.reverse, g.degrees,
                    g.edges_u, g.edges_v, g.edge_dir_index):
            arr.flags.writeable = False
        return g

    @property
    def mean_degree(self) -> float:
        return 2.0 * self.m / self.n if self.n else 0.0

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[self.indptr[i]:self.indptr[i + 1]]

    def to_scipy(self) -> sp.csr_matrix:
        """Adjacency matrix as scipy CSR with unit weights."""
        data = np.ones(2 * self.m, dtype=np.float64)
        return sp.csr_matrix((data, self.neighbors, self.indptr), shape=(self.n, self.n))

    def validate(self) -> None:
        assert int(self.degrees.sum()) == 2 * self.m
        assert np.all(self.edge_src[self.reverse] == self.neighbors)
        assert np.all(self.neighbors[self.reverse] == self.edge_src)
        assert np.all(self.reverse[self.reverse] == np.arange(2 * self.m))


@dataclass(frozen=True)
class Partition:
    """Hard cluster assignment: per-vertex labels in {0..q-1}."""

    labels: np.ndarray
    q: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.q):
            raise ValueError("labels must lie in {0..q-1}")

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def effective_q(self) -> int:
        """Number of nonempty clusters (<= q)."""
        return int(np.unique(self.labels).size)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.q)


def load_edge_list(path) -> Graph:
    """Read a whitespace-separated edge list.

    One edge per line as two non-negative integers; '#' starts a comment;
    extra columns (weights etc.) are ignored. Self-loops are dropped,
    duplicates collapsed, and vertex ids compacted to 0..N-1 in order of
    first appearance.
    """
    pairs = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) < 2:
                raise EdgeListParseError(f"{path}:{lineno}: expected two vertex ids, got {raw.rstrip()!r}")
            try:
                a, b = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise EdgeListParseError(
                    f"{path}:{lineno}: non-integer vertex id in {raw.rstrip()!r}") from None
            if a < 0 or b < 0:
                raise EdgeListParseError(f"{path}:{lineno}: negative vertex id in {raw.rstrip()!r}")
            pairs.append((a, b))
    if not pairs:
        raise EmptyGraphError(f"{path}: no edges found")

    remap: dict[int, int] = {}
    compact = np.empty((len(pairs), 2), dtype=np.int64)
    for k, (a, b) in enumerate(pairs):
        if a not in remap:
            remap[a] = len(remap)
        if b not in remap:
            remap[b] = len(remap)
        compact[k, 0] = remap[a]
        compact[k, 1] = remap[b]
    g = Graph.from_edges(compact, n=len(remap))
    g.meta["source"] = str(path)
    return g


def write_edge_list(g: Graph, path) -> None:
    """Write one 'u v' line per undirected edge (u < v, lexicographic)."""
    with open(path, "w") as fh:
        fh.write(f"# n={g.n} m={g.m}\n")
        for u, v in zip(g.edges_u, g.edges_v):
            fh.write(f"{u} {v}\n")


def largest_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on the largest connected component.

    Ties between equal-sized components go to the one containing the
    smallest original vertex id. Returns the subgraph (ids remapped,
    preserving relative order) and the array of retained original ids.
    """
    if g.n == 0:
        return g, np.empty(0, dtype=np.int64)
    ncomp, labels = connected_components(g.to_scipy(), directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    best = sizes.max()
    # smallest original id among max-size components wins
    candidates = np.flatnonzero(sizes == best)
    first_vertex = {c: int(np.argmax(labels == c)) for c in candidates}
    chosen = min(candidates, key=lambda c: first_vertex[c])
    keep = np.flatnonzero(labels == chosen)
    old_to_new = -np.ones(g.n, dtype=np.int64)
    old_to_new[keep] = np.arange(keep.size)
    mask = (labels[g.edges_u] == chosen)
    sub_edges = np.stack([old_to_new[g.edges_u[mask]], old_to_new[g.edges_v[mask]]], axis=1)
    sub = Graph.from_edges(sub_edges, n=keep.size)
    sub.meta.update(g.meta)
    return sub, keep


def permutation_overlap(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Fraction of agreeing labels maximized over label permutations."""
    a = np.asarray(labels_a, dtype=np.int64)
    b = np.asarray(labels_b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("label arrays must have the same length")
    qa, qb = int(a.max()) + 1, int(b.max()) + 1
    q = max(qa, qb)
    confusion = np.zeros((q, q), dtype=np.int64)
    np.add.at(confusion, (a, b), 1)
    rows, cols = linear_sum_assignment(-confusion)
    return float(confusion[rows, cols].sum()) / a.size
