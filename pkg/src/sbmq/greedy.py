"""Greedy baselines: Louvain-style modularity and a two-level
map-equation greedy.

Both run the same move/aggregate scheme: every vertex starts in its own
cluster, local moves send a vertex to the neighboring cluster with the
best objective change, and once a pass makes no move the graph is
aggregated (clusters become weighted supernodes with self-loops) and the
scheme repeats. The returned objective is always re-evaluated with the
criteria module on the unfolded partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .criteria import map_equation_mdl, partition_modularity
from .graph import Graph, Partition

_IMPROVE_EPS = 1e-12


@dataclass
class GreedyResult:
    partition: Partition
    objective: float
    q_star: int
    passes: int
    seed: int
    method: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective": float(self.objective),
            "q_star": int(self.q_star),
            "passes": int(self.passes),
            "seed": int(self.seed),
            "labels": [int(x) for x in self.partition.labels],
        }


class _LevelGraph:
    """Weighted graph for one aggregation level: symmetric neighbor maps
    plus self-loop weight counted twice in the degree, so total weighted
    degree is invariant under aggregation."""

    def __init__(self, adj: list[dict[int, float]], self2: np.ndarray):
        self.adj = adj
        self.self2 = self2
        self.n = len(adj)
        self.k = np.array([sum(nb.values()) for nb in adj]) + self2

    @staticmethod
    def from_graph(g: Graph) -> "_LevelGraph":
        adj: list[dict[int, float]] = [dict() for _ in range(g.n)]
        for u, v in zip(g.edges_u, g.edges_v):
            adj[u][v] = adj[u].get(v, 0.0) + 1.0
            adj[v][u] = adj[v].get(u, 0.0) + 1.0
        return _LevelGraph(adj, np.zeros(g.n))

    def aggregate(self, comm: np.ndarray) -> tuple["_LevelGraph", np.ndarray]:
        """Collapse communities into supernodes; returns the new level and
        the old->new community index map (dense, order of first vertex)."""
        uniq = []
        remap = {}
        for c in comm:
            if c not in remap:
                remap[c] = len(uniq)
                uniq.append(c)
        dense = np.array([remap[c] for c in comm], dtype=np.int64)
        nn = len(uniq)
        adj: list[dict[int, float]] = [dict() for _ in range(nn)]
        self2 = np.zeros(nn)
        for v in range(self.n):
            cv = dense[v]
            self2[cv] += self.self2[v]
            for u, w in self.adj[v].items():
                if u <= v:
                    continue
                cu = dense[u]
                if cu == cv:
                    self2[cv] += 2.0 * w
                else:
                    adj[cv][cu] = adj[cv].get(cu, 0.0) + w
                    adj[cu][cv] = adj[cu].get(cv, 0.0) + w
        return _LevelGraph(adj, self2), dense


def _local_moves_modularity(lg: _LevelGraph, alpha: float, two_l: float,
                            rng: np.random.Generator) -> tuple[np.ndarray, int, bool]:
    """Best-neighbor local moves maximizing the alpha-modularity; returns
    (community labels, passes, any_move)."""
    comm = list(range(lg.n))
    cluster_deg = [float(k) for k in lg.k]
    degs = cluster_deg.copy()
    adj = lg.adj
    passes = 0
    moved_any = False
    coef = alpha / (2.0 * two_l)
    while True:
        passes += 1
        moved = False
        for v in rng.permutation(lg.n).tolist():
            cv = comm[v]
            kv = degs[v]
            weights: dict[int, float] = {}
            for u, w in adj[v].items():
                cu = comm[u]
                if cu in weights:
                    weights[cu] += w
                else:
                    weights[cu] = w
            cluster_deg[cv] -= kv
            ck = coef * kv
            best_c, best_gain = cv, weights.get(cv, 0.0) - ck * cluster_deg[cv]
            for c, w_vc in weights.items():
                if c == cv:
                    continue
                gain = w_vc - ck * cluster_deg[c]
                if gain > best_gain + _IMPROVE_EPS:
                    best_c, best_gain = c, gain
            cluster_deg[best_c] += kv
            if best_c != cv:
                comm[v] = best_c
                moved = True
                moved_any = True
        if not moved:
            break
    return np.asarray(comm, dtype=np.int64), passes, moved_any


def _local_moves_mdl(lg: _LevelGraph, two_l: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, int, bool]:
    """Best-neighbor local moves minimizing the two-level codelength, with
    the module exit/visit totals maintained incrementally."""
    inv_ln2 = 1.0 / math.log(2.0)
    log = math.log

    def plogp(x: float) -> float:
        return x * log(x) * inv_ln2 if x > 0.0 else 0.0

    n = lg.n
    comm = list(range(n))
    degs = [float(k) for k in lg.k]
    deg_tot = degs.copy()
    cut = [float(sum(nb.values())) for nb in lg.adj]
    sum_cut = sum(cut)
    self2 = lg.self2.tolist()
    adj = lg.adj
    passes = 0
    moved_any = False
    while True:
        passes += 1
        moved = False
        for v in rng.permutation(n).tolist():
            a = comm[v]
            kv = degs[v]
            weights: dict[int, float] = {}
            for u, w in adj[v].items():
                cu = comm[u]
                if cu in weights:
                    weights[cu] += w
                else:
                    weights[cu] = w
            k_va = weights.get(a, 0.0)
            # a-side terms are candidate-independent
            da = -(kv - self2[v]) + 2.0 * k_va
            cut_a, deg_a = cut[a], deg_tot[a]
            cut_a_new = cut_a + da
            base_a = (-2.0 * (plogp(cut_a_new / two_l) - plogp(cut_a / two_l))
                      + plogp((cut_a_new + deg_a - kv) / two_l)
                      - plogp((cut_a + deg_a) / two_l)
                      - plogp(sum_cut / two_l))
            best_b, best_delta, best_db = a, 0.0, 0.0
            for b, k_vb in weights.items():
                if b == a:
                    continue
                db = (kv - self2[v]) - 2.0 * k_vb
                cut_b, deg_b = cut[b], deg_tot[b]
                cut_b_new = cut_b + db
                delta = (base_a
                         + plogp((sum_cut + da + db) / two_l)
                         - 2.0 * (plogp(cut_b_new / two_l) - plogp(cut_b / two_l))
                         + plogp((cut_b_new + deg_b + kv) / two_l)
                         - plogp((cut_b + deg_b) / two_l))
                if delta < best_delta - _IMPROVE_EPS:
                    best_b, best_delta, best_db = b, delta, db
            if best_b != a:
                cut[a] += da
                cut[best_b] += best_db
                deg_tot[a] -= kv
                deg_tot[best_b] += kv
                sum_cut += da + best_db
                comm[v] = best_b
                moved = True
                moved_any = True
        if not moved:
            break
    return np.asarray(comm, dtype=np.int64), passes, moved_any


def _run_greedy(g: Graph, seed: int, local_moves) -> tuple[Partition, int]:
    rng = np.random.default_rng(seed)
    lg = _LevelGraph.from_graph(g)
    labels = np.arange(g.n, dtype=np.int64)
    total_passes = 0
    while True:
        comm, passes, moved = local_moves(lg, rng)
        total_passes += passes
        if not moved:
            break
        lg, dense = lg.aggregate(comm)
        labels = dense[comm[labels]]
        if lg.n <= 1:
            break
    uniq, relabeled = np.unique(labels, return_inverse=True)
    return Partition(relabeled.astype(np.int64), int(uniq.size)), total_passes


def louvain(g: Graph, alpha: float = 1.0, seed: int = 0) -> GreedyResult:
    """Two-phase greedy modularity maximization with the resolution
    parameter alpha."""
    if g.n == 0:
        raise ValueError("empty graph")
    two_l = 2.0 * g.m

    def moves(lg, rng):
        return _local_moves_modularity(lg, alpha, two_l, rng)

    partition, passes = _run_greedy(g, seed, moves)
    return GreedyResult(partition=partition,
                        objective=partition_modularity(g, partition, alpha),
                        q_star=partition.effective_q, passes=passes,
                        seed=seed, method="louvain")


def infomap_two_level(g: Graph, seed: int = 0) -> GreedyResult:
    """Two-phase greedy minimization of the two-level map-equation
    codelength."""
    if g.n == 0:
        raise ValueError("empty graph")
    two_l = 2.0 * g.m

    def moves(lg, rng):
        return _local_moves_mdl(lg, two_l, rng)

    partition, passes = _run_greedy(g, seed, moves)
    return GreedyResult(partition=partition,
                        objective=map_equation_mdl(g, partition),
                        q_star=partition.effective_q, passes=passes,
                        seed=seed, method="infomap")


@dataclass
class GreedySummary:
    method: str
    runs: list[GreedyResult] = field(repr=False)
    q_mean: float = 0.0
    q_std: float = 0.0
    q_quantiles: dict = field(default_factory=dict)
    objective_mean: float = 0.0
    objective_std: float = 0.0

    def to_dict(self, include_runs: bool = True) -> dict:
        out = {
            "method": self.method,
            "q_mean": self.q_mean,
            "q_std": self.q_std,
            "q_quantiles": self.q_quantiles,
            "objective_mean": self.objective_mean,
            "objective_std": self.objective_std,
            "n_runs": len(self.runs),
        }
        if include_runs:
            out["runs"] = [{"seed": r.seed, "q_star": r.q_star,
                            "objective": float(r.objective), "passes": r.passes}
                           for r in self.runs]
        return out


def greedy_stats(g: Graph, method: str = "louvain", runs: int = 30,
                 alpha: float = 1.0, seed: int = 0) -> GreedySummary:
    """Repeat a greedy method with distinct seeds and summarize the
    distribution of the detected number of clusters."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    results = []
    for r in range(runs):
        if method == "louvain":
            results.append(louvain(g, alpha=alpha, seed=seed + r))
        elif method == "infomap":
            results.append(infomap_two_level(g, seed=seed + r))
        else:
            raise ValueError(f"unknown greedy method {method!r}")
    qs = np.array([r.q_star for r in results], dtype=np.float64)
    objs = np.array([r.objective for r in results])
    quant = {p: float(np.percentile(qs, p)) for p in (0, 25, 50, 75, 100)}
    return GreedySummary(method=method, runs=results,
                         q_mean=float(qs.mean()), q_std=float(qs.std()),
                         q_quantiles=quant,
                         objective_mean=float(objs.mean()),
                         objective_std=float(objs.std()))
