"""Assessment criteria for a fitted BP state.

Five ways to score a fit at a given q: Bethe free energy, retrieval
modularity, the two-level map-equation codelength, and the four LOOCV
prediction errors (Bayes, Gibbs, MAP, training). All are read-only
functions of the BP state and O(N + L + q).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import _kernels
from .graph import Graph, Partition

if TYPE_CHECKING:  # pragma: no cover - type-only imports avoid a cycle with bp
    from .bp import Marginals, Messages, ModelParams


class BetheUndefinedError(ValueError):
    """Bethe free energy is undefined at beta = 0 (omega_in == omega_out)."""


@dataclass(frozen=True)
class PairStats:
    """Per-edge cavity overlap s_ij and edge partition function
    Z^ij = d_i d_j ((omega_in - omega_out) s_ij + omega_out)."""

    s: np.ndarray
    z: np.ndarray

    @staticmethod
    def from_state(g: Graph, msgs: "Messages", params: "ModelParams") -> "PairStats":
        from .bp import edge_overlaps

        s = edge_overlaps(g, msgs)
        dd = g.degrees[g.edges_u] * g.degrees[g.edges_v]
        z = dd * (params.w_diff * s + params.omega_out)
        return PairStats(s=s, z=z)


def bethe_free_energy(g: Graph, msgs: "Messages", marginals: "Marginals",
                      params: "ModelParams") -> float:
    """Bethe free energy per vertex of the fitted state.

    -(1/(beta N)) (sum_i log Z^i - sum_(ij) in E log Z^ij
                   - sum_(ij) not in E log Z~^ij),
    with the non-edge sum evaluated through the theta-field totals
    (log Z~^ij = -d_i d_j ((omega_in-omega_out) s_ij + omega_out) with
    marginal overlaps), so the whole quantity is O(N + L + q).
    """
    from .bp import use_log_domain

    beta = params.beta
    if beta == 0.0:
        raise BetheUndefinedError("beta = 0: free energy prefactor 1/beta undefined")
    deg = g.degrees.astype(np.float64)
    two_l = 2.0 * g.m

    sum_log_zi = _kernels.sum_log_zi_kernel(
        g.indptr, g.neighbors, g.reverse, deg, msgs.psi, marginals.theta,
        params.w_diff, beta, params.omega_out, two_l,
        use_log_domain(params, g))

    stats = PairStats.from_state(g, msgs, params)
    sum_log_zij = float(np.sum(np.log(stats.z)))

    # sum over non-adjacent pairs i<j of d_i d_j (omega_out + w s_ij^marg),
    # from the all-pairs total minus self terms and explicit edge terms
    psi = marginals.psi
    theta = marginals.theta
    d_sq = deg ** 2
    all_pairs = 0.5 * (params.omega_out * (two_l ** 2 - d_sq.sum())
                       + params.w_diff * (float(theta @ theta)
                                          - float(d_sq @ np.einsum("is,is->i", psi, psi))))
    marg_overlap_edges = np.einsum("es,es->e", psi[g.edges_u], psi[g.edges_v])
    dd_edges = (g.degrees[g.edges_u] * g.degrees[g.edges_v]).astype(np.float64)
    edge_part = float(np.sum(dd_edges * (params.omega_out
                                         + params.w_diff * marg_overlap_edges)))
    non_edge_sum = all_pairs - edge_part

    return -(sum_log_zi - sum_log_zij + non_edge_sum) / (beta * g.n)


def partition_modularity(g: Graph, partition: Partition, alpha: float = 1.0) -> float:
    """Modularity over vertex pairs i < j (self-pairs excluded):
    Q = (1/2L) sum_{i<j} delta(c_i, c_j) (A_ij - alpha d_i d_j / 2L)."""
    if g.m == 0:
        return 0.0
    labels = partition.labels
    two_l = 2.0 * g.m
    intra = int(np.sum(labels[g.edges_u] == labels[g.edges_v]))
    cluster_deg = np.bincount(labels, weights=g.degrees, minlength=partition.q)
    deg_sq_sum = float(np.sum(g.degrees.astype(np.float64) ** 2))
    pair_term = 0.5 * (float(np.sum(cluster_deg ** 2)) - deg_sq_sum)
    return (intra - alpha * pair_term / two_l) / two_l


def retrieval_modularity(g: Graph, marginals: "Marginals", alpha: float = 1.0) -> float:
    """Modularity of the hard partition read off the marginals
    (argmax per vertex, ties to the lowest index)."""
    labels = marginals.hard_labels()
    return partition_modularity(g, Partition(labels, marginals.q), alpha)


def _plogp(x: np.ndarray | float) -> np.ndarray | float:
    """x log2 x with 0 log 0 = 0."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log2(x[pos])
    return out if out.ndim else float(out)


def map_equation_mdl(g: Graph, partition: Partition) -> float:
    """Two-level map-equation codelength (bits per step) of a hard
    partition under the degree-proportional stationary walk:

    L(M) = (sum_m q_m) log2(sum_m q_m) - 2 sum_m q_m log2 q_m
           - sum_i p_i log2 p_i + sum_m (q_m + P_m) log2 (q_m + P_m),

    with p_i = d_i/2L, module visit mass P_m, and exit probability
    q_m = cut(m)/2L.
    """
    if g.m == 0:
        return 0.0
    labels = partition.labels
    two_l = 2.0 * g.m
    qn = partition.q
    deg = g.degrees.astype(np.float64)
    d_total = np.bincount(labels, weights=deg, minlength=qn)
    cross = labels[g.edges_u] != labels[g.edges_v]
    cut = (np.bincount(labels[g.edges_u][cross], minlength=qn)
           + np.bincount(labels[g.edges_v][cross], minlength=qn)).astype(np.float64)
    q_m = cut / two_l
    p_m = d_total / two_l
    p_i = deg / two_l
    total = float(_plogp(q_m.sum()))
    total -= 2.0 * float(np.sum(_plogp(q_m)))
    total -= float(np.sum(_plogp(p_i)))
    total += float(np.sum(_plogp(q_m + p_m)))
    return total


def e_bayes(g: Graph, pair_stats: PairStats) -> float:
    """Bayes LOOCV prediction error: 1 - (1/L) sum_E log Z^ij."""
    if np.any(pair_stats.z <= 0):
        raise ValueError("non-positive edge partition function")
    return 1.0 - float(np.sum(np.log(pair_stats.z))) / g.m


def _gibbs_sum(g: Graph, s: np.ndarray, params: "ModelParams") -> float:
    """sum_E sum_{ss'} psi psi' log(d_i omega_ss' d_j) written through the
    overlap: log(d_i d_j omega_out) + s_ij beta."""
    dd = (g.degrees[g.edges_u] * g.degrees[g.edges_v]).astype(np.float64)
    return float(np.sum(np.log(dd * params.omega_out) + s * params.beta))


def e_gibbs(g: Graph, msgs: "Messages", params: "ModelParams") -> float:
    """Gibbs LOOCV prediction error (the displayed middle line; no
    constants dropped beyond the O(1/N) ones)."""
    from .bp import edge_overlaps

    if params.omega_in <= 0 or params.omega_out <= 0:
        raise ValueError("affinities must be positive")
    return 1.0 - _gibbs_sum(g, edge_overlaps(g, msgs), params) / g.m


def hard_messages(msgs: "Messages") -> "Messages":
    """Replace each cavity message by a delta at its argmax (ties to the
    lowest index)."""
    from .bp import Messages

    psi = msgs.psi
    hard = np.zeros_like(psi)
    hard[np.arange(psi.shape[0]), np.argmax(psi, axis=1)] = 1.0
    return Messages(hard)


def e_map(g: Graph, msgs: "Messages", params: "ModelParams") -> float:
    """MAP estimate of the Gibbs prediction error: e_gibbs evaluated with
    argmax-hardened cavity messages."""
    return e_gibbs(g, hard_messages(msgs), params)


def e_training(g: Graph, msgs: "Messages", pair_stats: PairStats,
               params: "ModelParams") -> float:
    """Gibbs training error: the full-data posterior reweighting
    1 - (1/L) sum_E sum_{ss'} psi psi' (d_i omega d_j / Z^ij)
    log(d_i omega d_j)."""
    if np.any(pair_stats.z <= 0):
        raise ValueError("non-positive edge partition function")
    s = pair_stats.s
    dd = (g.degrees[g.edges_u] * g.degrees[g.edges_v]).astype(np.float64)
    log_in = np.log(dd * params.omega_in)
    log_out = np.log(dd * params.omega_out)
    num = dd * (s * params.omega_in * log_in + (1.0 - s) * params.omega_out * log_out)
    return 1.0 - float(np.sum(num / pair_stats.z)) / g.m


@dataclass
class CriteriaRecord:
    """All criteria for one value of q, as one row of a sweep."""

    q_input: int
    q_effective: int
    bethe_f: float
    modularity: float
    mdl_two_level: float
    e_bayes: float
    e_gibbs: float
    e_map: float
    e_training: float
    alpha: float
    beta: float
    beta0_ref: float
    betastar_ref: float
    factorized: bool
    error: str | None = None

    CSV_HEADER = ("q,q_eff,bethe_f,modularity,mdl,e_bayes,e_gibbs,e_map,"
                  "e_training,alpha,beta,beta0_ref,betastar_ref,factorized")

    def to_csv_row(self) -> str:
        vals = [self.q_input, self.q_effective]
        vals += [_csv_float(v) for v in (
            self.bethe_f, self.modularity, self.mdl_two_level, self.e_bayes,
            self.e_gibbs, self.e_map, self.e_training, self.alpha, self.beta,
            self.beta0_ref, self.betastar_ref)]
        vals.append(int(self.factorized))
        return ",".join(str(v) for v in vals)

    def to_dict(self) -> dict:
        def jf(x):
            return float(x) if math.isfinite(x) else None
        return {
            "q": self.q_input,
            "q_eff": self.q_effective,
            "bethe_f": jf(self.bethe_f),
            "modularity": jf(self.modularity),
            "mdl": jf(self.mdl_two_level),
            "e_bayes": jf(self.e_bayes),
            "e_gibbs": jf(self.e_gibbs),
            "e_map": jf(self.e_map),
            "e_training": jf(self.e_training),
            "alpha": jf(self.alpha),
            "beta": jf(self.beta),
            "beta0_ref": jf(self.beta0_ref),
            "betastar_ref": jf(self.betastar_ref),
            "factorized": self.factorized,
            "error": self.error,
        }


def _csv_float(x: float) -> str:
    return repr(float(x))


def evaluate_all(g: Graph, result) -> CriteriaRecord:
    """Build the per-q criteria row for a finished EM fit."""
    from .bp import beta_star, beta_zero

    params = result.params
    marg = result.marginals
    msgs = result.messages
    stats = PairStats.from_state(g, msgs, params)
    labels = marg.hard_labels()
    try:
        bethe = bethe_free_energy(g, msgs, marg, params)
    except BetheUndefinedError:
        bethe = float("nan")
    alpha = params.alpha
    mod_alpha = alpha if math.isfinite(alpha) else 1.0
    c = g.mean_degree
    try:
        b0, bs = beta_zero(result.q, c), beta_star(result.q, c)
    except ValueError:
        b0, bs = float("nan"), float("nan")
    return CriteriaRecord(
        q_input=result.q,
        q_effective=int(np.unique(labels).size),
        bethe_f=bethe,
        modularity=retrieval_modularity(g, marg, mod_alpha),
        mdl_two_level=map_equation_mdl(g, Partition(labels, result.q)),
        e_bayes=e_bayes(g, stats),
        e_gibbs=e_gibbs(g, msgs, params),
        e_map=e_map(g, msgs, params),
        e_training=e_training(g, msgs, stats, params),
        alpha=alpha,
        beta=params.beta,
        beta0_ref=b0,
        betastar_ref=bs,
        factorized=result.factorized,
    )
