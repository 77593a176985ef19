"""Planted-partition benchmark generators (standard SBM and DC-SBM).

All sampling goes through ``numpy.random.Generator`` (PCG64); the same
seed always yields bit-identical graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, Partition


def equal_sizes(n: int, q: int) -> list[int]:
    """Split n vertices into q near-equal cluster sizes (first clusters
    absorb the remainder)."""
    base, extra = divmod(n, q)
    return [base + (1 if c < extra else 0) for c in range(q)]


@dataclass
class SbmSpec:
    """Standard SBM: Bernoulli(omega_in) inside a cluster, Bernoulli(omega_out)
    across clusters."""

    n: int
    q_planted: int
    omega_in: float
    omega_out: float
    sizes: list[int] | None = None

    def __post_init__(self):
        if self.sizes is None:
            self.sizes = equal_sizes(self.n, self.q_planted)
        if sum(self.sizes) != self.n:
            raise ValueError("cluster sizes must sum to n")
        if len(self.sizes) != self.q_planted:
            raise ValueError("need one size per planted cluster")
        for p in (self.omega_in, self.omega_out):
            if not (0.0 <= p <= 1.0):
                raise ValueError("connection probabilities must lie in [0, 1]")

    @property
    def epsilon(self) -> float:
        """Structure strength omega_out/omega_in."""
        if self.omega_in <= 0:
            raise ValueError("epsilon undefined for omega_in = 0")
        return self.omega_out / self.omega_in


def sbm_spec_from_mean_degree(n: int, q: int, c: float, eps: float,
                              sizes: list[int] | None = None) -> SbmSpec:
    """Calibrate (omega_in, omega_out) so the expected mean degree is c
    with omega_out = eps * omega_in, using
    c = omega_in (n/q - 1) + omega_out n (q-1)/q for equal sizes."""
    denom = (n / q - 1.0) + eps * n * (q - 1.0) / q
    omega_in = c / denom
    return SbmSpec(n=n, q_planted=q, omega_in=omega_in, omega_out=eps * omega_in,
                   sizes=sizes)


@dataclass
class DcSbmSpec:
    """Degree-corrected SBM: pair (i, j) connected with probability
    min(1, theta_i * omega * theta_j), the sparse Bernoulli reading of the
    Poisson edge mean."""

    n: int
    q_planted: int
    omega_in: float
    omega_out: float
    propensities: np.ndarray = field(default=None)  # type: ignore[assignment]
    sizes: list[int] | None = None

    def __post_init__(self):
        if self.sizes is None:
            self.sizes = equal_sizes(self.n, self.q_planted)
        if sum(self.sizes) != self.n:
            raise ValueError("cluster sizes must sum to n")
        if self.propensities is None:
            self.propensities = np.ones(self.n)
        self.propensities = np.asarray(self.propensities, dtype=np.float64)
        if self.propensities.shape != (self.n,):
            raise ValueError("need one propensity per vertex")
        if np.any(self.propensities < 0):
            raise ValueError("propensities must be non-negative")
        if self.omega_in < 0 or self.omega_out < 0:
            raise ValueError("affinities must be non-negative")


def power_law_propensities(n: int, exponent: float, lo: float, hi: float,
                           rng: np.random.Generator) -> np.ndarray:
    """Draw propensities from a truncated power law p(x) ~ x^-exponent on
    [lo, hi] by inverse-CDF sampling."""
    if exponent == 1.0:
        return lo * (hi / lo) ** rng.random(n)
    a = 1.0 - exponent
    u = rng.random(n)
    return (lo ** a + u * (hi ** a - lo ** a)) ** (1.0 / a)


def _planted_labels(sizes: list[int]) -> np.ndarray:
    return np.repeat(np.arange(len(sizes)), sizes).astype(np.int64)


def _sample_block_pairs(rng: np.random.Generator, n_pairs: int, p: float) -> np.ndarray:
    """Indices of the successes among n_pairs Bernoulli(p) trials, drawn as
    Binomial count + distinct uniform indices (exact and O(edges))."""
    if p <= 0.0 or n_pairs == 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_pairs, dtype=np.int64)
    k = rng.binomial(n_pairs, p)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    # collisions are rare for sparse p; resample until k distinct indices
    chosen = np.unique(rng.integers(0, n_pairs, size=k))
    while chosen.size < k:
        extra = rng.integers(0, n_pairs, size=k - chosen.size)
        chosen = np.unique(np.concatenate([chosen, extra]))
    return chosen.astype(np.int64)


def generate_sbm(spec: SbmSpec, seed: int) -> tuple[Graph, Partition]:
    """Sample a standard SBM instance. Deterministic given seed."""
    rng = np.random.default_rng(seed)
    labels = _planted_labels(spec.sizes)
    offsets = np.concatenate([[0], np.cumsum(spec.sizes)])
    q = spec.q_planted
    edge_chunks = []
    for r in range(q):
        nr = spec.sizes[r]
        # within-cluster pairs i < j
        n_pairs = nr * (nr - 1) // 2
        idx = _sample_block_pairs(rng, n_pairs, spec.omega_in)
        if idx.size:
            i, j = _triu_unrank(idx, nr)
            edge_chunks.append(np.stack([offsets[r] + i, offsets[r] + j], axis=1))
        for s in range(r + 1, q):
            ns = spec.sizes[s]
            idx = _sample_block_pairs(rng, nr * ns, spec.omega_out)
            if idx.size:
                i, j = np.divmod(idx, ns)
                edge_chunks.append(np.stack([offsets[r] + i, offsets[s] + j], axis=1))
    edges = np.concatenate(edge_chunks) if edge_chunks else np.empty((0, 2), dtype=np.int64)
    g = Graph.from_edges(edges, n=spec.n)
    g.meta.update(model="sbm", seed=seed, omega_in=spec.omega_in, omega_out=spec.omega_out)
    return g, Partition(labels, q)


def _triu_unrank(idx: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices of the strict upper triangle (row-major) of an
    n x n matrix back to (i, j) with i < j."""
    # rank(i, j) = i*n - i*(i+1)/2 + (j - i - 1); invert row by quadratic formula
    idx = idx.astype(np.float64)
    b = 2.0 * n - 1.0
    i = np.floor((b - np.sqrt(b * b - 8.0 * idx)) / 2.0).astype(np.int64)
    # guard rounding at row boundaries
    row_start = i * n - i * (i + 1) // 2
    i = np.where(idx.astype(np.int64) < row_start, i - 1, i)
    row_start = i * n - i * (i + 1) // 2
    j = idx.astype(np.int64) - row_start + i + 1
    return i, j


def generate_dcsbm(spec: DcSbmSpec, seed: int) -> tuple[Graph, Partition]:
    """Sample a degree-corrected SBM instance.

    Each pair (i < j) is connected independently with probability
    min(1, theta_i * omega * theta_j); evaluated in row chunks so memory
    stays O(n * chunk).
    """
    rng = np.random.default_rng(seed)
    labels = _planted_labels(spec.sizes)
    theta = spec.propensities
    omega = np.where(labels[:, None] == labels[None, :], spec.omega_in, spec.omega_out) \
        if spec.n <= 2048 else None
    rows_i = []
    rows_j = []
    chunk = 512
    for start in range(0, spec.n, chunk):
        stop = min(start + chunk, spec.n)
        if omega is not None:
            w = omega[start:stop, :]
        else:
            w = np.where(labels[start:stop, None] == labels[None, :],
                         spec.omega_in, spec.omega_out)
        probs = np.minimum(1.0, theta[start:stop, None] * w * theta[None, :])
        # keep only the strict upper triangle of the full matrix
        cols = np.arange(spec.n)[None, :]
        upper = cols > (np.arange(start, stop)[:, None])
        hits = (rng.random(probs.shape) < probs) & upper
        ii, jj = np.nonzero(hits)
        rows_i.append(ii + start)
        rows_j.append(jj)
    edges = np.stack([np.concatenate(rows_i), np.concatenate(rows_j)], axis=1)
    g = Graph.from_edges(edges, n=spec.n)
    g.meta.update(model="dcsbm", seed=seed, omega_in=spec.omega_in, omega_out=spec.omega_out)
    return g, Partition(labels, spec.q_planted)


def expected_edge_count(spec) -> float:
    """Analytic sum of pair connection probabilities for either model."""
    labels = _planted_labels(spec.sizes)
    if isinstance(spec, SbmSpec):
        sizes = np.asarray(spec.sizes)
        within = float(np.sum(sizes * (sizes - 1) // 2)) * spec.omega_in
        across = float((spec.n ** 2 - np.sum(sizes ** 2)) // 2) * spec.omega_out
        return within + across
    theta = spec.propensities
    total = 0.0
    for start in range(0, spec.n, 512):
        stop = min(start + 512, spec.n)
        w = np.where(labels[start:stop, None] == labels[None, :],
                     spec.omega_in, spec.omega_out)
        probs = np.minimum(1.0, theta[start:stop, None] * w * theta[None, :])
        cols = np.arange(spec.n)[None, :]
        upper = cols > (np.arange(start, stop)[:, None])
        total += float(probs[upper].sum())
    return total
