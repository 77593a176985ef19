"""Brute-force oracles used by the test suite.

These never call the message-passing code paths: marginals, partition
functions, and cavity pair distributions come from explicit enumeration
over all q^N label assignments of the field-consistent tree model, and
modularity comes from a literal sum over vertex pairs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp


def enumerate_tree_state(g, q: int, omega_in: float, omega_out: float,
                         theta_tol: float = 1e-11, max_iter: int = 500):
    """Exact quantities of the restricted model on a small graph, with the
    non-edge interactions replaced by the self-consistent degree field
    (the objective the message-passing approximation optimizes).

    The model over labels sigma is
        p(sigma) ~ prod_i exp(-d_i (2L w_out + w theta_{sigma_i}))
                   prod_{(uv) in E} d_u omega_{sigma_u sigma_v} d_v
    with theta_s = sum_i d_i p(sigma_i = s) solved by damped fixed-point
    iteration. Returns a dict with marginals, theta, log_z, per-edge
    cavity joints, and the derived assessment values.
    """
    n, m = g.n, g.m
    deg = g.degrees.astype(np.float64)
    two_l = 2.0 * m
    w = omega_in - omega_out
    beta = math.log(omega_in / omega_out)

    states = np.array(np.unravel_index(np.arange(q ** n), (q,) * n)).T  # (S, n)
    intra = np.zeros(q ** n)
    for u, v in zip(g.edges_u, g.edges_v):
        intra += states[:, u] == states[:, v]
    d_counts = np.zeros((q ** n, q))
    for s in range(q):
        d_counts[:, s] = (states == s) @ deg

    log_const = -two_l * omega_out * deg.sum() + float(
        np.sum(np.log(deg[g.edges_u] * deg[g.edges_v] * omega_out)))

    theta = np.full(q, two_l / q)
    marg = np.full((n, q), 1.0 / q)
    for _ in range(max_iter):
        logw = beta * intra - w * (d_counts @ theta)
        weights = np.exp(logw - logw.max())
        weights /= weights.sum()
        for i in range(n):
            marg[i] = np.bincount(states[:, i], weights=weights, minlength=q)
        theta_new = deg @ marg
        delta = np.abs(theta_new - theta).max()
        theta = 0.5 * theta + 0.5 * theta_new
        if delta < theta_tol * max(two_l, 1.0):
            break

    logw = beta * intra - w * (d_counts @ theta)
    log_z = log_const + float(logsumexp(logw))
    weights = np.exp(logw - logw.max())
    weights /= weights.sum()

    # cavity joint per edge: the same ensemble with that edge factor removed
    cavity = []
    for e, (u, v) in enumerate(zip(g.edges_u, g.edges_v)):
        delta_uv = (states[:, u] == states[:, v]).astype(np.float64)
        w_cav = np.exp(logw - beta * delta_uv - logw.max())
        joint = np.bincount(states[:, u] * q + states[:, v], weights=w_cav,
                            minlength=q * q).reshape(q, q)
        joint /= joint.sum()
        cavity.append(joint)

    # derived assessment values
    omega_mat = np.full((q, q), omega_out)
    np.fill_diagonal(omega_mat, omega_in)
    log_zij = np.empty(m)
    e_gibbs_terms = np.empty(m)
    e_training_terms = np.empty(m)
    for e, (u, v) in enumerate(zip(g.edges_u, g.edges_v)):
        dd = deg[u] * deg[v]
        phi = dd * omega_mat
        zij = float(np.sum(cavity[e] * phi))
        log_zij[e] = math.log(zij)
        e_gibbs_terms[e] = float(np.sum(cavity[e] * np.log(phi)))
        e_training_terms[e] = float(np.sum(cavity[e] * phi * np.log(phi))) / zij

    # non-edge correction from enumerated marginals, matching the
    # theta-field form of the free energy
    overlap = marg @ marg.T
    dd_mat = np.outer(deg, deg)
    pair_term = omega_out + w * overlap
    adj = np.zeros((n, n), dtype=bool)
    adj[g.edges_u, g.edges_v] = True
    adj[g.edges_v, g.edges_u] = True
    non_edge_sum = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if not adj[i, j]:
                non_edge_sum += dd_mat[i, j] * pair_term[i, j]

    bethe = -(log_z + non_edge_sum) / (beta * n)

    return {
        "marginals": marg,
        "theta": theta,
        "log_z": log_z,
        "cavity": cavity,
        "bethe": bethe,
        "e_bayes": 1.0 - float(log_zij.sum()) / m,
        "e_gibbs": 1.0 - float(e_gibbs_terms.sum()) / m,
        "e_training": 1.0 - float(e_training_terms.sum()) / m,
    }


def modularity_pair_sum(g, labels, alpha: float) -> float:
    """Literal O(N^2) modularity: (1/2L) sum_{i<j} delta(c_i,c_j)
    (A_ij - alpha d_i d_j / 2L)."""
    two_l = 2.0 * g.m
    adj = np.zeros((g.n, g.n))
    adj[g.edges_u, g.edges_v] = 1.0
    adj[g.edges_v, g.edges_u] = 1.0
    total = 0.0
    for i in range(g.n):
        for j in range(i + 1, g.n):
            if labels[i] == labels[j]:
                total += adj[i, j] - alpha * g.degrees[i] * g.degrees[j] / two_l
    return total / two_l


def random_tree(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random labeled tree via a Pruefer sequence; returns an
    (n-1, 2) edge array."""
    if n == 1:
        return np.empty((0, 2), dtype=np.int64)
    if n == 2:
        return np.array([[0, 1]], dtype=np.int64)
    prufer = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=np.int64)
    for x in prufer:
        degree[x] += 1
    edges = []
    import heapq
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    for x in prufer:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return np.array(edges, dtype=np.int64)
