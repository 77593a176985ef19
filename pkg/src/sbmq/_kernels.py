"""Numba kernels for the belief-propagation sweeps.

All state lives in flat arrays aligned with the graph's directed-edge
CSR layout. The per-edge neighbor products are accumulated either in the
plain domain or the log domain; the log path is picked automatically by
the caller when exp(beta) products could overflow.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _log_factor(psi: float, beta: float) -> float:
    """log((1 - psi) + psi * e^beta), stable for any beta."""
    if psi <= 0.0:
        return 0.0
    if psi >= 1.0:
        return beta
    a = math.log1p(-psi)
    b = beta + math.log(psi)
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


@njit(cache=True, nogil=True)
def refresh_theta(deg, psi_marg, theta):
    q = psi_marg.shape[1]
    for s in range(q):
        theta[s] = 0.0
    for i in range(psi_marg.shape[0]):
        d = deg[i]
        for s in range(q):
            theta[s] += d * psi_marg[i, s]


@njit(cache=True, nogil=True)
def sweep_kernel(indptr, nbr, rev, src, deg, psi_msg, psi_marg, theta,
                 order, w_diff, beta, damping, use_log):
    """One sequential pass over the directed edges in the given order.

    After each message update the target vertex's marginal and the theta
    field are refreshed. Mutates psi_msg, psi_marg, theta in place and
    returns the max absolute entry change over messages (NaN on overflow
    in the plain domain).
    """
    q = psi_msg.shape[1]
    ebm1 = math.expm1(beta)
    u = np.empty(q)
    prod = np.empty(q)
    newv = np.empty(q)
    refresh_theta(deg, psi_marg, theta)
    max_resid = 0.0

    for t in range(order.shape[0]):
        p = order[t]
        i = src[p]
        j = nbr[p]
        for s in range(q):
            u[s] = -w_diff * deg[i] * theta[s]
        if use_log:
            for p2 in range(indptr[i], indptr[i + 1]):
                if p2 == p:
                    continue
                pin = rev[p2]
                for s in range(q):
                    u[s] += _log_factor(psi_msg[pin, s], beta)
        else:
            for s in range(q):
                prod[s] = 1.0
            for p2 in range(indptr[i], indptr[i + 1]):
                if p2 == p:
                    continue
                pin = rev[p2]
                for s in range(q):
                    prod[s] *= 1.0 + psi_msg[pin, s] * ebm1
            for s in range(q):
                if not math.isfinite(prod[s]):
                    return np.nan
                u[s] += math.log(prod[s]) if prod[s] > 0.0 else -np.inf

        _softmax(u, newv, q)
        for s in range(q):
            mixed = (1.0 - damping) * newv[s] + damping * psi_msg[p, s]
            change = abs(mixed - psi_msg[p, s])
            if change > max_resid:
                max_resid = change
            psi_msg[p, s] = mixed

        # refresh the target vertex marginal and the theta field
        for s in range(q):
            u[s] = -w_diff * deg[j] * theta[s]
        if use_log:
            for p2 in range(indptr[j], indptr[j + 1]):
                pin = rev[p2]
                for s in range(q):
                    u[s] += _log_factor(psi_msg[pin, s], beta)
        else:
            for s in range(q):
                prod[s] = 1.0
            for p2 in range(indptr[j], indptr[j + 1]):
                pin = rev[p2]
                for s in range(q):
                    prod[s] *= 1.0 + psi_msg[pin, s] * ebm1
            for s in range(q):
                if not math.isfinite(prod[s]):
                    return np.nan
                u[s] += math.log(prod[s]) if prod[s] > 0.0 else -np.inf
        _softmax(u, newv, q)
        dj = deg[j]
        for s in range(q):
            theta[s] += dj * (newv[s] - psi_marg[j, s])
            psi_marg[j, s] = newv[s]

    return max_resid


@njit(cache=True, nogil=True, inline="always")
def _softmax(u, out, q):
    mx = -np.inf
    for s in range(q):
        if u[s] > mx:
            mx = u[s]
    if mx == -np.inf:
        for s in range(q):
            out[s] = 1.0 / q
        return
    z = 0.0
    for s in range(q):
        out[s] = math.exp(u[s] - mx)
        z += out[s]
    for s in range(q):
        out[s] /= z


@njit(cache=True, nogil=True)
def marginals_kernel(indptr, rev, deg, psi_msg, theta0, w_diff, beta,
                     use_log, tol, max_iter):
    """Marginals from fixed messages with the theta field iterated to its
    fixed point (synchronous updates). Returns (marginals, theta, iters,
    converged)."""
    n = indptr.shape[0] - 1
    q = psi_msg.shape[1]
    marg = np.empty((n, q))
    theta = theta0.copy()
    theta_new = np.empty(q)
    u = np.empty(q)
    prod = np.empty(q)
    iters = 0
    converged = False
    scale = 0.0
    for i in range(n):
        scale += deg[i]
    if scale == 0.0:
        scale = 1.0

    for it in range(max_iter):
        iters = it + 1
        for s in range(q):
            theta_new[s] = 0.0
        for i in range(n):
            for s in range(q):
                u[s] = -w_diff * deg[i] * theta[s]
            if use_log:
                for p2 in range(indptr[i], indptr[i + 1]):
                    pin = rev[p2]
                    for s in range(q):
                        u[s] += _log_factor(psi_msg[pin, s], beta)
            else:
                ebm1 = math.expm1(beta)
                for s in range(q):
                    prod[s] = 1.0
                for p2 in range(indptr[i], indptr[i + 1]):
                    pin = rev[p2]
                    for s in range(q):
                        prod[s] *= 1.0 + psi_msg[pin, s] * ebm1
                for s in range(q):
                    u[s] += math.log(prod[s]) if prod[s] > 0.0 else -np.inf
            _softmax(u, marg[i], q)
            for s in range(q):
                theta_new[s] += deg[i] * marg[i, s]
        delta = 0.0
        for s in range(q):
            change = abs(theta_new[s] - theta[s])
            if change > delta:
                delta = change
            # damped update: the theta map oscillates under its strong
            # negative feedback when iterated undamped
            theta[s] = 0.5 * theta[s] + 0.5 * theta_new[s]
        if delta <= tol * scale:
            converged = True
            break
    return marg, theta, iters, converged


@njit(cache=True, nogil=True)
def sum_log_zi_kernel(indptr, nbr, rev, deg, psi_msg, theta, w_diff, beta,
                      omega_out, two_l, use_log):
    """Sum over vertices of log Z^i, with
    Z^i = sum_s exp(-d_i h_s) prod_{k in di} d_k d_i omega_out
          (1 + psi^{k->i}_s (e^beta - 1))
    and h_s = 2L omega_out + w_diff theta_s."""
    n = indptr.shape[0] - 1
    q = psi_msg.shape[1]
    u = np.empty(q)
    prod = np.empty(q)
    ebm1 = math.expm1(beta)
    total = 0.0
    for i in range(n):
        di = deg[i]
        const = -two_l * omega_out * di
        for p2 in range(indptr[i], indptr[i + 1]):
            const += math.log(deg[nbr[p2]] * di * omega_out)
        for s in range(q):
            u[s] = -w_diff * di * theta[s]
        if use_log:
            for p2 in range(indptr[i], indptr[i + 1]):
                pin = rev[p2]
                for s in range(q):
                    u[s] += _log_factor(psi_msg[pin, s], beta)
        else:
            for s in range(q):
                prod[s] = 1.0
            for p2 in range(indptr[i], indptr[i + 1]):
                pin = rev[p2]
                for s in range(q):
                    prod[s] *= 1.0 + psi_msg[pin, s] * ebm1
            for s in range(q):
                u[s] += math.log(prod[s]) if prod[s] > 0.0 else -np.inf
        mx = -np.inf
        for s in range(q):
            if u[s] > mx:
                mx = u[s]
        z = 0.0
        for s in range(q):
            z += math.exp(u[s] - mx)
        total += const + mx + math.log(z)
    return total
