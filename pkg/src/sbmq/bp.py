"""EM fitting of the restricted degree-corrected SBM.

The E step runs belief propagation over directed-edge cavity messages
with the mean-field theta term standing in for non-edge interactions;
the M step updates (omega_in, omega_out) in closed form. The affinity is
the two-parameter community form, so a fit is parameterized by
(omega_in, omega_out) alone, with the resolution parameter alpha and the
inverse temperature beta derived from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import Graph

# learned affinities are floored at this fraction of the larger one, so
# beta = log(omega_in/omega_out) stays finite on perfectly split states
_OMEGA_RATIO_FLOOR = 1e-15

# kernels move the neighbor products into the log domain beyond these
_LOG_DOMAIN_BETA = 20.0
_LOG_DOMAIN_BETA_DMAX = 400.0

_THETA_TOL = 1e-13
_THETA_MAX_ITER = 2000


class BpOverflowError(FloatingPointError):
    """Plain-domain message product overflowed; use the log-domain path."""


class DegeneratePartitionError(ValueError):
    """M-step denominator vanished (all mass in a single cluster)."""


@dataclass(frozen=True)
class ModelParams:
    """Restricted affinity (omega_in, omega_out) tied to a graph scale 2L.

    alpha and beta are always derived from the stored affinities:
    beta = log(omega_in/omega_out), alpha = 2L (omega_in - omega_out) / beta.
    """

    omega_in: float
    omega_out: float
    two_l: int

    def __post_init__(self):
        if not (self.omega_in > 0.0 and self.omega_out > 0.0):
            raise ValueError("omega_in and omega_out must be strictly positive")

    @property
    def beta(self) -> float:
        return math.log(self.omega_in / self.omega_out)

    @property
    def alpha(self) -> float:
        b = self.beta
        if b == 0.0:
            return float("nan")
        return self.two_l * (self.omega_in - self.omega_out) / b

    @property
    def w_diff(self) -> float:
        return self.omega_in - self.omega_out

    def omega(self, same: bool) -> float:
        return self.omega_in if same else self.omega_out

    @staticmethod
    def from_alpha_beta(alpha: float, beta: float, two_l: int) -> "ModelParams":
        if beta == 0.0:
            raise ValueError("beta must be nonzero to recover affinities")
        omega_out = alpha * beta / (two_l * math.expm1(beta))
        return ModelParams(omega_in=omega_out * math.exp(beta),
                           omega_out=omega_out, two_l=two_l)


@dataclass
class Messages:
    """Cavity distributions, one probability row per directed edge."""

    psi: np.ndarray  # (2m, q)

    @property
    def q(self) -> int:
        return self.psi.shape[1]

    def validate(self, tol: float = 1e-12) -> None:
        if self.psi.size:
            if self.psi.min() < 0:
                raise ValueError("messages must be non-negative")
            err = np.abs(self.psi.sum(axis=1) - 1.0).max()
            if err > tol:
                raise ValueError(f"messages not normalized (max drift {err:.3g})")

    def copy(self) -> "Messages":
        return Messages(self.psi.copy())


@dataclass
class Marginals:
    """Per-vertex cluster beliefs plus the degree-weighted field theta."""

    psi: np.ndarray    # (n, q)
    theta: np.ndarray  # (q,)

    @property
    def q(self) -> int:
        return self.psi.shape[1]

    def validate(self, two_l: int, tol: float = 1e-12) -> None:
        err = np.abs(self.psi.sum(axis=1) - 1.0).max() if self.psi.size else 0.0
        if err > tol:
            raise ValueError(f"marginals not normalized (max drift {err:.3g})")
        if abs(float(self.theta.sum()) - two_l) > 1e-8 * max(1.0, two_l):
            raise ValueError("theta field does not sum to 2L")

    def hard_labels(self) -> np.ndarray:
        """Argmax labels; ties resolve to the lowest cluster index."""
        return np.argmax(self.psi, axis=1).astype(np.int64)

    def copy(self) -> "Marginals":
        return Marginals(self.psi.copy(), self.theta.copy())


@dataclass
class EmResult:
    marginals: Marginals
    messages: Messages
    params: ModelParams
    converged: bool
    factorized: bool
    sweeps_used: int
    bethe_free_energy: float
    q: int
    seed: int | None = None
    restart: int = 0

    def to_dict(self, include_marginals: bool = False) -> dict:
        out = {
            "q": self.q,
            "omega_in": float(self.params.omega_in),
            "omega_out": float(self.params.omega_out),
            "alpha": _json_float(self.params.alpha),
            "beta": _json_float(self.params.beta),
            "converged": self.converged,
            "factorized": self.factorized,
            "sweeps_used": self.sweeps_used,
            "bethe_free_energy": _json_float(self.bethe_free_energy),
            "seed": self.seed,
            "restart": self.restart,
        }
        if include_marginals:
            out["marginals"] = [[float(x) for x in row] for row in self.marginals.psi]
        return out


def _json_float(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def beta_star(q: int, c: float) -> float:
    """Critical inverse temperature between the paramagnetic and
    spin-glass phases for the equal-size planted model:
    log(q/(sqrt(c)-1) + 1)."""
    if c <= 1.0:
        raise ValueError("beta_star requires mean degree c > 1")
    return math.log(q / (math.sqrt(c) - 1.0) + 1.0)


def beta_zero(q: int, c: float) -> float:
    """Lower reference value of beta below which BP stays paramagnetic:
    log(q/(c-1) + 1)."""
    if c <= 1.0:
        raise ValueError("beta_zero requires mean degree c > 1")
    return math.log(q / (c - 1.0) + 1.0)


def use_log_domain(params: ModelParams, g: Graph) -> bool:
    beta = abs(params.beta)
    dmax = float(g.degrees.max()) if g.n else 0.0
    return beta > _LOG_DOMAIN_BETA or beta * dmax > _LOG_DOMAIN_BETA_DMAX


def uniform_messages(g: Graph, q: int) -> Messages:
    return Messages(np.full((2 * g.m, q), 1.0 / q))


def random_messages(g: Graph, q: int, rng: np.random.Generator,
                    noise: float = 0.1) -> Messages:
    psi = 1.0 / q + noise * rng.random((2 * g.m, q))
    psi /= psi.sum(axis=1, keepdims=True)
    return Messages(psi)


def compute_marginals(g: Graph, params: ModelParams, msgs: Messages,
                      log_domain: bool | None = None) -> Marginals:
    """Vertex marginals from fixed messages, with theta iterated to its
    self-consistent fixed point."""
    use_log = use_log_domain(params, g) if log_domain is None else log_domain
    q = msgs.q
    theta0 = np.full(q, 2.0 * g.m / q)
    marg, theta, _, converged = _kernels.marginals_kernel(
        g.indptr, g.reverse, g.degrees.astype(np.float64), msgs.psi,
        theta0, params.w_diff, params.beta, use_log,
        _THETA_TOL, _THETA_MAX_ITER)
    if not converged and g.m > 0:
        # theta oscillation: fall back to an averaged restart
        marg, theta, _, _ = _kernels.marginals_kernel(
            g.indptr, g.reverse, g.degrees.astype(np.float64), msgs.psi,
            (theta0 + theta) / 2.0, params.w_diff, params.beta, use_log,
            _THETA_TOL, _THETA_MAX_ITER)
    return Marginals(marg, theta)


def _log_factors(psi: np.ndarray, beta: float, use_log: bool) -> np.ndarray:
    """log(1 + psi (e^beta - 1)) per message entry, stable for any beta."""
    if not use_log:
        return np.log1p(psi * math.expm1(beta))
    with np.errstate(divide="ignore"):
        return np.logaddexp(np.log1p(-np.minimum(psi, 1.0)), beta + np.log(psi))


def _softmax_rows(u: np.ndarray) -> np.ndarray:
    mx = u.max(axis=1, keepdims=True)
    bad = ~np.isfinite(mx[:, 0])
    safe = np.where(np.isfinite(mx), mx, 0.0)
    out = np.exp(u - safe)
    out /= out.sum(axis=1, keepdims=True)
    if bad.any():
        out[bad] = 1.0 / u.shape[1]
    return out


def _sync_sweep(g: Graph, params: ModelParams, psi: np.ndarray,
                theta: np.ndarray, damping: float, use_log: bool
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """One synchronous update of all messages from a snapshot of the
    current state, plus refreshed marginals and theta. Vectorized."""
    n, q = g.n, psi.shape[1]
    deg = g.degrees.astype(np.float64)
    lf = _log_factors(psi, params.beta, use_log)
    if not use_log and not np.all(np.isfinite(lf)):
        raise BpOverflowError(
            "message product overflowed in the plain domain; "
            "rerun with log_domain=True")
    incoming = np.empty((n, q))
    for s in range(q):
        incoming[:, s] = np.bincount(g.neighbors, weights=lf[:, s], minlength=n)
    field = -params.w_diff * deg[:, None] * theta[None, :]
    u = field[g.edge_src] + incoming[g.edge_src] - lf[g.reverse]
    new_psi = _softmax_rows(u)
    mixed = (1.0 - damping) * new_psi + damping * psi
    resid = float(np.abs(mixed - psi).max()) if psi.size else 0.0
    marg = _softmax_rows(field + incoming)
    theta_new = deg @ marg
    return mixed, marg, theta_new, resid


def bp_sweep(g: Graph, params: ModelParams, msgs: Messages,
             damping: float = 0.0, schedule: str = "synchronous",
             order: np.ndarray | None = None,
             log_domain: bool | None = None,
             marginals: Marginals | None = None) -> tuple[Messages, float]:
    """One full update pass over all directed messages.

    The default schedule updates every message from a snapshot of the
    previous state with theta refreshed once per pass; the "sequential"
    schedule updates messages one by one (in ``order``, defaulting to
    storage order) with theta refreshed after every update. Returns the
    new messages and the max absolute entry change.
    """
    if not (0.0 <= damping < 1.0):
        raise ValueError("damping must lie in [0, 1)")
    use_log = use_log_domain(params, g) if log_domain is None else log_domain
    if marginals is None:
        marginals = compute_marginals(g, params, msgs, log_domain=use_log)
    else:
        marginals = marginals.copy()
    if schedule == "synchronous":
        mixed, _, _, resid = _sync_sweep(g, params, msgs.psi, marginals.theta,
                                         damping, use_log)
        return Messages(mixed), resid
    if schedule != "sequential":
        raise ValueError(f"unknown schedule {schedule!r}")
    out = msgs.copy()
    if order is None:
        order = np.arange(2 * g.m, dtype=np.int64)
    resid = _kernels.sweep_kernel(
        g.indptr, g.neighbors, g.reverse, g.edge_src,
        g.degrees.astype(np.float64), out.psi, marginals.psi,
        marginals.theta, order, params.w_diff, params.beta,
        damping, use_log)
    if math.isnan(resid):
        raise BpOverflowError(
            "message product overflowed in the plain domain; "
            "rerun with log_domain=True")
    return out, float(resid)


def edge_overlaps(g: Graph, msgs: Messages) -> np.ndarray:
    """s_ij = sum_s psi(u->v)_s psi(v->u)_s per undirected edge."""
    p_uv = g.edge_dir_index
    p_vu = g.reverse[p_uv]
    return np.einsum("es,es->e", msgs.psi[p_uv], msgs.psi[p_vu])


def m_step(g: Graph, msgs: Messages, marginals: Marginals,
           params: ModelParams) -> ModelParams:
    """Closed-form affinity update from the current BP state.

    omega_in = 2 sum_E T_ij / sum_s theta_s^2 and
    omega_out = 2 (L - sum_E T_ij) / ((2L)^2 - sum_s theta_s^2), with the
    two-point same-cluster probability
    T_ij = omega_in s_ij / ((omega_in - omega_out) s_ij + omega_out).
    Strict positivity is kept with a relative floor at 1e-15 of the
    larger affinity.
    """
    two_l = 2.0 * g.m
    s = edge_overlaps(g, msgs)
    t_sum = float(np.sum(params.omega_in * s / (params.w_diff * s + params.omega_out)))
    theta_sq = float(np.sum(marginals.theta ** 2))
    if theta_sq <= 0.0:
        raise DegeneratePartitionError("theta field vanished")
    denom_out = two_l ** 2 - theta_sq
    if denom_out <= 0.0:
        raise DegeneratePartitionError(
            "all degree mass sits in one cluster; omega_out undefined")
    omega_in = 2.0 * t_sum / theta_sq
    omega_out = 2.0 * (g.m - t_sum) / denom_out
    floor = _OMEGA_RATIO_FLOOR * max(omega_in, omega_out)
    if floor <= 0.0:
        raise DegeneratePartitionError("both affinity estimates vanished")
    return ModelParams(omega_in=max(omega_in, floor),
                       omega_out=max(omega_out, floor), two_l=g.m * 2)


def initial_params(g: Graph, q: int, learn: bool = True) -> ModelParams:
    """Starting point for EM: alpha = 1 with beta at the midpoint of
    [beta_zero, beta_star] (beta_star itself in frozen mode); beta = 1
    when the mean degree makes the references undefined."""
    c = g.mean_degree
    if c > 1.0 + 1e-12:
        beta = beta_star(q, c) if not learn else 0.5 * (beta_zero(q, c) + beta_star(q, c))
    else:
        beta = 1.0
    return ModelParams.from_alpha_beta(1.0, beta, 2 * g.m)


def _trivial_q1_result(g: Graph, seed: int | None) -> EmResult:
    two_l = 2 * g.m
    omega = 1.0 / two_l if two_l else 1.0
    params = ModelParams(omega_in=omega, omega_out=omega, two_l=two_l)
    marg = Marginals(np.ones((g.n, 1)), np.array([float(two_l)]))
    msgs = Messages(np.ones((2 * g.m, 1)))
    return EmResult(marginals=marg, messages=msgs, params=params,
                    converged=True, factorized=True, sweeps_used=0,
                    bethe_free_energy=float("nan"), q=1, seed=seed)


def em_fit(g: Graph, q: int, seed: int | None = None, restarts: int = 5,
           max_sweeps: int = 500, msg_tol: float = 1e-6,
           param_tol: float = 1e-5, max_em_iters: int = 100,
           damping: float = 0.0, factorized_tol: float = 1e-3,
           learn_params: bool = True, noise: float = 0.1) -> EmResult:
    """Fit the restricted model at a given q, best of ``restarts`` runs.

    Each restart alternates BP sweeps to convergence with the closed-form
    M step until the relative parameter change drops below ``param_tol``.
    Restarts are ranked by Bethe free energy. Never raises on
    non-convergence; the flag is reported instead.
    """
    from .criteria import bethe_free_energy  # deferred: criteria imports our types

    if q < 1:
        raise ValueError("q must be >= 1")
    if g.m == 0:
        raise ValueError("cannot fit a graph with no edges")
    if q == 1:
        return _trivial_q1_result(g, seed)

    seed_seq = np.random.SeedSequence(seed)
    children = seed_seq.spawn(restarts)
    best: EmResult | None = None
    best_key = (math.inf, math.inf)

    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        result = _em_single(g, q, rng, max_sweeps=max_sweeps, msg_tol=msg_tol,
                            param_tol=param_tol, max_em_iters=max_em_iters,
                            damping=damping, factorized_tol=factorized_tol,
                            learn_params=learn_params, noise=noise)
        result.seed = seed
        result.restart = r
        try:
            result.bethe_free_energy = bethe_free_energy(
                g, result.messages, result.marginals, result.params)
        except ValueError:
            result.bethe_free_energy = float("nan")
        f = result.bethe_free_energy
        key = (f if math.isfinite(f) else math.inf, r)
        if best is None or key < best_key:
            best, best_key = result, key
    assert best is not None
    return best


def _em_single(g: Graph, q: int, rng: np.random.Generator, *, max_sweeps: int,
               msg_tol: float, param_tol: float, max_em_iters: int,
               damping: float, factorized_tol: float, learn_params: bool,
               noise: float) -> EmResult:
    params = initial_params(g, q, learn=learn_params)
    msgs = random_messages(g, q, rng, noise=noise)
    marg = compute_marginals(g, params, msgs)
    sweeps_total = 0
    em_converged = False

    for _ in range(max_em_iters if learn_params else 1):
        use_log = use_log_domain(params, g)
        current_damping = damping
        resid_hist: list[float] = []
        e_converged = False
        psi, theta = msgs.psi, marg.theta
        marg_psi = marg.psi
        for _sweep in range(max_sweeps):
            try:
                psi, marg_psi, theta, resid = _sync_sweep(
                    g, params, psi, theta, current_damping, use_log)
            except BpOverflowError:
                use_log = True
                continue
            sweeps_total += 1
            resid_hist.append(resid)
            if resid < msg_tol:
                e_converged = True
                break
            if (current_damping == 0.0 and len(resid_hist) > 10
                    and resid_hist[-1] >= resid_hist[-11]):
                current_damping = 0.5
        msgs = Messages(psi)
        marg = Marginals(marg_psi, theta)
        if not learn_params:
            em_converged = e_converged
            break
        try:
            new_params = m_step(g, msgs, marg, params)
        except DegeneratePartitionError:
            em_converged = False
            break
        rel = max(abs(new_params.omega_in - params.omega_in) / params.omega_in,
                  abs(new_params.omega_out - params.omega_out) / params.omega_out)
        params = new_params
        if rel < param_tol and e_converged:
            em_converged = True
            break

    marg = compute_marginals(g, params, msgs)
    factorized = bool(np.max(np.abs(marg.psi - 1.0 / q)) < factorized_tol) if g.n else True
    return EmResult(marginals=marg, messages=msgs, params=params,
                    converged=em_converged, factorized=factorized,
                    sweeps_used=sweeps_total, bethe_free_energy=float("nan"),
                    q=q)
