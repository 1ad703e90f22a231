"""State evolution: the scalar recursion tracking AMP's overlaps.

The overlap pair (M_theta, M_v) evolves as

    M_theta = E_{theta0, W}[ f_theta(A, A theta0 + sqrt(A) W) theta0 ],  A = alpha M_v / Delta
    M_v'    = E_{v0, W}    [ f_v(A', A' v0   + sqrt(A') W) v0 ],        A' = M_theta / Delta

with W standard Gaussian. Expectations over discrete priors are exact atom
sums; continuous priors are discretized per component; the W average uses
Gauss-Hermite quadrature. Fixed points from the informative and (perturbed)
uninformative initializations bracket the algorithmic behaviour of AMP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import ndtr

from .denoise import denoise, denoise_label
from .errors import UnsupportedBias
from .priors import GaussianMixture, LabelPrior, WorkerPrior

_DEFAULT_NODES = 127
_BATCH_ELEMENT_BUDGET = 1 << 22  # cap lane-chunk size of the (D, K, Q) field grid

InitKind = Literal["informative", "uninformative"]


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for expectations over the standard Gaussian."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size


def gauss_hermite_rule(n_nodes: int = _DEFAULT_NODES) -> QuadratureRule:
    """Gauss-Hermite rule rescaled to the standard Gaussian measure."""
    x, w = np.polynomial.hermite.hermgauss(n_nodes)
    return QuadratureRule(nodes=np.sqrt(2.0) * x, weights=w / np.sqrt(np.pi))


@dataclass(frozen=True)
class SEState:
    """Overlap pair tracked by state evolution."""

    m_theta: float
    m_v: float


@dataclass(frozen=True)
class SEFixedPoint:
    """A state-evolution fixed point with its error map."""

    state: SEState
    mse_theta: float
    er_v: float
    r_v: float
    iterations: int
    init_kind: InitKind
    converged: bool = True


def _prior_atoms(prior, rule: QuadratureRule):
    if isinstance(prior, LabelPrior):
        return prior.atoms()
    return prior.atoms(rule)


def _overlap_update_batch(m: np.ndarray, a_scale: np.ndarray, prior, rule: QuadratureRule) -> np.ndarray:
    """E[f(a, a x0 + sqrt(a) W) x0] for a = a_scale * m, batched over lanes."""
    values, weights = _prior_atoms(prior, rule)
    a = np.maximum(a_scale * m, 0.0)  # overlaps are nonnegative; clip roundoff
    k, q = values.size, rule.n_nodes
    lanes_per_chunk = max(1, _BATCH_ELEMENT_BUDGET // (k * q))
    out = np.empty_like(a)
    for start in range(0, a.size, lanes_per_chunk):
        stop = min(start + lanes_per_chunk, a.size)
        a_c = a[start:stop, None, None]
        field = a_c * values[None, :, None] + np.sqrt(a_c) * rule.nodes[None, None, :]
        f = denoise(prior, np.broadcast_to(a_c, field.shape), field).mean
        out[start:stop] = np.einsum("i,j,dij->d", weights * values, rule.weights, f)
    return out


def _se_sweep_batch(m_theta, m_v, alpha, deltas, wp, lp, rule):
    """One SE sweep for every lane: theta update first, then v."""
    new_theta = _overlap_update_batch(m_v, alpha / deltas, wp, rule)
    new_v = _overlap_update_batch(new_theta, 1.0 / deltas, lp, rule)
    return new_theta, new_v


def se_step(state: SEState, alpha: float, delta: float, wp: WorkerPrior,
            lp: LabelPrior, rule: QuadratureRule | None = None) -> SEState:
    """Advance (M_theta, M_v) by one step of the recursion.

    M_theta is refreshed from the current M_v, and the returned M_v is
    computed from that fresh M_theta (the fixed points do not depend on this
    within-step ordering).
    """
    rule = rule or gauss_hermite_rule()
    th, v = _se_sweep_batch(np.array([state.m_theta]), np.array([state.m_v]),
                            alpha, np.array([float(delta)]), wp, lp, rule)
    return SEState(m_theta=float(th[0]), m_v=float(v[0]))


def initial_state(init: InitKind, wp: WorkerPrior, lp: LabelPrior,
                  perturb: float = 1e-7) -> SEState:
    """Starting overlaps: prior-mean squares (uninformative) or second moments.

    The uninformative point is perturbed because it can be an exactly
    stationary (if unstable) point of the recursion; the perturbation stands
    in for the O(1/sqrt(N)) fluctuations of a finite instance.
    """
    if init == "informative":
        return SEState(m_theta=wp.second_moment, m_v=lp.second_moment)
    if init == "uninformative":
        return SEState(m_theta=wp.mean**2 + perturb, m_v=lp.mean**2 + perturb)
    raise ValueError(f"unknown initialization {init!r}")


def se_fixed_points_batch(init: InitKind, alpha: float, deltas: np.ndarray,
                          wp: WorkerPrior, lp: LabelPrior,
                          rule: QuadratureRule | None = None,
                          tol: float = 1e-12, max_iter: int = 100_000,
                          perturb: float = 1e-7):
    """Iterate the recursion to a fixed point for every Delta lane at once.

    Returns arrays (m_theta, m_v, iterations, converged). Lanes freeze once
    |dM_theta| + |dM_v| < tol; all lanes follow exactly the scalar recursion.
    """
    rule = rule or gauss_hermite_rule()
    deltas = np.asarray(deltas, dtype=float)
    start = initial_state(init, wp, lp, perturb)
    m_theta = np.full(deltas.shape, start.m_theta)
    m_v = np.full(deltas.shape, start.m_v)
    iterations = np.zeros(deltas.shape, dtype=np.int64)
    active = np.ones(deltas.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        new_th, new_v = _se_sweep_batch(m_theta[idx], m_v[idx], alpha, deltas[idx], wp, lp, rule)
        change = np.abs(new_th - m_theta[idx]) + np.abs(new_v - m_v[idx])
        m_theta[idx] = new_th
        m_v[idx] = new_v
        iterations[idx] += 1
        active[idx] = change >= tol
    return m_theta, m_v, iterations, ~active


def se_fixed_point(init: InitKind, alpha: float, delta: float, wp: WorkerPrior,
                   lp: LabelPrior, rule: QuadratureRule | None = None,
                   tol: float = 1e-12, max_iter: int = 100_000,
                   perturb: float = 1e-7) -> SEFixedPoint:
    """Run state evolution from one initialization and map the overlaps to errors."""
    rule = rule or gauss_hermite_rule()
    th, v, iters, conv = se_fixed_points_batch(
        init, alpha, np.array([float(delta)]), wp, lp, rule, tol, max_iter, perturb)
    mse, r_v, er = overlap_to_errors(float(th[0]), delta, wp, lp, rule)
    return SEFixedPoint(state=SEState(m_theta=float(th[0]), m_v=float(v[0])),
                        mse_theta=mse, er_v=er, r_v=r_v,
                        iterations=int(iters[0]), init_kind=init, converged=bool(conv[0]))


def sign_overlap(m_theta_star: float, delta: float, lp: LabelPrior) -> float:
    """E[sign(f_v(A, A v0 + sqrt(A) W)) v0] at A = M_theta / Delta, sign(0) = +1.

    For the two-atom label prior the sign of f_v = tanh(B + h0) reduces to a
    threshold on W, so the expectation is a Gaussian tail probability; no
    quadrature across the sign discontinuity is needed.
    """
    a = m_theta_star / delta
    beta = lp.beta
    if a <= 0.0:
        if beta == 0.5:
            return 0.0  # f_v == 0, sign(0) = +1, E[v0] = 0
        sign0 = 1.0 if lp.log_odds >= 0 else -1.0
        return sign0 * (1.0 - 2.0 * beta)
    if beta == 0.0 or beta == 1.0:
        return 1.0
    h0 = 0.5 * lp.log_odds
    sqrt_a = np.sqrt(a)
    plus = 2.0 * ndtr((a + h0) / sqrt_a) - 1.0
    minus = 2.0 * ndtr((a - h0) / sqrt_a) - 1.0
    return float((1.0 - beta) * plus + beta * minus)


def overlap_to_errors(m_theta_star: float, delta: float, wp: WorkerPrior,
                      lp: LabelPrior, rule: QuadratureRule | None = None):
    """Map a fixed-point overlap to (MSE_theta, R_v, ER_v)."""
    if m_theta_star < 0:
        raise ValueError("m_theta_star must be nonnegative")
    r_v = sign_overlap(m_theta_star, delta, lp)
    er_v = (1.0 - r_v) / 2.0
    mse_theta = wp.second_moment - m_theta_star
    return mse_theta, r_v, er_v


# ---- closed-form recursion for the two-Gaussian mixture prior ---------------


def mixture_t_function(q: float, gm: GaussianMixture, rule: QuadratureRule,
                       variant: str = "corrected") -> float:
    """The scalar map T(q) giving M_theta for a Gaussian-mixture prior.

    ``variant="corrected"`` evaluates the overlap E[f_theta^2] in a form
    equivalent to the generic quadrature path (validated against it to
    ~1e-10). ``variant="printed"`` reproduces the published display, which
    carries three typos (an unsquared bracket in the Gaussian exponent Q, a
    left/right variance swap, and a missing variance factor); it diverges
    from the generic path and is kept only for documentation.
    """
    w, z = rule.weights, rule.nodes
    mu, mL, mR = gm.mu, gm.mean_left, gm.mean_right
    vL, vR = gm.var_left, gm.var_right
    if mu == 0.0:
        # all mass in the left component: single-Gaussian overlap
        sL = 1.0 + q * vL
        return mL**2 + q * vL**2 / sL if q > 0 else mL**2
    sR = 1.0 + q * vR
    sL = 1.0 + q * vL
    r = (1.0 - mu) / mu
    if q <= 0:
        return gm.mean**2
    if variant == "printed":
        qq = (sR / sL) * (z + np.sqrt(q / sR) * (mR - mL)) - z**2
        e = np.exp(-0.5 * qq)
        num = (mR + np.sqrt(q / sR) * vL * z) \
            + r * (sR / sL) ** 1.5 * ((mL + q * vL * mR) / sR + np.sqrt(q / sR) * z) * e
        den = 1.0 + r * np.sqrt(sR / sL) * e
        return float(mu * np.sum(w * num**2 / den))
    if variant == "corrected":
        qq = (sR / sL) * (z + np.sqrt(q / sR) * (mR - mL)) ** 2 - z**2
        eps = np.sqrt(sR / sL) * np.exp(-0.5 * qq)
        mean_r = mR + vR * np.sqrt(q / sR) * z
        mean_l = (mL + q * vL * mR + vL * np.sqrt(q * sR) * z) / sL
        num = (mean_r + r * eps * mean_l) ** 2
        den = 1.0 + r * eps
        return float(mu * np.sum(w * num / den))
    raise ValueError(f"unknown variant {variant!r}")


def mixture_g_function(x: float, rule: QuadratureRule, variant: str = "corrected") -> float:
    """The label map G(x) for unbiased labels.

    The printed display E_W[tanh(x + sqrt(x) W) - tanh(-x + sqrt(x) W)]
    equals twice the overlap (it omits the 1/2 label-prior weights); the
    corrected variant halves it. G(0) = 0 for both.
    """
    if x <= 0:
        return 0.0
    w, z = rule.weights, rule.nodes
    val = float(np.sum(w * (np.tanh(x + np.sqrt(x) * z) - np.tanh(-x + np.sqrt(x) * z))))
    return val if variant == "printed" else 0.5 * val


def se_step_gaussian_mixture(m_v: float, alpha: float, delta: float,
                             gm: GaussianMixture, lp: LabelPrior,
                             rule: QuadratureRule | None = None,
                             variant: str = "corrected") -> float:
    """Closed-form M_v update M_v' = G(T(alpha M_v / Delta) / Delta).

    Only stated for unbiased labels; raises UnsupportedBias otherwise. The
    corrected variant agrees with the generic se_step to quadrature accuracy;
    the printed variant reproduces the published (typo-carrying) display.
    """
    if lp.beta != 0.5:
        raise UnsupportedBias("the mixture closed form requires beta = 1/2")
    rule = rule or gauss_hermite_rule()
    t = mixture_t_function(alpha * m_v / delta, gm, rule, variant)
    return mixture_g_function(t / delta, rule, variant)
