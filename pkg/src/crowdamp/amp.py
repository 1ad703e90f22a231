"""Rank-one approximate message passing for dense crowdsourcing.

The iteration alternates a worker-side and a task-side update per sweep:

    B_theta = S v_hat / sqrt(N) - (alpha / Delta) theta_prev sigma_v
    A_theta = v_hat . v_hat / (N Delta)
    theta_hat <- f_theta(A_theta, B_theta)
    B_v = S^T theta_hat / sqrt(N) - (1 / Delta) v_prev sigma_theta
    A_v = theta_hat . theta_hat / (N Delta)
    v_hat <- f_v(A_v, B_v)

Each Onsager term subtracts the iterate that produced the incoming estimate,
scaled by the mean posterior variance of that estimate; the alpha factor
belongs on the worker side, whose field sums over the M task neighbours.
Convergence is declared once the per-variable squared change of a sweep
stays below the tolerance for two consecutive sweeps without increasing
(the low-noise escape from the unstable uninformative state passes through
a quiet phase that a plain threshold would mistake for a fixed point).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .denoise import denoise
from .errors import DegenerateChannel, NonFiniteIterate
from .model import AnswerMatrix, GroundTruth, ModelParams
from .priors import LabelPrior, WorkerPrior
from .rng import stream_rng

_DENSIFY_FILL = 0.3  # above this fill, dense matvecs beat CSR


def effective_noise(rho: float, nu: float) -> float:
    """Delta = 1 / ((1 - rho) nu), the inverse Fisher information of the channel."""
    fisher = (1.0 - rho) * nu
    if fisher <= 0.0:
        raise DegenerateChannel(
            f"(1 - rho) * nu = {fisher:.3g}; the channel carries no information")
    return 1.0 / fisher


@dataclass(frozen=True)
class FisherScore:
    """Fisher score matrix S = Y sqrt(nu), kept in the answers' sparsity pattern."""

    answers: AnswerMatrix
    nu: float

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.answers.shape

    @property
    def sqrt_nu(self) -> float:
        return float(np.sqrt(self.nu))

    @cached_property
    def _matrix(self):
        # triplet structure for sparse instances; densified above the fill
        # threshold purely for speed
        if self.answers.fill > _DENSIFY_FILL:
            return self.answers.dense
        return self.answers.csr

    def dot_v(self, v: np.ndarray) -> np.ndarray:
        """S @ v (length N)."""
        return self.sqrt_nu * (self._matrix @ v)

    def dot_theta(self, theta: np.ndarray) -> np.ndarray:
        """S^T @ theta (length M)."""
        return self.sqrt_nu * (self._matrix.T @ theta)

    def values(self) -> np.ndarray:
        """Nonzero score values, aligned with the answer triplets."""
        return self.sqrt_nu * self.answers.answers.astype(float)


def fisher_score(y: AnswerMatrix, nu: float) -> FisherScore:
    """S_ij = Y_ij sqrt(nu) elementwise (derivative of the channel log-lik at w=0)."""
    return FisherScore(answers=y, nu=nu)


@dataclass(frozen=True)
class AmpConfig:
    """Iteration controls for :func:`amp_run`.

    init is one of "prior_sample", "prior_mean", "majority_vote",
    "ground_truth". Damping mixes the previous iterate into each update as
    new <- (1 - damping) new + damping old; the undamped sweep converges
    cleanly on well-specified instances, damping helps under model mismatch.
    early_stop caps the sweep count for the early-stopping protocol used on
    real data.
    """

    tol: float = 1e-8
    max_iter: int = 1000
    damping: float = 0.0
    init: str = "prior_sample"
    init_sigma_from_prior: bool = False
    early_stop: int | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")
        if self.init not in ("prior_sample", "prior_mean", "majority_vote", "ground_truth"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class AmpTrajectory:
    """Per-sweep diagnostics; true overlaps only when ground truth is known."""

    change_norm: list = field(default_factory=list)
    self_overlap_theta: list = field(default_factory=list)
    self_overlap_v: list = field(default_factory=list)
    m_theta: list = field(default_factory=list)
    m_v: list = field(default_factory=list)


@dataclass(frozen=True)
class AmpResult:
    theta_hat: np.ndarray
    v_hat: np.ndarray
    labels: np.ndarray
    trajectory: AmpTrajectory
    n_iter: int
    converged: bool
    stopped_early: bool = False


def _initial_estimates(score, wp, lp, cfg, rng, ground_truth):
    n, m = score.shape
    if cfg.init == "prior_sample":
        return wp.sample(rng, n).astype(float), lp.sample(rng, m).astype(float)
    if cfg.init == "prior_mean":
        return np.full(n, wp.mean), np.full(m, lp.mean)
    if cfg.init == "majority_vote":
        votes = majority_vote(score.answers).astype(float)
        # 0.9 scaling keeps the first denoiser inputs away from saturation
        return np.full(n, wp.mean), 0.9 * votes
    if cfg.init == "ground_truth":
        if ground_truth is None:
            raise ValueError('init="ground_truth" requires the ground_truth argument')
        return ground_truth.theta0.astype(float).copy(), ground_truth.v0.astype(float).copy()
    raise ValueError(f"unknown init {cfg.init!r}")


def amp_run(score: FisherScore, delta: float, wp: WorkerPrior, lp: LabelPrior,
            cfg: AmpConfig | None = None, seed: int = 0,
            ground_truth: GroundTruth | None = None) -> AmpResult:
    """Run AMP to a fixed point and decode labels as sign(v_hat), sign(0) = +1.

    Deterministic given (inputs, seed). Returns the best iterate with
    converged=False when the sweep budget runs out; raises NonFiniteIterate
    if the iteration diverges.
    """
    cfg = cfg or AmpConfig()
    if delta <= 0:
        raise ValueError("delta must be positive")
    n, m = score.shape
    alpha = m / n
    sqrt_n = np.sqrt(n)
    rng = stream_rng(seed, 3)
    theta, v = _initial_estimates(score, wp, lp, cfg, rng, ground_truth)
    if cfg.init_sigma_from_prior:
        sigma_theta = wp.second_moment - wp.mean**2
        sigma_v = lp.second_moment - lp.mean**2
    else:
        sigma_theta = 1.0
        sigma_v = 1.0

    trajectory = AmpTrajectory()
    max_iter = cfg.max_iter if cfg.early_stop is None else min(cfg.max_iter, cfg.early_stop)
    converged = False
    n_iter = 0
    # the initial v_hat was not produced from any theta iterate, so the first
    # worker-side Onsager reaction is zero (the "old" estimates start at 0)
    onsager_theta = np.zeros(n)
    for it in range(max_iter):
        theta_prev, v_prev = theta, v

        b_theta = score.dot_v(v) / sqrt_n - (alpha / delta) * onsager_theta * sigma_v
        a_theta = float(v @ v) / (n * delta)
        res_theta = denoise(wp, a_theta, b_theta)
        sigma_theta = float(res_theta.variance.mean())
        theta = res_theta.mean
        if cfg.damping > 0:
            theta = (1.0 - cfg.damping) * theta + cfg.damping * theta_prev

        b_v = score.dot_theta(theta) / sqrt_n - (1.0 / delta) * v_prev * sigma_theta
        a_v = float(theta @ theta) / (n * delta)
        res_v = denoise(lp, a_v, b_v)
        sigma_v = float(res_v.variance.mean())
        v = res_v.mean
        if cfg.damping > 0:
            v = (1.0 - cfg.damping) * v + cfg.damping * v_prev
        # the v just computed came from this sweep's theta, which is what the
        # next worker-side reaction must subtract
        onsager_theta = theta

        if not (np.isfinite(theta).all() and np.isfinite(v).all()):
            raise NonFiniteIterate(it, "AMP iterate")

        change = (float(np.sum((theta - theta_prev) ** 2))
                  + float(np.sum((v - v_prev) ** 2))) / (n + m)
        trajectory.change_norm.append(change)
        trajectory.self_overlap_theta.append(float(theta @ theta) / n)
        trajectory.self_overlap_v.append(float(v @ v) / m)
        if ground_truth is not None:
            trajectory.m_theta.append(float(theta @ ground_truth.theta0) / n)
            trajectory.m_v.append(float(v @ ground_truth.v0) / m)
        n_iter = it + 1
        # two consecutive sub-tolerance sweeps with non-increasing change:
        # the low-noise escape from the unstable uninformative state passes
        # through a quiet phase whose change norm grows strictly, and a plain
        # threshold would stop there
        prev_change = trajectory.change_norm[-2] if it > 0 else np.inf
        if change == 0.0 or (change <= cfg.tol and prev_change <= cfg.tol
                             and change <= prev_change):
            converged = True
            break

    stopped_early = (cfg.early_stop is not None and n_iter >= cfg.early_stop
                     and not converged)
    labels = np.where(v >= 0.0, 1, -1).astype(np.int8)
    return AmpResult(theta_hat=theta, v_hat=v, labels=labels, trajectory=trajectory,
                     n_iter=n_iter, converged=converged or stopped_early,
                     stopped_early=stopped_early)


def majority_vote(y: AnswerMatrix) -> np.ndarray:
    """Per-task sign of the answer sum; ties (and empty columns) go to +1."""
    return np.where(y.column_sums() >= 0.0, 1, -1).astype(np.int8)


def oracle_error(y: AnswerMatrix, gt: GroundTruth, params: ModelParams,
                 lp: LabelPrior | None = None) -> float:
    """Error rate of the Bayes decision that knows the true reliabilities.

    Per task, the label log-likelihood ratio is the label-prior log odds plus
    sum_i [g(Y_ij, +theta0_i/sqrt(N)) - g(Y_ij, -theta0_i/sqrt(N))]
    = sum_i 2 atanh(sqrt(nu/N) theta0_i) Y_ij over answered pairs; the oracle
    decides its sign (ties to +1). This lower-bounds any estimator without
    reliability side information.
    """
    lp = lp or LabelPrior(beta=0.5)
    c = np.sqrt(params.nu / params.n_workers) * gt.theta0
    c = np.clip(c, -1.0 + 1e-15, 1.0 - 1e-15)  # boundary hammers stay decisive
    edge_llr = 2.0 * np.arctanh(c[y.workers]) * y.answers
    llr = np.bincount(y.tasks, weights=edge_llr, minlength=y.n_tasks)
    log_odds = lp.log_odds if np.isfinite(lp.log_odds) else np.sign(lp.log_odds) * 1e6
    labels = np.where(llr + log_odds >= 0.0, 1, -1)
    return float(np.mean(labels != gt.v0))
