"""Two-coin extension: sensitivity and specificity as a rank-2 AMP.

Each worker carries theta_i = (s_i, t_i); true tasks map to the label atom
(1, 0) and false tasks to (0, -1), so the channel is the rank-one g applied
to w = theta . v / sqrt(N) with theta . v = s_i for true tasks and -t_i for
false ones. The AMP updates mirror the rank-one sweep with 2-vectors and
2x2 precision/covariance matrices:

    B_theta_i = S v_hat / sqrt(N) - (alpha / Delta) sigma_v theta_prev_i
    A_theta   = sum_j v_hat_j v_hat_j^T / (N Delta)
    B_v_j     = S^T theta_hat / sqrt(N) - (1 / Delta) sigma_theta v_prev_j
    A_v       = sum_i theta_hat_i theta_hat_i^T / (N Delta)

The label denoiser is exact over the two atoms; the worker denoiser
integrates the factorized (s, t) prior on a 2-d tensor grid under the full
quadratic form exp(-theta^T A theta / 2 + B . theta).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonFiniteIterate
from .model import AnswerMatrix
from .priors import LabelPrior, WorkerPrior
from .rng import stream_rng

_SAMPLE_BLOCK_ROWS = 512
_WORKER_CHUNK = 256  # workers per block in the grid denoiser

LABEL_ATOMS = np.array([[1.0, 0.0], [0.0, -1.0]])  # true, false


@dataclass(frozen=True)
class Rank2Truth:
    """Ground truth for the two-coin model; v0 in {+1 (true), -1 (false)}."""

    s0: np.ndarray
    t0: np.ndarray
    v0: np.ndarray


def channel_two_coin(y: int, s: float, t: float, v: int, nu: float, rho: float,
                     n_workers: int) -> float:
    """P(Y = y | (s, t), v) for the two-coin channel.

    Equals the rank-one channel at w = theta . v / sqrt(N) with
    theta . v = s for v = +1 (atom (1,0)) and -t for v = -1 (atom (0,-1)).
    """
    scale = np.sqrt(nu / n_workers)
    if abs(scale * s) > 1.0 + 1e-12 or abs(scale * t) > 1.0 + 1e-12:
        raise DomainError("|sqrt(nu/N) s| and |sqrt(nu/N) t| must not exceed 1")
    if y == 0:
        return float(rho)
    if y not in (-1, 1):
        raise DomainError(f"y must be in {{-1, 0, +1}}, got {y}")
    dot = s if v == 1 else -t
    return float((1.0 - rho) * (1.0 + y * scale * dot) / 2.0)


def sample_two_coin(n_workers: int, n_tasks: int, nu: float, rho: float,
                    truth: Rank2Truth, seed: int) -> AnswerMatrix:
    """Sample every (i, j) pair through the two-coin channel."""
    scale = np.sqrt(nu / n_workers)
    worst = scale * max(np.max(np.abs(truth.s0)), np.max(np.abs(truth.t0)))
    if worst > 1.0 + 1e-12:
        raise DomainError(f"|sqrt(nu/N) theta| reaches {worst:.4g} > 1")
    rng = stream_rng(seed, 4)
    dot = np.where(truth.v0[None, :] == 1, truth.s0[:, None], -truth.t0[:, None])
    workers, tasks, answers = [], [], []
    for start in range(0, n_workers, _SAMPLE_BLOCK_ROWS):
        stop = min(start + _SAMPLE_BLOCK_ROWS, n_workers)
        p_plus = (1.0 + scale * dot[start:stop]) / 2.0
        answered = rng.random(p_plus.shape) >= rho
        plus = rng.random(p_plus.shape) < p_plus
        w, t = np.nonzero(answered)
        workers.append(w + start)
        tasks.append(t)
        answers.append(np.where(plus[w, t], 1, -1).astype(np.int8))
    return AnswerMatrix(workers=np.concatenate(workers), tasks=np.concatenate(tasks),
                        answers=np.concatenate(answers), n_workers=n_workers,
                        n_tasks=n_tasks)


@dataclass(frozen=True)
class Rank2Config:
    """Iteration controls for :func:`amp_rank2_run`."""

    tol: float = 1e-8
    max_iter: int = 1000
    damping: float = 0.0
    init: str = "prior_sample"
    tie_components: bool = False
    init_sigma_theta: np.ndarray | None = None
    init_sigma_v: np.ndarray | None = None
    early_stop: int | None = None

    def __post_init__(self):
        if self.init not in ("prior_sample", "prior_mean", "majority_vote", "ground_truth"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class Rank2Trajectory:
    change_norm: list = field(default_factory=list)
    min_sigma_eigenvalue: list = field(default_factory=list)


@dataclass(frozen=True)
class Rank2Result:
    theta_hat: np.ndarray         # (N, 2) posterior means of (s, t)
    v_hat: np.ndarray             # (M, 2) on the segment between the atoms
    posterior_true: np.ndarray    # P(v_j = atom (1, 0))
    labels: np.ndarray            # +1 true / -1 false, tie -> +1
    trajectory: Rank2Trajectory
    n_iter: int
    converged: bool
    stopped_early: bool = False


def _worker_grid(s_prior: WorkerPrior, t_prior: WorkerPrior, rule, tie: bool):
    """Tensor grid over (s, t); tied mode restricts to the diagonal s = t."""
    sv, sw = s_prior.atoms(rule) if rule is not None else s_prior.atoms()
    if tie:
        return sv.copy(), sv.copy(), sw.copy()
    tv, tw = t_prior.atoms(rule) if rule is not None else t_prior.atoms()
    ss, tt = np.meshgrid(sv, tv, indexing="ij")
    ww = np.outer(sw, tw)
    return ss.ravel(), tt.ravel(), ww.ravel()


def _grid_moments(gs, gt, gw):
    mean = np.array([gw @ gs, gw @ gt])
    cov = np.array([
        [gw @ (gs * gs) - mean[0] ** 2, gw @ (gs * gt) - mean[0] * mean[1]],
        [gw @ (gs * gt) - mean[0] * mean[1], gw @ (gt * gt) - mean[1] ** 2],
    ])
    return mean, cov


def _denoise_worker_grid(gs, gt, gw, a: np.ndarray, b: np.ndarray):
    """Posterior mean (N, 2) and mean covariance (2, 2) over the grid measure."""
    with np.errstate(divide="ignore"):
        base = np.where(gw > 0, np.log(np.where(gw > 0, gw, 1.0)), -np.inf)
    base = base - 0.5 * (a[0, 0] * gs**2 + 2.0 * a[0, 1] * gs * gt + a[1, 1] * gt**2)
    n = b.shape[0]
    means = np.empty((n, 2))
    cov_sum = np.zeros((2, 2))
    for start in range(0, n, _WORKER_CHUNK):
        stop = min(start + _WORKER_CHUNK, n)
        logits = base[None, :] + np.outer(b[start:stop, 0], gs) + np.outer(b[start:stop, 1], gt)
        peak = logits.max(axis=1, keepdims=True)
        p = np.exp(logits - peak)
        z = p.sum(axis=1)
        es = (p @ gs) / z
        et = (p @ gt) / z
        ess = (p @ (gs * gs)) / z
        ett = (p @ (gt * gt)) / z
        est = (p @ (gs * gt)) / z
        means[start:stop, 0] = es
        means[start:stop, 1] = et
        cov_sum[0, 0] += np.sum(ess - es**2)
        cov_sum[1, 1] += np.sum(ett - et**2)
        cov_sum[0, 1] += np.sum(est - es * et)
    cov = cov_sum / n
    cov[1, 0] = cov[0, 1]
    return means, cov


def _denoise_labels(lp: LabelPrior, a: np.ndarray, b: np.ndarray):
    """Exact two-atom posterior; returns (v_hat, posterior_true, mean covariance)."""
    with np.errstate(divide="ignore"):
        log_true = np.log(max(1.0 - lp.beta, 1e-300)) - 0.5 * a[0, 0] + b[:, 0]
        log_false = np.log(max(lp.beta, 1e-300)) - 0.5 * a[1, 1] - b[:, 1]
    pi = 1.0 / (1.0 + np.exp(np.clip(log_false - log_true, -700.0, 700.0)))
    v_hat = pi[:, None] * LABEL_ATOMS[0] + (1.0 - pi)[:, None] * LABEL_ATOMS[1]
    c = float(np.mean(pi * (1.0 - pi)))
    cov = c * np.ones((2, 2))  # covariance lies along the atom difference (1, 1)
    return v_hat, pi, cov


def _min_eig_2x2(m: np.ndarray) -> float:
    tr, det = m[0, 0] + m[1, 1], m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = max(tr * tr - 4.0 * det, 0.0)
    return 0.5 * (tr - np.sqrt(disc))


def amp_rank2_run(score, delta: float, s_prior: WorkerPrior, t_prior: WorkerPrior,
                  lp: LabelPrior, cfg: Rank2Config | None = None, seed: int = 0,
                  truth: Rank2Truth | None = None, rule=None) -> Rank2Result:
    """Vector AMP for the two-coin model.

    ``score`` is the rank-one FisherScore of the answers (S = Y sqrt(nu));
    labels are decided by the larger posterior atom weight, ties to +1 (the
    (1, 0) atom).
    """
    from .amp import majority_vote

    cfg = cfg or Rank2Config()
    n, m = score.shape
    alpha = m / n
    sqrt_n = np.sqrt(n)
    rng = stream_rng(seed, 5)
    gs, gt, gw = _worker_grid(s_prior, t_prior, rule, cfg.tie_components)
    grid_mean, grid_cov = _grid_moments(gs, gt, gw)

    if cfg.init == "prior_sample":
        draw = rng.choice(gs.size, p=gw / gw.sum(), size=n)
        theta = np.column_stack([gs[draw], gt[draw]])
        pi0 = np.where(rng.random(m) < lp.beta, 0.0, 1.0)
        v = pi0[:, None] * LABEL_ATOMS[0] + (1.0 - pi0)[:, None] * LABEL_ATOMS[1]
    elif cfg.init == "prior_mean":
        theta = np.tile(grid_mean, (n, 1))
        pi0 = np.full(m, 1.0 - lp.beta)
        v = pi0[:, None] * LABEL_ATOMS[0] + (1.0 - pi0)[:, None] * LABEL_ATOMS[1]
    elif cfg.init == "majority_vote":
        votes = majority_vote(score.answers).astype(float)
        pi0 = 0.5 + 0.45 * votes
        theta = np.tile(grid_mean, (n, 1))
        v = pi0[:, None] * LABEL_ATOMS[0] + (1.0 - pi0)[:, None] * LABEL_ATOMS[1]
    else:
        if truth is None:
            raise ValueError('init="ground_truth" requires truth')
        theta = np.column_stack([truth.s0, truth.t0]).astype(float)
        pi0 = (truth.v0 == 1).astype(float)
        v = pi0[:, None] * LABEL_ATOMS[0] + (1.0 - pi0)[:, None] * LABEL_ATOMS[1]

    sigma_theta = np.eye(2) if cfg.init_sigma_theta is None else np.asarray(cfg.init_sigma_theta, float)
    sigma_v = np.eye(2) if cfg.init_sigma_v is None else np.asarray(cfg.init_sigma_v, float)

    trajectory = Rank2Trajectory()
    max_iter = cfg.max_iter if cfg.early_stop is None else min(cfg.max_iter, cfg.early_stop)
    converged = False
    n_iter = 0
    pi = pi0
    # no worker-side reaction on the first sweep: the initial v_hat was not
    # produced from any theta iterate
    onsager_theta = np.zeros((n, 2))
    for it in range(max_iter):
        theta_prev, v_prev = theta, v

        b_theta = np.column_stack([score.dot_v(v[:, 0]), score.dot_v(v[:, 1])]) / sqrt_n \
            - (alpha / delta) * onsager_theta @ sigma_v.T
        a_theta = (v.T @ v) / (n * delta)
        theta, sigma_theta = _denoise_worker_grid(gs, gt, gw, a_theta, b_theta)
        if cfg.damping > 0:
            theta = (1.0 - cfg.damping) * theta + cfg.damping * theta_prev

        b_v = np.column_stack([score.dot_theta(theta[:, 0]), score.dot_theta(theta[:, 1])]) / sqrt_n \
            - (1.0 / delta) * v_prev @ sigma_theta.T
        a_v = (theta.T @ theta) / (n * delta)
        v, pi, sigma_v = _denoise_labels(lp, a_v, b_v)
        if cfg.damping > 0:
            v = (1.0 - cfg.damping) * v + cfg.damping * v_prev
        onsager_theta = theta

        if not (np.isfinite(theta).all() and np.isfinite(v).all()):
            raise NonFiniteIterate(it, "rank-2 AMP iterate")
        trajectory.min_sigma_eigenvalue.append(
            min(_min_eig_2x2(sigma_theta), _min_eig_2x2(sigma_v)))
        change = (float(np.sum((theta - theta_prev) ** 2))
                  + float(np.sum((v - v_prev) ** 2))) / (n + m)
        trajectory.change_norm.append(change)
        n_iter = it + 1
        # same escape-transient guard as the rank-one sweep
        prev_change = trajectory.change_norm[-2] if it > 0 else np.inf
        if change == 0.0 or (change <= cfg.tol and prev_change <= cfg.tol
                             and change <= prev_change):
            converged = True
            break

    stopped_early = (cfg.early_stop is not None and n_iter >= cfg.early_stop
                     and not converged)
    labels = np.where(pi >= 0.5, 1, -1).astype(np.int8)
    return Rank2Result(theta_hat=theta, v_hat=v, posterior_true=pi, labels=labels,
                       trajectory=trajectory, n_iter=n_iter,
                       converged=converged or stopped_early, stopped_early=stopped_early)
