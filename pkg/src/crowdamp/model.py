"""Dense Dawid-Skene model: parameters, ground truth, and answer sampling.

A worker i with rescaled reliability theta_i answers task j (true label
v_j in {+/-1}) correctly with probability (1 + sqrt(nu/N) theta_i v_j) / 2,
and leaves it blank with probability rho. Answers are stored as coordinate
triplets so that both dense matrix products and sparse adjacency walks are
cheap.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ChannelOverflow, DegreeTooLarge, DomainError
from .priors import LabelPrior, WorkerPrior
from .rng import stream_rng

_SAMPLE_BLOCK_ROWS = 512  # cap memory of dense sampling at ~block * M temporaries


@dataclass(frozen=True)
class ModelParams:
    """Dimensions and channel parameters of a dense DS instance."""

    n_workers: int
    n_tasks: int
    nu: float
    rho: float = 0.0

    def __post_init__(self):
        if self.n_workers <= 0 or self.n_tasks <= 0:
            raise ValueError("n_workers and n_tasks must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")

    @property
    def alpha(self) -> float:
        return self.n_tasks / self.n_workers


@dataclass(frozen=True)
class SparseRegimeConfig:
    """Sparse-regime assignment: each worker answers exactly ``degree`` tasks.

    The signal scale is nu = n_scale * N, so the effective noise becomes
    alpha / (n_scale * degree).
    """

    degree: int
    n_scale: float

    def __post_init__(self):
        if self.degree <= 0:
            raise ValueError("degree must be positive")
        if not 0.0 < self.n_scale <= 1.0:
            raise ValueError("n_scale must be in (0, 1]")

    def params(self, n_workers: int, n_tasks: int) -> ModelParams:
        """ModelParams implied by the sparse mapping (rho = 1 - d/M, nu = n N)."""
        if self.degree > n_tasks:
            raise DegreeTooLarge(f"degree {self.degree} > n_tasks {n_tasks}")
        return ModelParams(
            n_workers=n_workers,
            n_tasks=n_tasks,
            nu=self.n_scale * n_workers,
            rho=1.0 - self.degree / n_tasks,
        )


@dataclass(frozen=True)
class GroundTruth:
    """True rescaled reliabilities theta0 (length N) and labels v0 (length M)."""

    theta0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float)
        v0 = np.asarray(self.v0, dtype=float)
        if not np.all(np.abs(v0) == 1.0):
            raise ValueError("every v0 entry must be +1 or -1")
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "v0", v0)


@dataclass(frozen=True)
class AnswerMatrix:
    """Sparse N x M matrix of answers in {-1, +1}; absent pairs are 0.

    Stored as coordinate triplets (workers, tasks, answers) with at most one
    triplet per (worker, task) pair.
    """

    workers: np.ndarray
    tasks: np.ndarray
    answers: np.ndarray
    n_workers: int
    n_tasks: int

    def __post_init__(self):
        workers = np.asarray(self.workers, dtype=np.int64)
        tasks = np.asarray(self.tasks, dtype=np.int64)
        answers = np.asarray(self.answers, dtype=np.int8)
        if not (workers.shape == tasks.shape == answers.shape) or workers.ndim != 1:
            raise ValueError("workers, tasks, answers must be 1-d arrays of equal length")
        if workers.size:
            if workers.min() < 0 or workers.max() >= self.n_workers:
                raise ValueError("worker index out of range")
            if tasks.min() < 0 or tasks.max() >= self.n_tasks:
                raise ValueError("task index out of range")
            if not np.all(np.abs(answers) == 1):
                raise ValueError("answers must be exactly +1 or -1")
            flat = workers * self.n_tasks + tasks
            diffs = np.diff(flat)
            if np.all(diffs > 0):
                pass  # already strictly sorted, hence unique
            elif np.unique(flat).size != flat.size:
                raise ValueError("duplicate (worker, task) triplet")
        object.__setattr__(self, "workers", workers)
        object.__setattr__(self, "tasks", tasks)
        object.__setattr__(self, "answers", answers)

    def __len__(self) -> int:
        return self.answers.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_workers, self.n_tasks)

    @property
    def fill(self) -> float:
        return len(self) / (self.n_workers * self.n_tasks)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        coo = sp.coo_matrix(
            (self.answers.astype(np.float64), (self.workers, self.tasks)),
            shape=self.shape,
        )
        return coo.tocsr()

    @cached_property
    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=np.float64)
        out[self.workers, self.tasks] = self.answers
        return out

    @cached_property
    def worker_degrees(self) -> np.ndarray:
        return np.bincount(self.workers, minlength=self.n_workers)

    @cached_property
    def task_degrees(self) -> np.ndarray:
        return np.bincount(self.tasks, minlength=self.n_tasks)

    def column_sums(self) -> np.ndarray:
        """Sum of answers per task (majority-vote statistic)."""
        return np.bincount(self.tasks, weights=self.answers.astype(float),
                           minlength=self.n_tasks)

    @classmethod
    def from_dense(cls, y: np.ndarray) -> "AnswerMatrix":
        y = np.asarray(y)
        if not np.isin(y, (-1, 0, 1)).all():
            raise ValueError("dense answer matrices may only contain {-1, 0, +1}")
        workers, tasks = np.nonzero(y)
        return cls(workers=workers, tasks=tasks, answers=y[workers, tasks],
                   n_workers=y.shape[0], n_tasks=y.shape[1])

    # ---- file interchange -------------------------------------------------

    def to_csv(self, path, dims_path=None) -> None:
        """Write `worker,task,answer` rows; dims go to a JSON sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["worker", "task", "answer"])
            for w, t, a in zip(self.workers, self.tasks, self.answers):
                writer.writerow([int(w), int(t), int(a)])
        if dims_path is not None:
            with open(dims_path, "w") as fh:
                json.dump({"n_workers": self.n_workers, "n_tasks": self.n_tasks}, fh)

    @classmethod
    def from_csv(cls, path, dims_path=None) -> "AnswerMatrix":
        """Read an answers CSV; dims come from the sidecar or max index + 1."""
        workers, tasks, answers = [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                workers.append(int(row["worker"]))
                tasks.append(int(row["task"]))
                answers.append(int(row["answer"]))
        workers = np.array(workers, dtype=np.int64)
        tasks = np.array(tasks, dtype=np.int64)
        answers = np.array(answers, dtype=np.int8)
        if dims_path is not None and Path(dims_path).exists():
            with open(dims_path) as fh:
                dims = json.load(fh)
            n_workers, n_tasks = int(dims["n_workers"]), int(dims["n_tasks"])
        else:
            n_workers = int(workers.max()) + 1 if workers.size else 0
            n_tasks = int(tasks.max()) + 1 if tasks.size else 0
        return cls(workers=workers, tasks=tasks, answers=answers,
                   n_workers=n_workers, n_tasks=n_tasks)

    def empirical_rho(self) -> float:
        """Missing fraction of the (worker, task) grid."""
        return 1.0 - self.fill


def write_ground_truth(gt: GroundTruth, theta_path, v_path) -> None:
    for path, name, values in ((theta_path, "theta0", gt.theta0), (v_path, "v0", gt.v0)):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", name])
            for i, x in enumerate(values):
                writer.writerow([i, int(x) if name == "v0" else float(x)])


def read_ground_truth(theta_path, v_path) -> GroundTruth:
    def read_col(path, name):
        out = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(float(row[name]))
        return np.array(out)

    return GroundTruth(theta0=read_col(theta_path, "theta0"), v0=read_col(v_path, "v0"))


# ---- sampling --------------------------------------------------------------


def sample_ground_truth(params: ModelParams, worker_prior: WorkerPrior,
                        label_prior: LabelPrior, seed: int) -> GroundTruth:
    """Draw theta0 i.i.d. from the worker prior and v0 from the label prior."""
    rng = stream_rng(seed, 0)
    theta0 = worker_prior.sample(rng, params.n_workers)
    v0 = label_prior.sample(rng, params.n_tasks)
    return GroundTruth(theta0=theta0, v0=v0)


def _check_channel(params: ModelParams, gt: GroundTruth) -> None:
    scale = np.sqrt(params.nu / params.n_workers)
    worst = scale * np.max(np.abs(gt.theta0)) * np.max(np.abs(gt.v0))
    # equality is the boundary case nu = n N with |theta| = 1; the losing
    # outcome then has probability zero and is never drawn
    if worst > 1.0 + 1e-12:
        raise ChannelOverflow(
            f"|sqrt(nu/N) theta v| reaches {worst:.6g} > 1; channel probabilities invalid")


def sample_answers_dense(gt: GroundTruth, params: ModelParams, seed: int) -> AnswerMatrix:
    """Sample every (i, j) pair independently through the answer channel.

    Y_ij = 0 with probability rho, else +/-1 with probability
    (1 +/- sqrt(nu/N) theta0_i v0_j) / 2. Generated in row blocks to bound
    peak memory; bit-reproducible for a fixed seed.
    """
    _check_channel(params, gt)
    n, m = params.n_workers, params.n_tasks
    rng = stream_rng(seed, 1)
    scale = np.sqrt(params.nu / n)
    workers, tasks, answers = [], [], []
    for start in range(0, n, _SAMPLE_BLOCK_ROWS):
        stop = min(start + _SAMPLE_BLOCK_ROWS, n)
        block = np.outer(scale * gt.theta0[start:stop], gt.v0)
        answered = rng.random((stop - start, m)) >= params.rho
        plus = rng.random((stop - start, m)) < (1.0 + block) / 2.0
        w, t = np.nonzero(answered)
        workers.append(w + start)
        tasks.append(t)
        answers.append(np.where(plus[w, t], 1, -1).astype(np.int8))
    return AnswerMatrix(
        workers=np.concatenate(workers) if workers else np.array([], dtype=np.int64),
        tasks=np.concatenate(tasks) if tasks else np.array([], dtype=np.int64),
        answers=np.concatenate(answers) if answers else np.array([], dtype=np.int8),
        n_workers=n, n_tasks=m,
    )


def sample_answers_sparse(gt: GroundTruth, config: SparseRegimeConfig,
                          params: ModelParams, seed: int) -> AnswerMatrix:
    """Each worker answers exactly ``degree`` distinct uniform tasks.

    Conditional on the assignment, answers follow the channel with
    nu = n_scale * N (params.nu is expected to equal that product).
    """
    n, m = params.n_workers, params.n_tasks
    if config.degree > m:
        raise DegreeTooLarge(f"degree {config.degree} > n_tasks {m}")
    _check_channel(params, gt)
    rng = stream_rng(seed, 2)
    d = config.degree
    tasks = np.empty(n * d, dtype=np.int64)
    for i in range(n):
        tasks[i * d:(i + 1) * d] = rng.choice(m, size=d, replace=False)
    workers = np.repeat(np.arange(n, dtype=np.int64), d)
    scale = np.sqrt(params.nu / n)
    p_plus = (1.0 + scale * gt.theta0[workers] * gt.v0[tasks]) / 2.0
    answers = np.where(rng.random(n * d) < p_plus, 1, -1).astype(np.int8)
    return AnswerMatrix(workers=workers, tasks=tasks, answers=answers,
                        n_workers=n, n_tasks=m)


def error_rate(labels: np.ndarray, v0: np.ndarray) -> float:
    """Bitwise label error rate (1/M) sum 1[label_j != v0_j]."""
    return float(np.mean(np.asarray(labels) != np.asarray(v0)))


def aligned_error_rate(labels: np.ndarray, v0: np.ndarray) -> float:
    """min(ER, 1 - ER): with sign-symmetric priors the global label flip is
    unresolvable, so errors are reported modulo it."""
    er = error_rate(labels, v0)
    return min(er, 1.0 - er)


def mse_theta(theta_hat: np.ndarray, theta0: np.ndarray) -> float:
    """Mean squared reliability error (1/N) sum (theta_hat - theta0)^2."""
    diff = np.asarray(theta_hat) - np.asarray(theta0)
    return float(np.mean(diff**2))


def channel_log_likelihood(y: int, w: float, nu: float, rho: float) -> float:
    """log P(Y = y | w) for the rank-one channel, w = theta v / sqrt(N).

    Returns log((1 - rho)/2) + log(1 +/- sqrt(nu) w) for y = +/-1 and
    log(rho) for y = 0 (-inf when rho = 0). The boundary |sqrt(nu) w| = 1
    is accepted; the zero-probability outcome maps to -inf.
    """
    if y == 0:
        return float(np.log(rho)) if rho > 0 else -np.inf
    if y not in (-1, 1):
        raise DomainError(f"y must be in {{-1, 0, +1}}, got {y}")
    s = np.sqrt(nu) * w
    if abs(s) > 1.0 + 1e-12:
        raise DomainError(f"|sqrt(nu) w| = {abs(s):.6g} > 1 outside the channel domain")
    arg = 1.0 + y * s
    base = np.log((1.0 - rho) / 2.0) if rho < 1.0 else -np.inf
    if arg <= 0.0:
        return -np.inf
    return float(base + np.log(arg))
