"""Sum-product belief propagation on the worker-task answer graph.

Workers carry a latent success probability p with a discrete prior; tasks
carry a binary label. On the bipartite graph both message directions reduce
to one scalar per edge:

* q[e] -- cavity probability that the task's label equals the answer on e,
* r[e] -- cavity posterior mean of the worker's success probability.

Neighbour products run in log space via whole-node sums minus the excluded
edge, so a flooding pass is a few vectorized array operations over the edge
list. Worker reliability priors are integrated exactly over their atoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import AnswerMatrix, GroundTruth
from .priors import LabelPrior, Tabulated, WorkerPrior
from .rng import stream_rng

_PROB_FLOOR = 1e-15  # messages stay inside (0, 1) to keep logs finite


@dataclass(frozen=True)
class FactorGraph:
    """Bipartite answer graph in edge-list form, built losslessly from answers."""

    workers: np.ndarray
    tasks: np.ndarray
    answers: np.ndarray
    n_workers: int
    n_tasks: int

    @classmethod
    def from_answers(cls, y: AnswerMatrix) -> "FactorGraph":
        return cls(workers=y.workers, tasks=y.tasks,
                   answers=y.answers.astype(np.int8),
                   n_workers=y.n_workers, n_tasks=y.n_tasks)

    @property
    def n_edges(self) -> int:
        return self.answers.size


def reliability_atoms(wp: WorkerPrior, nu: float, n_workers: int,
                      rule=None) -> Tabulated:
    """Map a rescaled-reliability prior onto success probabilities.

    Each theta atom becomes p = (1 + sqrt(nu / N) theta) / 2; in the sparse
    regime (nu = n N) the informative atoms are O(1) away from 1/2, so the
    prior is integrated exactly rather than Gaussian-approximated.
    """
    values, weights = (wp.atoms(rule) if not isinstance(wp, Tabulated) else wp.atoms())
    p = (1.0 + np.sqrt(nu / n_workers) * np.asarray(values, dtype=float)) / 2.0
    if p.min() < -1e-12 or p.max() > 1.0 + 1e-12:
        raise ValueError("mapped success probabilities leave [0, 1]; lower nu")
    return Tabulated(values=np.clip(p, 0.0, 1.0), weights=weights)


@dataclass(frozen=True)
class BpConfig:
    """Controls for :func:`bp_run`.

    reliability is a Tabulated prior over success probabilities p in [0, 1]
    (see :func:`reliability_atoms`). The flooding schedule is damped in
    probability space; informative initialization concentrates task messages
    on the true labels with weight 0.99 to avoid frozen zero-probability
    states.
    """

    reliability: Tabulated
    tol: float = 1e-10
    max_iter: int = 1000
    damping: float = 0.1
    init: str = "uninformative"

    def __post_init__(self):
        if np.any(self.reliability.values < 0) or np.any(self.reliability.values > 1):
            raise ValueError("reliability atoms must lie in [0, 1]")
        if self.init not in ("uninformative", "informative"):
            raise ValueError(f"unknown init {self.init!r}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")


@dataclass(frozen=True)
class BpResult:
    marginals: np.ndarray          # P(v_j = +1)
    labels: np.ndarray
    q_messages: np.ndarray
    n_iter: int
    converged: bool
    trajectory: list


def bp_run(graph: FactorGraph, cfg: BpConfig, lp: LabelPrior, seed: int = 0,
           ground_truth: GroundTruth | None = None) -> BpResult:
    """Flooding sum-product until the edge messages stabilize.

    Marginals are thresholded at 1/2 with ties to +1. The informative
    initialization requires ground truth labels.
    """
    if graph.n_edges == 0:
        raise ValueError("empty graph")
    atoms = cfg.reliability.values
    logw = np.where(cfg.reliability.weights > 0,
                    np.log(np.where(cfg.reliability.weights > 0, cfg.reliability.weights, 1.0)),
                    -np.inf)
    y = graph.answers.astype(np.int8)
    wi, tj = graph.workers, graph.tasks
    log_prior_plus = np.log(max(1.0 - lp.beta, _PROB_FLOOR))
    log_prior_minus = np.log(max(lp.beta, _PROB_FLOOR))

    if cfg.init == "informative":
        if ground_truth is None:
            raise ValueError('init="informative" requires ground truth labels')
        q = np.where(y == ground_truth.v0[tj], 0.99, 0.01)
    else:
        # prior messages, plus a small seeded perturbation: for symmetric
        # priors the uninformative state is an exact (possibly unstable)
        # fixed point that unperturbed messages would never leave
        rng = stream_rng(seed, 6)
        q = np.where(y == 1, 1.0 - lp.beta, lp.beta).astype(float)
        q = q + 1e-3 * (rng.random(graph.n_edges) - 0.5)
    q = np.clip(q, _PROB_FLOOR, 1.0 - _PROB_FLOOR)

    trajectory = []
    converged = False
    n_iter = 0
    for it in range(cfg.max_iter):
        q_old = q

        # worker pass: cavity posterior over reliability atoms, then its mean
        logf = np.log(np.clip(q[:, None] * atoms[None, :]
                              + (1.0 - q[:, None]) * (1.0 - atoms[None, :]),
                              _PROB_FLOOR, None))
        node = np.tile(logw, (graph.n_workers, 1))
        np.add.at(node, wi, logf)
        cavity = node[wi] - logf
        peak = cavity.max(axis=1, keepdims=True)
        wts = np.exp(cavity - peak)
        r = (wts @ atoms) / wts.sum(axis=1)
        r = np.clip(r, _PROB_FLOOR, 1.0 - _PROB_FLOOR)

        # task pass: cavity label log-likelihoods minus the excluded edge
        lp_edge = np.where(y == 1, np.log(r), np.log(1.0 - r))
        lm_edge = np.where(y == -1, np.log(r), np.log(1.0 - r))
        task_plus = np.full(graph.n_tasks, log_prior_plus)
        task_minus = np.full(graph.n_tasks, log_prior_minus)
        np.add.at(task_plus, tj, lp_edge)
        np.add.at(task_minus, tj, lm_edge)
        cav_plus = task_plus[tj] - lp_edge
        cav_minus = task_minus[tj] - lm_edge
        match = np.where(y == 1, cav_plus, cav_minus)
        mismatch = np.where(y == 1, cav_minus, cav_plus)
        q_new = 1.0 / (1.0 + np.exp(np.clip(mismatch - match, -700.0, 700.0)))
        q = np.clip((1.0 - cfg.damping) * q_new + cfg.damping * q_old,
                    _PROB_FLOOR, 1.0 - _PROB_FLOOR)

        change = float(np.max(np.abs(q - q_old)))
        trajectory.append(change)
        n_iter = it + 1
        if change < cfg.tol:
            converged = True
            break

    # full (non-cavity) marginals from the final worker messages
    lp_edge = np.where(y == 1, np.log(r), np.log(1.0 - r))
    lm_edge = np.where(y == -1, np.log(r), np.log(1.0 - r))
    task_plus = np.full(graph.n_tasks, log_prior_plus)
    task_minus = np.full(graph.n_tasks, log_prior_minus)
    np.add.at(task_plus, tj, lp_edge)
    np.add.at(task_minus, tj, lm_edge)
    marginals = 1.0 / (1.0 + np.exp(np.clip(task_minus - task_plus, -700.0, 700.0)))
    labels = np.where(marginals >= 0.5, 1, -1).astype(np.int8)
    return BpResult(marginals=marginals, labels=labels, q_messages=q,
                    n_iter=n_iter, converged=converged, trajectory=trajectory)


@dataclass(frozen=True)
class CoexistenceReport:
    """Outcome of running BP from both initializations on one instance."""

    er_uninformative: float
    er_informative: float
    message_distance: float
    coexists: bool
    uninformative: BpResult
    informative: BpResult


def bp_two_init_compare(graph: FactorGraph, cfg: BpConfig, lp: LabelPrior,
                        gt: GroundTruth, seed: int = 0,
                        distance_tol: float = 1e-4) -> CoexistenceReport:
    """Run BP from the uninformative and informative starts and compare.

    A message-space distance above ``distance_tol`` flags coexisting fixed
    points, the signature of the first-order transition.
    """
    from dataclasses import replace

    uninf = bp_run(graph, replace(cfg, init="uninformative"), lp, seed)
    inf = bp_run(graph, replace(cfg, init="informative"), lp, seed, ground_truth=gt)
    distance = float(np.max(np.abs(uninf.q_messages - inf.q_messages)))
    er_u = float(np.mean(uninf.labels != gt.v0))
    er_i = float(np.mean(inf.labels != gt.v0))
    return CoexistenceReport(er_uninformative=er_u, er_informative=er_i,
                             message_distance=distance,
                             coexists=distance > distance_tol,
                             uninformative=uninf, informative=inf)


def enumerate_posterior(graph: FactorGraph, reliability: Tabulated,
                        lp: LabelPrior) -> np.ndarray:
    """Exact task marginals P(v_j = +1) by summing over all label configs.

    Reliabilities integrate out exactly per worker given the labels, so the
    cost is O(2^M * E * K); feasible for instances with M <= ~20 tasks. Used
    as the brute-force oracle for BP correctness checks.
    """
    from itertools import product as _product

    m = graph.n_tasks
    if m > 20:
        raise ValueError("enumeration oracle limited to 20 tasks")
    atoms, weights = reliability.values, reliability.weights
    post = np.zeros((m, 2))
    for config in _product((1, -1), repeat=m):
        v = np.array(config, dtype=np.int8)
        log_prior = np.sum(np.where(v == 1, np.log(max(1 - lp.beta, _PROB_FLOOR)),
                                    np.log(max(lp.beta, _PROB_FLOOR))))
        match = graph.answers == v[graph.tasks]
        per_worker = np.zeros(graph.n_workers)
        for a, w in zip(atoms, weights):
            if w == 0:
                continue
            edge_term = np.where(match, a, 1.0 - a)
            prod = np.ones(graph.n_workers)
            np.multiply.at(prod, graph.workers, edge_term)
            per_worker = per_worker + w * prod
        weight = np.exp(log_prior) * np.prod(per_worker)
        for j in range(m):
            post[j, 0 if v[j] == 1 else 1] += weight
    return post[:, 0] / post.sum(axis=1)
