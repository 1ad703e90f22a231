"""Scikit-learn style estimators wrapping the label-aggregation algorithms.

Each estimator takes a worker-by-task answer matrix X (AnswerMatrix, scipy
sparse, or dense ndarray with entries in {-1, 0, +1}) in ``fit`` and exposes
the decoded labels as ``labels_`` plus algorithm-specific attributes. The
aggregation problem is transductive, so the idiom matches clustering
estimators: ``fit`` then read attributes, or ``fit_predict``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .amp import AmpConfig, amp_run, effective_noise, fisher_score, majority_vote
from .bp import BpConfig, FactorGraph, bp_run, reliability_atoms
from .model import GroundTruth
from .priors import LabelPrior, RademacherBernoulli, WorkerPrior
from .rank2 import Rank2Config, amp_rank2_run
from .validation import as_answer_matrix, check_positive


class MajorityVoteAggregator(BaseEstimator):
    """Per-task majority vote with ties broken to +1."""

    def fit(self, X, y=None):
        answers = as_answer_matrix(X)
        self.labels_ = majority_vote(answers)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class AmpAggregator(BaseEstimator):
    """Rank-one AMP label aggregation.

    Parameters mirror :func:`crowdamp.amp.amp_run`: priors over worker
    reliabilities and labels, the channel scale nu, and either rho or an
    explicit effective noise delta (delta = 1 / ((1 - rho) nu) when omitted;
    rho defaults to the empirical missing fraction).
    """

    def __init__(self, worker_prior: WorkerPrior | None = None,
                 label_prior: LabelPrior | None = None, nu: float = 1.0,
                 rho: float | None = None, delta: float | None = None,
                 tol: float = 1e-8, max_iter: int = 1000, damping: float = 0.0,
                 init: str = "prior_sample", early_stop: int | None = None,
                 seed: int = 0):
        self.worker_prior = worker_prior
        self.label_prior = label_prior
        self.nu = nu
        self.rho = rho
        self.delta = delta
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping
        self.init = init
        self.early_stop = early_stop
        self.seed = seed

    def _resolved_delta(self, answers):
        if self.delta is not None:
            return check_positive("delta", self.delta)
        rho = answers.empirical_rho() if self.rho is None else self.rho
        return effective_noise(rho, check_positive("nu", self.nu))

    def fit(self, X, y=None, ground_truth: GroundTruth | None = None):
        answers = as_answer_matrix(X)
        wp = self.worker_prior if self.worker_prior is not None else RademacherBernoulli(mu=0.5)
        lp = self.label_prior if self.label_prior is not None else LabelPrior()
        cfg = AmpConfig(tol=self.tol, max_iter=self.max_iter, damping=self.damping,
                        init=self.init, early_stop=self.early_stop)
        result = amp_run(fisher_score(answers, self.nu), self._resolved_delta(answers),
                         wp, lp, cfg, seed=self.seed, ground_truth=ground_truth)
        self.labels_ = result.labels
        self.theta_hat_ = result.theta_hat
        self.v_hat_ = result.v_hat
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.trajectory_ = result.trajectory
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class TwoCoinAmpAggregator(BaseEstimator):
    """Rank-two AMP with separate sensitivity and specificity priors."""

    def __init__(self, sensitivity_prior: WorkerPrior | None = None,
                 specificity_prior: WorkerPrior | None = None,
                 label_prior: LabelPrior | None = None, nu: float = 1.0,
                 rho: float | None = None, delta: float | None = None,
                 tol: float = 1e-8, max_iter: int = 1000, damping: float = 0.0,
                 init: str = "majority_vote", early_stop: int | None = None,
                 seed: int = 0):
        self.sensitivity_prior = sensitivity_prior
        self.specificity_prior = specificity_prior
        self.label_prior = label_prior
        self.nu = nu
        self.rho = rho
        self.delta = delta
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping
        self.init = init
        self.early_stop = early_stop
        self.seed = seed

    def fit(self, X, y=None, truth=None):
        answers = as_answer_matrix(X)
        if self.sensitivity_prior is None or self.specificity_prior is None:
            raise ValueError("two-coin aggregation needs both component priors")
        lp = self.label_prior if self.label_prior is not None else LabelPrior()
        if self.delta is not None:
            delta = check_positive("delta", self.delta)
        else:
            rho = answers.empirical_rho() if self.rho is None else self.rho
            delta = effective_noise(rho, check_positive("nu", self.nu))
        cfg = Rank2Config(tol=self.tol, max_iter=self.max_iter, damping=self.damping,
                          init=self.init, early_stop=self.early_stop)
        result = amp_rank2_run(fisher_score(answers, self.nu), delta,
                               self.sensitivity_prior, self.specificity_prior,
                               lp, cfg, seed=self.seed, truth=truth)
        self.labels_ = result.labels
        self.theta_hat_ = result.theta_hat
        self.posterior_true_ = result.posterior_true
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


class BpAggregator(BaseEstimator):
    """Sum-product BP on the answer graph with a discrete reliability prior.

    The worker prior over rescaled reliabilities is mapped onto success
    probabilities p = (1 + sqrt(nu / N) theta) / 2 before message passing.
    """

    def __init__(self, worker_prior: WorkerPrior | None = None,
                 label_prior: LabelPrior | None = None, nu: float = 1.0,
                 tol: float = 1e-10, max_iter: int = 1000, damping: float = 0.1,
                 init: str = "uninformative", seed: int = 0):
        self.worker_prior = worker_prior
        self.label_prior = label_prior
        self.nu = nu
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping
        self.init = init
        self.seed = seed

    def fit(self, X, y=None, ground_truth: GroundTruth | None = None):
        answers = as_answer_matrix(X)
        wp = self.worker_prior if self.worker_prior is not None else RademacherBernoulli(mu=0.5)
        lp = self.label_prior if self.label_prior is not None else LabelPrior()
        reliability = reliability_atoms(wp, check_positive("nu", self.nu), answers.n_workers)
        cfg = BpConfig(reliability=reliability, tol=self.tol, max_iter=self.max_iter,
                       damping=self.damping, init=self.init)
        result = bp_run(FactorGraph.from_answers(answers), cfg, lp, seed=self.seed,
                        ground_truth=ground_truth)
        self.labels_ = result.labels
        self.marginals_ = result.marginals
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
