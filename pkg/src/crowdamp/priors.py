"""Prior distributions over task labels and worker reliabilities.

Labels are two-atom variables on {+1, -1} with a bias parameter. Worker
reliabilities (in rescaled form, O(1) per worker) come in three flavours:

* :class:`RademacherBernoulli` -- spammer/hammer/adversary atoms {0, +1, -1},
* :class:`GaussianMixture` -- two Gaussian components (closed-form denoising),
* :class:`Tabulated` -- an arbitrary discrete measure, also used to carry
  quadrature discretizations of continuous priors such as Beta reliabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class LabelPrior:
    """Two-atom label prior: P(v = -1) = beta, P(v = +1) = 1 - beta."""

    beta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")

    @property
    def mean(self) -> float:
        return 1.0 - 2.0 * self.beta

    @property
    def second_moment(self) -> float:
        return 1.0

    @property
    def log_odds(self) -> float:
        """log P(+1)/P(-1); +/-inf for the degenerate atoms."""
        if self.beta == 0.0:
            return np.inf
        if self.beta == 1.0:
            return -np.inf
        return float(np.log((1.0 - self.beta) / self.beta))

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([1.0, -1.0]), np.array([1.0 - self.beta, self.beta])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.where(rng.random(size) < self.beta, -1.0, 1.0)


@dataclass(frozen=True)
class RademacherBernoulli:
    """Skewed Rademacher-Bernoulli reliability prior.

    Atoms {0, +1, -1} with weights {1 - mu, mu (1 - lam), mu lam}: a fraction
    ``mu`` of workers is informative, of which a fraction ``lam`` are
    adversaries (theta = -1).
    """

    mu: float
    lam: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must be in [0, 1], got {self.mu}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")

    @property
    def mean(self) -> float:
        return self.mu * (1.0 - 2.0 * self.lam)

    @property
    def second_moment(self) -> float:
        return self.mu

    def atoms(self, rule=None) -> tuple[np.ndarray, np.ndarray]:
        values = np.array([0.0, 1.0, -1.0])
        weights = np.array([1.0 - self.mu, self.mu * (1.0 - self.lam), self.mu * self.lam])
        return values, weights

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        values, weights = self.atoms()
        return rng.choice(values, p=weights, size=size)


@dataclass(frozen=True)
class GaussianMixture:
    """Two-component Gaussian reliability prior.

    Component L has weight 1 - mu, component R has weight mu.
    """

    mu: float
    mean_left: float
    mean_right: float
    var_left: float
    var_right: float

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must be in [0, 1], got {self.mu}")
        if self.var_left <= 0 or self.var_right <= 0:
            raise ValueError("component variances must be positive")

    @property
    def mean(self) -> float:
        return (1.0 - self.mu) * self.mean_left + self.mu * self.mean_right

    @property
    def second_moment(self) -> float:
        left = self.mean_left**2 + self.var_left
        right = self.mean_right**2 + self.var_right
        return (1.0 - self.mu) * left + self.mu * right

    def atoms(self, rule) -> tuple[np.ndarray, np.ndarray]:
        """Discretize through a standard-normal quadrature rule (per component)."""
        z, w = rule.nodes, rule.weights
        values = np.concatenate([
            self.mean_left + np.sqrt(self.var_left) * z,
            self.mean_right + np.sqrt(self.var_right) * z,
        ])
        weights = np.concatenate([(1.0 - self.mu) * w, self.mu * w])
        return values, weights

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        right = rng.random(size) < self.mu
        mean = np.where(right, self.mean_right, self.mean_left)
        std = np.where(right, np.sqrt(self.var_right), np.sqrt(self.var_left))
        return mean + std * rng.standard_normal(size)


@dataclass(frozen=True)
class Tabulated:
    """Discrete reliability measure given by (value, weight) pairs.

    Also used for quadrature discretizations of continuous priors; weights
    must be nonnegative and sum to one within 1e-12.
    """

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if values.shape != weights.shape or values.ndim != 1:
            raise ValueError("values and weights must be 1-d arrays of equal length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        total = weights.sum()
        if not np.isfinite(total) or abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 within {_WEIGHT_TOL}, got {total!r}")
        if not np.any(weights > 0):
            raise ValueError("at least one atom needs positive weight")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @property
    def mean(self) -> float:
        return float(self.weights @ self.values)

    @property
    def second_moment(self) -> float:
        return float(self.weights @ self.values**2)

    def atoms(self, rule=None) -> tuple[np.ndarray, np.ndarray]:
        return self.values, self.weights

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.values, p=self.weights, size=size)


WorkerPrior = Union[RademacherBernoulli, GaussianMixture, Tabulated]


def beta_reliability_prior(a: float, b: float, n_workers: int, nu: float,
                           n_nodes: int = 513) -> Tabulated:
    """Tabulated rescaled-reliability prior from a Beta(a, b) law on p.

    A worker with success probability p maps to theta = (2 p - 1) sqrt(N / nu)
    so that p = (1 + sqrt(nu / N) theta) / 2 recovers it. The Beta density is
    discretized on a fixed Gauss-Legendre grid over p in [0, 1].
    """
    from scipy.special import betaln

    if a <= 0 or b <= 0:
        raise ValueError("Beta parameters must be positive")
    if nu <= 0:
        raise ValueError("nu must be positive to map p onto theta")
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    p = 0.5 * (x + 1.0)
    w = 0.5 * w
    log_pdf = (a - 1.0) * np.log(np.clip(p, 1e-300, None)) \
        + (b - 1.0) * np.log(np.clip(1.0 - p, 1e-300, None)) - betaln(a, b)
    weights = w * np.exp(log_pdf)
    weights = weights / weights.sum()
    theta = (2.0 * p - 1.0) * np.sqrt(n_workers / nu)
    return Tabulated(values=theta, weights=weights)
