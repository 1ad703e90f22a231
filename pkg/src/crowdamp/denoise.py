"""Scalar denoising functions for the AMP Gaussian channel.

Each prior P_x induces a posterior over x proportional to
P_x(x) exp(-a x^2 / 2 + b x). The denoisers return its mean f_x(a, b),
variance sigma_x = d f_x / d b, and log partition function log Z_x(a, b),
vectorized over broadcastable arrays ``a`` and ``b``.

Discrete and mixture posteriors are evaluated in log space with
max-subtraction: in the low-noise regime the field b grows like 1/Delta and
overflows naive exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .priors import GaussianMixture, LabelPrior, RademacherBernoulli, Tabulated, WorkerPrior


@dataclass(frozen=True)
class DenoiseResult:
    """Posterior mean, variance and log partition, elementwise over (a, b)."""

    mean: np.ndarray
    variance: np.ndarray
    log_partition: np.ndarray


def _atoms_denoise(values: np.ndarray, weights: np.ndarray, a, b) -> DenoiseResult:
    """Moments of a discrete measure reweighted by exp(-a x^2/2 + b x)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore"):
        logw = np.where(weights > 0, np.log(np.where(weights > 0, weights, 1.0)), -np.inf)
    logits = logw - 0.5 * a[..., None] * values**2 + b[..., None] * values
    m = logits.max(axis=-1, keepdims=True)
    p = np.exp(logits - m)
    z = p.sum(axis=-1)
    mean = (p * values).sum(axis=-1) / z
    e2 = (p * values**2).sum(axis=-1) / z
    variance = np.maximum(e2 - mean**2, 0.0)
    log_partition = m[..., 0] + np.log(z)
    return DenoiseResult(mean=mean, variance=variance, log_partition=log_partition)


def denoise_label(prior: LabelPrior, a, b) -> DenoiseResult:
    """Two-atom {+1, -1} denoiser: mean = tanh(b + log-odds / 2).

    The a-term multiplies v^2 = 1 so it cancels from the mean and variance
    but still contributes -a/2 to the log partition.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    beta = prior.beta
    if beta == 0.0 or beta == 1.0:
        atom = 1.0 if beta == 0.0 else -1.0
        mean = np.full(np.broadcast_shapes(a.shape, b.shape), atom)
        return DenoiseResult(mean=mean, variance=np.zeros_like(mean),
                             log_partition=np.broadcast_to(-a / 2.0 + atom * b, mean.shape).copy())
    mean = np.tanh(b + 0.5 * prior.log_odds)
    variance = 1.0 - mean**2
    log_partition = -a / 2.0 + np.logaddexp(np.log(1.0 - beta) + b, np.log(beta) - b)
    shape = np.broadcast_shapes(a.shape, b.shape)
    return DenoiseResult(mean=np.broadcast_to(mean, shape).copy(),
                         variance=np.broadcast_to(variance, shape).copy(),
                         log_partition=np.broadcast_to(log_partition, shape).copy())


def denoise_worker_rb(prior: RademacherBernoulli, a, b) -> DenoiseResult:
    """Exact three-atom denoiser for the Rademacher-Bernoulli prior."""
    values, weights = prior.atoms()
    return _atoms_denoise(values, weights, a, b)


def denoise_tabulated(prior: Tabulated, a, b) -> DenoiseResult:
    """Exact denoiser for an arbitrary discrete (or quadrature) measure."""
    return _atoms_denoise(prior.values, prior.weights, a, b)


def denoise_worker_gm(prior: GaussianMixture, a, b) -> DenoiseResult:
    """Closed-form denoiser for a two-component Gaussian mixture prior.

    Component k (mean m_k, variance s_k^2) has posterior precision
    1/s_k^2 + a, posterior mean (b + m_k/s_k^2) / (1/s_k^2 + a), and
    responsibility proportional to weight times marginal evidence. Exact,
    no quadrature.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    wts = np.array([1.0 - prior.mu, prior.mu])
    means = np.array([prior.mean_left, prior.mean_right])
    varz = np.array([prior.var_left, prior.var_right])

    tau = 1.0 / varz + a[..., None]
    bk = b[..., None] + means / varz
    post_mean = bk / tau
    log_evid = -0.5 * np.log(varz) - 0.5 * np.log(tau) + bk**2 / (2.0 * tau) \
        - means**2 / (2.0 * varz)
    with np.errstate(divide="ignore"):
        logits = np.where(wts > 0, np.log(np.where(wts > 0, wts, 1.0)), -np.inf) + log_evid
    m = logits.max(axis=-1, keepdims=True)
    p = np.exp(logits - m)
    z = p.sum(axis=-1)
    mean = (p * post_mean).sum(axis=-1) / z
    e2 = (p * (post_mean**2 + 1.0 / tau)).sum(axis=-1) / z
    variance = np.maximum(e2 - mean**2, 0.0)
    log_partition = m[..., 0] + np.log(z)
    return DenoiseResult(mean=mean, variance=variance, log_partition=log_partition)


def denoise(prior, a, b) -> DenoiseResult:
    """Dispatch to the denoiser matching the prior type."""
    if isinstance(prior, LabelPrior):
        return denoise_label(prior, a, b)
    if isinstance(prior, RademacherBernoulli):
        return denoise_worker_rb(prior, a, b)
    if isinstance(prior, GaussianMixture):
        return denoise_worker_gm(prior, a, b)
    if isinstance(prior, Tabulated):
        return denoise_tabulated(prior, a, b)
    raise TypeError(f"no denoiser for prior type {type(prior).__name__}")
