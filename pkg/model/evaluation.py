"""
Model Evaluation — ICC, mixture moments, log-likelihood and rescaling.

Pure functions over the types in ``model.state``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from core.distributions import std_normal_cdf
from core.errors import DomainError
from model.state import ItemParameters, MixtureParameters, RescaleSpec, ResponseMatrix


def icc(theta, a, b, c):
    """P(correct | θ) = c + (1 − c)·Φ(aθ − b).  Broadcasts over arrays."""
    a_arr = np.asarray(a, dtype=float)
    c_arr = np.asarray(c, dtype=float)
    if np.any(a_arr <= 0):
        raise DomainError(f"icc needs a > 0, got {a}")
    if np.any(c_arr < 0) or np.any(c_arr >= 1):
        raise DomainError(f"icc needs 0 <= c < 1, got {c}")
    return c_arr + (1.0 - c_arr) * std_normal_cdf(a_arr * np.asarray(theta, dtype=float) - np.asarray(b, dtype=float))


def mixture_mean(params: MixtureParameters) -> float:
    """Mean of the mixture, Σ p_k μ_k."""
    return float(np.dot(params.p, params.mu))


def mixture_sd(params: MixtureParameters) -> float:
    """Exact standard deviation of the mixture."""
    mean = mixture_mean(params)
    variance = np.dot(params.p, (params.mu - mean) ** 2 + params.sigma2)
    return float(np.sqrt(variance))


def loglikelihood(responses: ResponseMatrix, items: ItemParameters, theta) -> float:
    """Bernoulli log-likelihood summed over observed cells."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != responses.J or items.I != responses.I:
        raise DomainError(
            f"dimension mismatch: responses {responses.J}x{responses.I}, "
            f"theta {theta.size}, items {items.I}"
        )
    m = theta[:, None] * items.a[None, :] - items.b[None, :]
    c = items.c[None, :]
    # log P(Y=0) = log(1-c) + log Φ(-m); computing it this way avoids 1 - p
    # cancellation when p is close to 1.
    log_fail = np.log1p(-c) + special.log_ndtr(-m)
    with np.errstate(divide='ignore'):
        log_success = np.logaddexp(np.log(c), np.log1p(-c) + special.log_ndtr(m))
    y1 = responses.values == 1
    cell = np.where(y1, log_success, log_fail)
    return float(np.sum(cell, where=responses.observed))


def rescale_draw(theta_draw, params_draw: MixtureParameters, spec: RescaleSpec) -> np.ndarray:
    """Map one retained θ draw to mean ``spec.m`` and sd ``spec.s``.

    Uses the mixture mean and sd of the same iteration.
    """
    theta = np.asarray(theta_draw, dtype=float)
    return spec.m + spec.s * (theta - mixture_mean(params_draw)) / mixture_sd(params_draw)
