"""
Distributions — Sampling kernels and the normal CDF used by every full
conditional of the MixIRT sampler.

No model knowledge lives here: each kernel takes plain numbers (or numpy
arrays, broadcast element-wise) and an ``RngStream``.  Scalar inputs give
scalar outputs, array inputs give arrays.

Usage:
    from core.distributions import sample_truncated_normal, Side
    x = sample_truncated_normal(mean, 1.0, Side.ABOVE_ZERO, rng)
"""

from __future__ import annotations

import logging
from enum import Enum
from typing import Union

import numpy as np
from scipy import special

from core.errors import DomainError, NumericalError, SamplingError
from core.rng import RngStream

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Standardized truncation point (in sd units) at which the truncated normal
# switches from inverse-CDF to exponential-proposal rejection.
TAIL_SWITCH = 5.0

# Smallest prior mass a truncated Beta interval may carry.
MIN_TRUNCATED_MASS = 1e-12

SIMPLEX_TOLERANCE = 1e-9

_MAX_REJECTION_ROUNDS = 10_000
_TINY = np.finfo(float).tiny


class Side(str, Enum):
    """Half-line a truncated normal draw is restricted to."""

    BELOW_ZERO = "below-zero"
    ABOVE_ZERO = "above-zero"


def _as_output(values: np.ndarray, scalar: bool):
    return float(values.reshape(-1)[0]) if scalar else values


def _open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    return (gen.integers(0, 2**53, size=size) + 0.5) / 2.0**53


# ═══════════════════════════════════════════════
# Normal CDF
# ═══════════════════════════════════════════════

def std_normal_cdf(x: ArrayLike) -> ArrayLike:
    """Standard normal CDF Φ(x).

    Raises ``DomainError`` for non-finite input.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"std_normal_cdf needs finite input, got {x!r}")
    out = special.ndtr(arr)
    return _as_output(np.atleast_1d(out), arr.ndim == 0)


# ═══════════════════════════════════════════════
# Truncated normal
# ═══════════════════════════════════════════════

def _positive_tail(alpha: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Standard normal draws restricted to (alpha, ∞), element-wise."""
    out = np.empty_like(alpha)

    moderate = alpha < TAIL_SWITCH
    if moderate.any():
        # P(Z > x) = ndtr(-x); inverting the upper tail keeps precision for
        # truncation points well above zero.
        upper_mass = special.ndtr(-alpha[moderate])
        u = _open_uniform(gen, int(moderate.sum()))
        out[moderate] = -special.ndtri(upper_mass * u)

    tail = ~moderate
    if tail.any():
        a = alpha[tail]
        lam = 0.5 * (a + np.sqrt(a * a + 4.0))
        draws = np.empty_like(a)
        pending = np.arange(a.size)
        for _ in range(_MAX_REJECTION_ROUNDS):
            z = a[pending] + gen.standard_exponential(pending.size) / lam[pending]
            log_u = np.log(_open_uniform(gen, pending.size))
            accept = log_u <= -0.5 * (z - lam[pending]) ** 2
            draws[pending[accept]] = z[accept]
            pending = pending[~accept]
            if pending.size == 0:
                break
        else:
            raise SamplingError(
                "truncated normal tail sampler did not terminate",
                report={"pending": int(pending.size)},
            )
        out[tail] = draws

    return out


def sample_truncated_normal(
    mean: ArrayLike,
    sd: ArrayLike,
    side: Side | str,
    rng: RngStream,
) -> ArrayLike:
    """Draw from N(mean, sd²) restricted to one side of zero.

    Uses inverse-CDF sampling unless the truncation point lies at least
    ``TAIL_SWITCH`` standard deviations into the tail, where Robert's
    exponential-proposal rejection takes over.
    """
    side = Side(side)
    mean_arr = np.asarray(mean, dtype=float)
    sd_arr = np.asarray(sd, dtype=float)
    if np.any(sd_arr <= 0) or not np.all(np.isfinite(sd_arr)):
        raise DomainError(f"truncated normal needs sd > 0, got {sd!r}")
    scalar = mean_arr.ndim == 0 and sd_arr.ndim == 0
    mean_b, sd_b = np.broadcast_arrays(np.atleast_1d(mean_arr), np.atleast_1d(sd_arr))

    # Below zero is the mirror image of above zero.
    sign = 1.0 if side is Side.ABOVE_ZERO else -1.0
    centre = sign * mean_b
    alpha = -centre / sd_b
    z = _positive_tail(alpha.astype(float).copy(), rng.generator)
    value = centre + sd_b * z
    value = np.where(value > 0.0, value, _TINY)
    return _as_output(sign * value, scalar)


# ═══════════════════════════════════════════════
# Beta family
# ═══════════════════════════════════════════════

def _check_beta_shapes(alpha: np.ndarray, beta: np.ndarray) -> None:
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise DomainError(f"Beta shapes must be positive, got alpha={alpha}, beta={beta}")


def sample_beta(alpha: ArrayLike, beta: ArrayLike, rng: RngStream) -> ArrayLike:
    """Draw from Beta(alpha, beta)."""
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(beta, dtype=float)
    _check_beta_shapes(a, b)
    scalar = a.ndim == 0 and b.ndim == 0
    a_b, b_b = np.broadcast_arrays(np.atleast_1d(a), np.atleast_1d(b))
    return _as_output(rng.generator.beta(a_b, b_b), scalar)


def _truncated_beta_lower_half(a, b, lower, upper, gen):
    """Inverse-CDF draw for intervals whose lower CDF value is ≤ 0.5."""
    f_lo = special.betainc(a, b, lower)
    f_hi = special.betainc(a, b, upper)
    u = f_lo + _open_uniform(gen, a.size) * (f_hi - f_lo)
    return special.betaincinv(a, b, u), f_hi - f_lo


def sample_beta_truncated(
    alpha: ArrayLike,
    beta: ArrayLike,
    lower: ArrayLike,
    upper: ArrayLike,
    rng: RngStream,
) -> ArrayLike:
    """Draw from Beta(alpha, beta) restricted to (lower, upper).

    Raises ``SamplingError`` when an interval carries less than
    ``MIN_TRUNCATED_MASS`` of the Beta mass; ``report['index']`` is the
    position of the first offending element.
    """
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(beta, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    _check_beta_shapes(a, b)
    if np.any(lo < 0) or np.any(hi > 1) or np.any(lo >= hi):
        raise DomainError(f"need 0 <= lower < upper <= 1, got ({lower}, {upper})")
    scalar = all(x.ndim == 0 for x in (a, b, lo, hi))
    a, b, lo, hi = (x.astype(float) for x in np.broadcast_arrays(*(np.atleast_1d(v) for v in (a, b, lo, hi))))
    gen = rng.generator

    if np.all(lo == 0.0) and np.all(hi == 1.0):
        return _as_output(gen.beta(a, b), scalar)

    out = np.empty_like(a)
    mass = np.empty_like(a)
    # Work in whichever tail keeps the CDF values away from 1.
    flip = special.betainc(a, b, lo) > 0.5
    keep = ~flip
    if keep.any():
        out[keep], mass[keep] = _truncated_beta_lower_half(a[keep], b[keep], lo[keep], hi[keep], gen)
    if flip.any():
        y, m = _truncated_beta_lower_half(b[flip], a[flip], 1.0 - hi[flip], 1.0 - lo[flip], gen)
        out[flip], mass[flip] = 1.0 - y, m

    negligible = mass < MIN_TRUNCATED_MASS
    if negligible.any():
        idx = int(np.flatnonzero(negligible)[0])
        raise SamplingError(
            f"Beta({a[idx]:.4g}, {b[idx]:.4g}) has negligible mass on "
            f"({lo[idx]:.4g}, {hi[idx]:.4g})",
            report={"index": idx, "alpha": a[idx], "beta": b[idx], "lower": lo[idx], "upper": hi[idx], "mass": mass[idx]},
        )

    out = np.clip(out, np.nextafter(lo, 1.0), np.nextafter(hi, 0.0))
    return _as_output(out, scalar)


# ═══════════════════════════════════════════════
# Dirichlet / categorical
# ═══════════════════════════════════════════════

def sample_dirichlet(alphas, rng: RngStream) -> np.ndarray:
    """Draw a probability vector from Dirichlet(alphas)."""
    arr = np.asarray(alphas, dtype=float)
    if arr.ndim != 1 or arr.size == 0 or np.any(arr <= 0):
        raise DomainError(f"Dirichlet parameters must be a non-empty positive vector, got {alphas!r}")
    draw = rng.generator.dirichlet(arr)
    return draw / draw.sum()


def _check_simplex(probs: np.ndarray) -> None:
    if np.any(probs < -SIMPLEX_TOLERANCE) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > SIMPLEX_TOLERANCE):
        raise DomainError(f"probabilities are not on the simplex: {probs}")


def sample_categorical(probs, rng: RngStream) -> int:
    """Draw a 0-based category index with probability ``probs[k]``."""
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"categorical needs a probability vector, got {probs!r}")
    _check_simplex(arr)
    return int(sample_categorical_rows(arr[None, :], rng)[0])


def sample_categorical_rows(probs: np.ndarray, rng: RngStream) -> np.ndarray:
    """One 0-based category draw per row of an (n, K) probability matrix."""
    cumulative = np.cumsum(np.clip(probs, 0.0, None), axis=1)
    u = rng.generator.random(probs.shape[0]) * cumulative[:, -1]
    idx = (cumulative <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


# ═══════════════════════════════════════════════
# Normal-Inverse-Gamma
# ═══════════════════════════════════════════════

def sample_nig(m: ArrayLike, beta: ArrayLike, d: ArrayLike, e: ArrayLike, rng: RngStream):
    """Draw (mean, variance) from a Normal-Inverse-Gamma distribution.

    σ² ~ InverseGamma(shape d, scale e) and μ | σ² ~ N(m, σ²/beta).
    """
    m_arr, b_arr, d_arr, e_arr = (np.asarray(v, dtype=float) for v in (m, beta, d, e))
    if np.any(b_arr <= 0) or np.any(d_arr <= 0) or np.any(e_arr <= 0):
        raise DomainError(f"NIG needs beta, d, e > 0, got beta={beta}, d={d}, e={e}")
    scalar = all(v.ndim == 0 for v in (m_arr, b_arr, d_arr, e_arr))
    m_b, b_b, d_b, e_b = np.broadcast_arrays(*(np.atleast_1d(v) for v in (m_arr, b_arr, d_arr, e_arr)))
    gen = rng.generator
    precision = np.maximum(gen.standard_gamma(d_b), _TINY) / e_b
    variance = 1.0 / precision
    mean = m_b + np.sqrt(variance / b_b) * gen.standard_normal(m_b.shape)
    if scalar:
        return float(mean[0]), float(variance[0])
    return mean, variance


# ═══════════════════════════════════════════════
# Bivariate normal
# ═══════════════════════════════════════════════

def sample_bivariate_normal(mean, cov, rng: RngStream) -> np.ndarray:
    """Draw a 2-vector from N₂(mean, cov).

    Raises ``DomainError`` naming the matrix when ``cov`` is not symmetric
    positive definite.
    """
    mu = np.asarray(mean, dtype=float).reshape(2)
    sigma = np.asarray(cov, dtype=float).reshape(2, 2)
    if not np.allclose(sigma, sigma.T):
        raise DomainError(f"covariance is not symmetric: {sigma.tolist()}")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"covariance is not positive definite: {sigma.tolist()}") from exc
    return mu + chol @ rng.generator.standard_normal(2)


def sample_bivariate_normal_batch(means: np.ndarray, covs: np.ndarray, rng: RngStream) -> np.ndarray:
    """Draw one 2-vector per row from N₂(means[n], covs[n]).

    Uses the closed-form 2×2 Cholesky factor.  Raises ``NumericalError``
    with ``report['index']`` set to the first non-SPD matrix.
    """
    c11, c12, c22 = covs[:, 0, 0], covs[:, 0, 1], covs[:, 1, 1]
    bad = (c11 <= 0) | (c11 * c22 - c12 * c12 <= 0) | ~np.isfinite(c11 * c22)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise NumericalError(
            f"covariance is not positive definite: {covs[idx].tolist()}",
            report={"index": idx, "cov": covs[idx].tolist()},
        )
    l11 = np.sqrt(c11)
    l21 = c12 / l11
    l22 = np.sqrt(c22 - l21 * l21)
    z = rng.generator.standard_normal((means.shape[0], 2))
    out = np.empty_like(means)
    out[:, 0] = means[:, 0] + l11 * z[:, 0]
    out[:, 1] = means[:, 1] + l21 * z[:, 0] + l22 * z[:, 1]
    return out
