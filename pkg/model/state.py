"""
Model State — Domain types for responses, parameters and augmented variables.

All types are immutable once constructed (frozen dataclasses holding
read-only numpy arrays) and validate their invariants in
``__post_init__``.  Component and individual indices are 0-based in code;
files and logs show them 1-based.

Usage:
    from model.state import ResponseMatrix, ItemParameters, MixtureParameters
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from core.errors import DomainError, InputError
from core.state_registry import ITEM_MODELS, WEIGHT_RULES, default_alphas

# Tolerance for the weights summing to one.
WEIGHT_SUM_TOLERANCE = 1e-12


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


# ═══════════════════════════════════════════════
# Data
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class ResponseMatrix:
    """J×I dichotomous responses with a missingness mask.

    ``values`` holds 0/1 (missing cells are stored as 0 and must be read
    through ``observed``).
    """

    values: np.ndarray
    observed: np.ndarray
    item_names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values)
        observed = np.asarray(self.observed, dtype=bool)
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
            raise InputError(f"response matrix must be a non-empty 2-D array, got shape {values.shape}")
        if observed.shape != values.shape:
            raise InputError(f"mask shape {observed.shape} does not match responses {values.shape}")
        bad = observed & ~np.isin(values, (0, 1))
        if bad.any():
            j, i = np.argwhere(bad)[0]
            raise InputError(f"response must be 0, 1 or missing, got {values[j, i]!r}", row=int(j) + 1, column=self._name(i))
        empty_rows = np.flatnonzero(~observed.any(axis=1))
        if empty_rows.size:
            raise InputError("individual answered no items", row=int(empty_rows[0]) + 1)
        empty_cols = np.flatnonzero(~observed.any(axis=0))
        if empty_cols.size:
            raise InputError("item answered by no individual", column=self._name(empty_cols[0]))
        names = tuple(self.item_names) or tuple(f"item_{i + 1}" for i in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise InputError(f"{len(names)} item names for {values.shape[1]} items")
        object.__setattr__(self, 'values', _frozen(np.where(observed, values, 0).astype(np.int8)))
        object.__setattr__(self, 'observed', _frozen(observed))
        object.__setattr__(self, 'item_names', names)

    def _name(self, i: int) -> str:
        return self.item_names[i] if self.item_names else f"item_{int(i) + 1}"

    @classmethod
    def from_array(cls, data, item_names: Sequence[str] = ()) -> "ResponseMatrix":
        """Build from a float array where NaN marks a missing response."""
        arr = np.asarray(data, dtype=float)
        observed = ~np.isnan(arr)
        return cls(values=np.where(observed, arr, 0.0), observed=observed, item_names=tuple(item_names))

    @property
    def J(self) -> int:
        return self.values.shape[0]

    @property
    def I(self) -> int:
        return self.values.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def as_float(self) -> np.ndarray:
        """Responses as floats with NaN at missing cells."""
        return np.where(self.observed, self.values.astype(float), np.nan)


# ═══════════════════════════════════════════════
# Parameters
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class ItemParameters:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a, b, c = (np.asarray(v, dtype=float).reshape(-1) for v in (self.a, self.b, self.c))
        if not a.size == b.size == c.size:
            raise DomainError(f"item vectors differ in length: a={a.size}, b={b.size}, c={c.size}")
        if np.any(a <= 0):
            raise DomainError(f"discrimination must be positive, item {int(np.argmin(a)) + 1} has a={a.min()}")
        if np.any(c < 0) or np.any(c >= 1):
            raise DomainError("guessing must lie in [0, 1)")
        for name, arr in (('a', a), ('b', b), ('c', c)):
            object.__setattr__(self, name, _frozen(arr))

    @property
    def I(self) -> int:
        return self.a.size


@dataclass(frozen=True)
class MixtureParameters:
    """Weights, means and variances of the K-component ability mixture.

    Construction checks shape, positivity and the simplex.  The
    identification restrictions are checked separately by
    ``check_identified`` because simulation truths need not satisfy them.
    """

    p: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        p, mu, s2 = (np.asarray(v, dtype=float).reshape(-1) for v in (self.p, self.mu, self.sigma2))
        if not (p.size == mu.size == s2.size) or p.size == 0:
            raise DomainError(f"mixture vectors differ in length: p={p.size}, mu={mu.size}, sigma2={s2.size}")
        if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
            raise DomainError(f"component variances must be positive and finite, got {s2}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise DomainError(f"weights must lie on the simplex, got {p} (sum {p.sum()!r})")
        for name, arr in (('p', p), ('mu', mu), ('sigma2', s2)):
            object.__setattr__(self, name, _frozen(arr))

    @property
    def K(self) -> int:
        return self.p.size

    @classmethod
    def standard_normal(cls) -> "MixtureParameters":
        """The K = 1 mixture of the traditional model."""
        return cls(p=[1.0], mu=[0.0], sigma2=[1.0])

    def identification_problems(self, weight_rule: str = 'p1_gt_half') -> list[str]:
        problems = []
        if self.mu[0] != 0.0 or self.sigma2[0] != 1.0:
            problems.append(f"component 1 must be (0, 1), got ({self.mu[0]}, {self.sigma2[0]})")
        if self.K > 1:
            if weight_rule == 'p1_gt_half' and not self.p[0] > 0.5:
                problems.append(f"p_1 must exceed 0.5, got {self.p[0]}")
            if weight_rule == 'p1_largest' and not np.all(self.p[0] >= self.p[1:]):
                problems.append(f"p_1 must be the largest weight, got {self.p}")
        if self.K > 2 and not np.all(np.diff(self.mu[1:]) > 0):
            problems.append(f"means of components 2..K must increase, got {self.mu[1:]}")
        return problems

    def check_identified(self, weight_rule: str = 'p1_gt_half') -> None:
        """Raise ``DomainError`` unless the identification restrictions hold."""
        problems = self.identification_problems(weight_rule)
        if problems:
            raise DomainError("; ".join(problems))


# ═══════════════════════════════════════════════
# Augmented variables
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class AugmentedState:
    """Abilities plus the three sets of auxiliary variables.

    ``Z`` and ``X`` are meaningful only at observed cells; elsewhere they
    hold ``False`` / ``0.0``.  ``W`` holds 0-based component indices.
    """

    theta: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        for name in ('theta', 'Z', 'X', 'W'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def sign_violations(self, responses: ResponseMatrix) -> int:
        """Number of observed cells breaking the (Y, Z, X) sign table."""
        obs = responses.observed
        y1 = responses.values == 1
        bad = obs & self.Z & (self.X != 0.0)
        bad |= obs & ~self.Z & y1 & ~(self.X > 0.0)
        bad |= obs & ~self.Z & ~y1 & ~(self.X < 0.0)
        bad |= obs & ~y1 & self.Z
        return int(bad.sum())

    def check_signs(self, responses: ResponseMatrix) -> None:
        count = self.sign_violations(responses)
        if count:
            raise DomainError(f"{count} cells violate the augmented sign constraints")


# ═══════════════════════════════════════════════
# Priors / rescaling
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of every prior in the model.

    ``alphas`` and ``nig_m`` may be left empty and are then filled for the
    component count by ``for_components``.
    """

    mu_a: float = 1.0
    sigma2_a: float = 9.0
    mu_b: float = 0.0
    sigma2_b: float = 100.0
    alpha_c: float = 4.0
    beta_c: float = 12.0
    c_lower: Optional[float] = None
    c_upper: Optional[float] = None
    alphas: tuple[float, ...] = ()
    nig_m: tuple[float, ...] = ()
    nig_beta: float = 0.01
    nig_d: float = 0.001
    nig_e: float = 0.001

    def __post_init__(self):
        positive = {
            'sigma2_a': self.sigma2_a, 'sigma2_b': self.sigma2_b,
            'alpha_c': self.alpha_c, 'beta_c': self.beta_c,
            'nig_beta': self.nig_beta, 'nig_d': self.nig_d, 'nig_e': self.nig_e,
        }
        for name, value in positive.items():
            if not value > 0:
                raise DomainError(f"prior hyperparameter {name} must be positive, got {value}")
        if any(not x > 0 for x in self.alphas):
            raise DomainError(f"Dirichlet parameters must be positive, got {self.alphas}")
        lower, upper = self.c_bounds
        if not 0.0 <= lower < upper <= 1.0:
            raise DomainError(f"guessing truncation must satisfy 0 <= lower < upper <= 1, got ({lower}, {upper})")
        object.__setattr__(self, 'alphas', tuple(float(x) for x in self.alphas))
        object.__setattr__(self, 'nig_m', tuple(float(x) for x in self.nig_m))

    @property
    def c_bounds(self) -> tuple[float, float]:
        lower = 0.0 if self.c_lower is None else float(self.c_lower)
        upper = 1.0 if self.c_upper is None else float(self.c_upper)
        return lower, upper

    @property
    def c_truncated(self) -> bool:
        return self.c_bounds != (0.0, 1.0)

    def for_components(self, K: int) -> "PriorSpec":
        """Return a copy whose ``alphas`` and ``nig_m`` have length K."""
        if K < 1:
            raise DomainError(f"component count must be at least 1, got {K}")
        alphas = self.alphas or default_alphas(K)
        if len(alphas) != K:
            raise DomainError(f"{len(alphas)} Dirichlet parameters for K={K}")
        nig_m = self.nig_m or (0.0,) * K
        if len(nig_m) == K - 1:
            nig_m = (0.0, *nig_m)
        if len(nig_m) != K:
            raise DomainError(f"{len(nig_m)} NIG means for K={K} (give K-1 or K values)")
        return replace(self, alphas=tuple(alphas), nig_m=tuple(nig_m))

    def c_prior_mean(self) -> float:
        """Prior mean of the guessing parameter, clipped into its bounds."""
        mean = self.alpha_c / (self.alpha_c + self.beta_c)
        lower, upper = self.c_bounds
        return min(max(mean, lower), upper)


@dataclass(frozen=True)
class RescaleSpec:
    """Target mean ``m`` and standard deviation ``s`` for rescaled abilities."""

    m: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise DomainError(f"rescale sd must be positive, got {self.s}")


@dataclass(frozen=True)
class ModelOptions:
    """Structural choices that are not priors: K, item model, weight rule."""

    K: int = 2
    item_model: str = '3pno'
    weight_rule: str = 'p1_gt_half'

    def __post_init__(self):
        if self.K < 1:
            raise DomainError(f"component count must be at least 1, got {self.K}")
        if self.item_model not in ITEM_MODELS:
            raise DomainError(f"item model must be one of {ITEM_MODELS}, got {self.item_model!r}")
        if self.weight_rule not in WEIGHT_RULES:
            raise DomainError(f"weight rule must be one of {WEIGHT_RULES}, got {self.weight_rule!r}")

    @property
    def has_guessing(self) -> bool:
        return self.item_model == '3pno'

    @property
    def fixed_discrimination(self) -> bool:
        return self.item_model == '1pno'
