"""Closed-form power and minimum sample size for the quantile tests.

Univariate power at total sample size n, difference Delta and variance
sigma^2:

    1 - Phi(q_{1-a/2} - sqrt(n) Delta / sigma) + Phi(-q_{1-a/2} - sqrt(n) Delta / sigma)

Multivariate power replaces the shifted normal by a noncentral chi-squared
with J degrees of freedom and noncentrality n Delta' Psi^{-1} Delta, compared
against the central chi-squared quantile q_{J,1-a}.

The special-function substrate below (normal cdf/quantile, central and
noncentral chi-squared) is what both formulas are built from; the noncentral
CDF is a Poisson mixture of central CDFs truncated when the remaining Poisson
tail mass drops under 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammainc, gammaincinv, ndtr, ndtri

from .errors import (
    SingularCovarianceError,
    UnattainablePowerError,
    ValidationError,
)

_POISSON_TAIL_TOL = 1e-12


def normal_cdf(x):
    """Standard normal CDF (erfc-based, |error| well under 1e-12)."""
    return ndtr(x)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF for p strictly inside (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile input must be in (0, 1), got {p!r}")
    return float(ndtri(p))


def chi2_cdf(x, dof: int):
    """Central chi-squared CDF via the regularized incomplete gamma."""
    if dof < 1:
        raise ValidationError("degrees of freedom must be at least 1")
    return gammainc(dof / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_quantile(p: float, dof: int) -> float:
    if not 0.0 < p < 1.0:
        raise ValidationError(f"quantile input must be in (0, 1), got {p!r}")
    if dof < 1:
        raise ValidationError("degrees of freedom must be at least 1")
    return float(2.0 * gammaincinv(dof / 2.0, p))


def noncentral_chi2_cdf(x: float, dof: int, noncentrality: float,
                        tail_tol: float = _POISSON_TAIL_TOL) -> float:
    """Noncentral chi-squared CDF as a Poisson mixture of central CDFs.

    P(X <= x) = sum_k e^{-l/2} (l/2)^k / k! * CentralChi2Cdf(x; dof + 2k).

    The series is truncated once the remaining Poisson mass falls below
    tail_tol, which bounds the truncation error by tail_tol since every
    central CDF factor is at most 1. A secondary stop past the Poisson mode
    handles very large noncentralities, where the central factors underflow
    long before the Poisson weights concentrate.
    """
    if x < 0:
        raise ValidationError("x must be non-negative")
    if dof < 1:
        raise ValidationError("degrees of freedom must be at least 1")
    if noncentrality < 0:
        raise ValidationError("noncentrality must be non-negative")
    if noncentrality == 0.0:
        return float(chi2_cdf(x, dof))
    half = noncentrality / 2.0
    weight = math.exp(-half)  # Poisson(half) mass at k = 0; may underflow
    mass_seen = 0.0
    total = 0.0
    k = 0
    while True:
        term_cdf = float(gammainc((dof + 2 * k) / 2.0, x / 2.0))
        total += weight * term_cdf
        mass_seen += weight
        if 1.0 - mass_seen < tail_tol:
            break
        if k >= half and term_cdf < 1e-16:
            # everything still unaccounted for sits at even larger dof,
            # where the central CDF at x is smaller yet
            break
        k += 1
        weight *= half / k
    return min(1.0, total)


@dataclass(frozen=True)
class PowerSpec:
    """Inputs of a power evaluation.

    Exactly one of total_n / per_group_n is given; per_group_n assumes equal
    allocation (mu1 = 0.5) and means total_n = 2 * per_group_n. deltas is a
    scalar with sigma, or a vector with the psi matrix.
    """

    alpha: float
    deltas: object
    sigma: object = None
    psi: object = None
    total_n: object = None
    per_group_n: object = None
    mu1: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie strictly between 0 and 1")
        if (self.total_n is None) == (self.per_group_n is None):
            raise ValidationError("give exactly one of total_n or per_group_n")
        if self.per_group_n is not None and self.mu1 != 0.5:
            raise ValidationError("per_group_n implies equal allocation (mu1=0.5)")
        if self.n_total < 2:
            raise ValidationError("sample size must be at least 2")
        if (self.sigma is None) == (self.psi is None):
            raise ValidationError("give exactly one of sigma or psi")
        if self.sigma is not None and not float(self.sigma) > 0:
            raise ValidationError("sigma must be positive")

    @property
    def n_total(self) -> int:
        if self.total_n is not None:
            return int(self.total_n)
        return 2 * int(self.per_group_n)


def _univariate_power(n_total, delta, sigma, alpha):
    if delta == 0.0:
        return float(alpha)
    shift = math.sqrt(n_total) * delta / sigma
    q = normal_quantile(1.0 - alpha / 2.0)
    return float(ndtr(-(q - shift)) + ndtr(-q - shift))


def power_univariate(spec: PowerSpec) -> float:
    """Asymptotic power of the two-sided univariate quantile test."""
    if spec.sigma is None:
        raise ValidationError("univariate power needs a scalar sigma")
    delta = float(np.asarray(spec.deltas).reshape(()))
    return _univariate_power(spec.n_total, delta, float(spec.sigma), spec.alpha)


def _noncentrality(psi, deltas):
    psi = np.asarray(psi, dtype=float)
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if psi.shape != (deltas.size, deltas.size):
        raise ValidationError("psi shape must match the delta vector")
    eigenvalues = np.linalg.eigvalsh(psi)
    if eigenvalues[0] <= 0 or eigenvalues[0] <= 1e-10 * eigenvalues[-1]:
        raise SingularCovarianceError(
            message="psi must be positive definite for the power formula"
        )
    factor = cho_factor(psi, lower=True)
    return float(deltas @ cho_solve(factor, deltas)), deltas.size


def power_multivariate(spec: PowerSpec) -> float:
    """Asymptotic power of the joint chi-squared quantile test."""
    if spec.psi is None:
        raise ValidationError("multivariate power needs a psi matrix")
    quad, dof = _noncentrality(spec.psi, spec.deltas)
    if quad == 0.0:
        return float(spec.alpha)
    lam = spec.n_total * quad
    threshold = chi2_quantile(1.0 - spec.alpha, dof)
    return 1.0 - noncentral_chi2_cdf(threshold, dof, lam)


@dataclass(frozen=True)
class SampleSizeResult:
    """Smallest per-group n reaching the target, with its certificate."""

    per_group_n: int
    total_n: int
    achieved_power: float
    power_at_n_minus_1: float
    target_power: float


def min_sample_size(
    target_power: float,
    deltas,
    sigma=None,
    psi=None,
    alpha: float = 0.05,
) -> SampleSizeResult:
    """Minimum per-group sample size under equal allocation.

    Seeded by the closed-form inversion sqrt(n) = (q_{1-a/2} + q_{power})
    * sigma/Delta (total n, rounded up to the next even integer before
    halving), then settled by an integer scan so that the returned per-group
    n satisfies power(n) >= target and power(n-1) < target.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie strictly between 0 and 1")
    if not alpha < target_power < 1.0:
        raise UnattainablePowerError(
            f"target power must lie strictly between alpha={alpha:g} and 1"
        )
    if (sigma is None) == (psi is None):
        raise ValidationError("give exactly one of sigma or psi")

    if sigma is not None:
        delta = float(np.asarray(deltas).reshape(()))
        if delta == 0.0:
            raise UnattainablePowerError("delta is 0: no sample size reaches the target")
        sigma = float(sigma)
        if not sigma > 0:
            raise ValidationError("sigma must be positive")

        def power_at_total(n_total):
            return _univariate_power(n_total, delta, sigma, alpha)

        seed_total = (
            (normal_quantile(1.0 - alpha / 2.0) + normal_quantile(target_power))
            * sigma / abs(delta)
        ) ** 2
    else:
        quad, dof = _noncentrality(psi, deltas)
        if quad == 0.0:
            raise UnattainablePowerError("all deltas are 0: no sample size reaches the target")
        threshold = chi2_quantile(1.0 - alpha, dof)

        def power_at_total(n_total):
            if n_total == 0:
                return float(alpha)
            return 1.0 - noncentral_chi2_cdf(threshold, dof, n_total * quad)

        # chi-squared analogue of the univariate seed; the scan corrects it
        seed_total = (
            (normal_quantile(1.0 - alpha / 2.0) + normal_quantile(target_power)) ** 2
            / quad
        )

    per_group = max(1, math.ceil(seed_total / 2.0))
    while power_at_total(2 * per_group) < target_power:
        per_group += 1
    while per_group > 1 and power_at_total(2 * (per_group - 1)) >= target_power:
        per_group -= 1
    return SampleSizeResult(
        per_group_n=per_group,
        total_n=2 * per_group,
        achieved_power=power_at_total(2 * per_group),
        power_at_n_minus_1=power_at_total(2 * (per_group - 1)),
        target_power=target_power,
    )
