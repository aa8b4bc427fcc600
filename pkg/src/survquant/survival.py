"""Kaplan-Meier estimation, survival quantiles, and the variance factor.

Everything downstream (tests, power, simulation) is built on three pieces
estimated here from right-censored samples:

* the product-limit estimate of the event distribution,
* its quantiles F^{-1}(p) = inf{t : F(t) >= p},
* the cumulative variance factor phi(t) = integral of dLambda/H up to t,
  estimated as n times the Greenwood sum  sum_j d_j / (Y_j (Y_j - d_j)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTailError, ValidationError

# Cumulative products of step factors round: 0.75 * (2/3) is
# 0.49999999999999994, yet the median of an uncensored {1,2,3,4} must be 2.
# KM jumps are at least 1/n, so this slack can never skip a real step.
_CDF_ATOL = 1e-9


@dataclass(frozen=True)
class SurvivalSample:
    """One arm of right-censored observations.

    times holds the observed times min(event, censoring); events holds True
    where the event was observed and False where the observation was
    censored.
    """

    times: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        events = np.asarray(self.events, dtype=bool)
        if times.ndim != 1 or events.ndim != 1:
            raise ValidationError("times and events must be one-dimensional")
        if times.size != events.size:
            raise ValidationError("times and events must have equal length")
        if times.size == 0:
            raise ValidationError("empty sample")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise ValidationError("times must be finite and non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)

    @property
    def n(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class TwoArmData:
    """Both arms of a two-sample problem plus their allocation fractions."""

    arm1: SurvivalSample
    arm2: SurvivalSample

    @property
    def n1(self) -> int:
        return self.arm1.n

    @property
    def n2(self) -> int:
        return self.arm2.n

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def mu1_hat(self) -> float:
        return self.n1 / self.n

    @property
    def mu2_hat(self) -> float:
        return self.n2 / self.n


@dataclass(frozen=True)
class KaplanMeierFit:
    """Product-limit fit over the distinct times carrying at least one event.

    survival[j] is the estimate just after event_times[j]; the curve is 1
    before the first event time. greenwood_cumsum[j] is the running sum of
    d/(Y(Y-d)) through step j, with +inf from the first step where Y == d
    onward kept as a sentinel for an exploding variance.
    """

    event_times: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray
    survival: np.ndarray
    greenwood_cumsum: np.ndarray
    n: int

    def survival_at(self, t):
        """Right-continuous step evaluation of the survival estimate."""
        idx = np.searchsorted(self.event_times, t, side="right")
        padded = np.concatenate(([1.0], self.survival))
        return padded[idx]

    def survival_before(self, t):
        """Left limit S(t-): steps strictly before t count."""
        idx = np.searchsorted(self.event_times, t, side="left")
        padded = np.concatenate(([1.0], self.survival))
        return padded[idx]

    def cdf_at(self, t):
        return 1.0 - self.survival_at(t)

    @property
    def max_cdf(self) -> float:
        if self.survival.size == 0:
            return 0.0
        return float(1.0 - self.survival[-1])


@dataclass(frozen=True)
class QuantileEstimate:
    """Estimated F^{-1}(p); reachable is False when F never attains p."""

    p: float
    time: float
    reachable: bool


def _step_counts(sample: SurvivalSample):
    """Per distinct time: observations, events, and the size of the risk set."""
    uniq, inverse = np.unique(sample.times, return_inverse=True)
    total = np.bincount(inverse, minlength=uniq.size)
    events = np.bincount(
        inverse, weights=sample.events.astype(float), minlength=uniq.size
    )
    # Y(u) = number of observations with T >= u
    at_risk = sample.n - np.concatenate(([0], np.cumsum(total)[:-1]))
    return uniq, total, events, at_risk


def _product_limit(event_times, d, y, n):
    factors = 1.0 - d / y
    survival = np.cumprod(factors)
    with np.errstate(divide="ignore"):
        terms = np.where(y > d, d / (y * (y - d)), np.inf)
    return KaplanMeierFit(
        event_times=event_times,
        at_risk=y,
        n_events=d,
        survival=survival,
        greenwood_cumsum=np.cumsum(terms),
        n=int(n),
    )


def fit_kaplan_meier(sample: SurvivalSample) -> KaplanMeierFit:
    """Product-limit estimate of the event distribution.

    Ties between events and censorings at the same observed time follow the
    usual convention that events happen first, so a censored subject at time
    u is still in the risk set of the events at u.
    """
    uniq, total, events, at_risk = _step_counts(sample)
    mask = events > 0
    return _product_limit(uniq[mask], events[mask], at_risk[mask].astype(float), sample.n)


def fit_censoring_km(sample: SurvivalSample) -> KaplanMeierFit:
    """Product-limit estimate of the censoring distribution.

    Same algorithm with the indicators flipped. Because events precede
    censorings at tied times, the events at a time u are removed from the
    risk set before the censorings at u are counted.
    """
    uniq, total, events, at_risk = _step_counts(sample)
    censored = total - events
    mask = censored > 0
    y = (at_risk - events)[mask].astype(float)
    return _product_limit(uniq[mask], censored[mask], y, sample.n)


def quantile_at(fit: KaplanMeierFit, p: float) -> QuantileEstimate:
    """Smallest event time where the estimated CDF reaches p."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"p must lie strictly between 0 and 1, got {p!r}")
    if fit.event_times.size == 0:
        return QuantileEstimate(p=p, time=math.nan, reachable=False)
    cdf = 1.0 - fit.survival
    idx = int(np.searchsorted(cdf, p - _CDF_ATOL, side="left"))
    if idx >= fit.event_times.size:
        return QuantileEstimate(p=p, time=math.nan, reachable=False)
    return QuantileEstimate(p=p, time=float(fit.event_times[idx]), reachable=True)


def phi_hat(fit: KaplanMeierFit, t: float) -> float:
    """Variance factor estimate n * sum_{t_j <= t} d_j / (Y_j (Y_j - d_j)).

    (1-p)^2 * phi_hat / n is exactly the Greenwood variance of the CDF
    estimate at the quantile, which is what puts this factor inside the
    variance of the estimated quantile difference.
    """
    if fit.event_times.size == 0 or t < fit.event_times[0]:
        raise ValidationError("phi_hat requires at least one event at or before t")
    idx = int(np.searchsorted(fit.event_times, t, side="right")) - 1
    value = fit.greenwood_cumsum[idx]
    if not np.isfinite(value):
        raise DegenerateTailError(
            "variance factor is infinite: the risk set is exhausted by "
            "events at or before the requested time"
        )
    return float(fit.n * value)
