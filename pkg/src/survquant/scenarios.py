"""Parametric trial scenarios with closed-form planning quantities.

Two event-time families are supported per arm: exponential(rate) and a
two-piece exponential with hazard rate_early on [0, t_cut) and rate_late
afterwards. Censoring is exponential and shared by both arms. For these
families the quantile, the density at the quantile, and the variance
building block

    phi(t) = integral_0^t dLambda(s) / (S(s) S_c(s))
           = integral_0^t hazard(s) / (S(s) S_c(s)) ds

all have closed forms, so the asymptotic variance of the quantile
difference, and hence power and sample size, can be evaluated without
simulation.

Proportional-hazards planning ("scenario 1") solves for a constant
comparator rate shifting the p-quantile by delta; the delayed-effect
variant ("scenario 2") keeps the control hazard until t_cut and solves for
the late rate that produces the same quantile shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleDeltaError, ValidationError


def exp_quantile(rate: float, p: float) -> float:
    """p-quantile of the exponential distribution, -log(1-p)/rate."""
    _check_rate(rate, "rate")
    _check_probability(p)
    return -math.log1p(-p) / rate


def exp_density(rate: float, t: float) -> float:
    return rate * math.exp(-rate * t)


def _check_probability(p):
    if not 0.0 < p < 1.0:
        raise ValidationError(f"probability must lie strictly in (0, 1), got {p!r}")


def _check_rate(value, name):
    if not value > 0:
        raise ValidationError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class ExponentialArm:
    rate: float

    def __post_init__(self):
        _check_rate(self.rate, "rate")

    def quantile(self, p: float) -> float:
        return exp_quantile(self.rate, p)

    def survival(self, t: float) -> float:
        return math.exp(-self.rate * t)

    def hazard(self, t: float) -> float:
        return self.rate

    def density(self, t: float) -> float:
        return exp_density(self.rate, t)

    def phi(self, t: float, censoring_rate: float) -> float:
        return phi_exponential(self.rate, censoring_rate, t)

    def censored_fraction(self, censoring_rate: float) -> float:
        if censoring_rate == 0.0:
            return 0.0
        return censoring_rate / (self.rate + censoring_rate)

    def inverse_cdf(self, x):
        """Map standard-exponential draws x = -log(1-U) to event times."""
        return np.asarray(x, dtype=float) / self.rate


@dataclass(frozen=True)
class PiecewiseExponentialArm:
    """Two-piece exponential hazard: rate_early before t_cut, rate_late after.

    At exactly t_cut the late piece applies (the hazard is taken right
    continuous); density(t_cut) therefore uses rate_late.
    """

    rate_early: float
    rate_late: float
    t_cut: float

    def __post_init__(self):
        _check_rate(self.rate_early, "rate_early")
        _check_rate(self.rate_late, "rate_late")
        if not self.t_cut > 0:
            raise ValidationError(f"t_cut must be positive, got {self.t_cut!r}")

    def cumulative_hazard(self, t: float) -> float:
        if t <= self.t_cut:
            return self.rate_early * t
        return self.rate_early * self.t_cut + self.rate_late * (t - self.t_cut)

    def survival(self, t: float) -> float:
        return math.exp(-self.cumulative_hazard(t))

    def hazard(self, t: float) -> float:
        return self.rate_early if t < self.t_cut else self.rate_late

    def density(self, t: float) -> float:
        return self.hazard(t) * self.survival(t)

    def quantile(self, p: float) -> float:
        return piecewise_quantile(self.rate_early, self.rate_late, self.t_cut, p)

    def phi(self, t: float, censoring_rate: float) -> float:
        return phi_piecewise(
            self.rate_early, self.rate_late, self.t_cut, censoring_rate, t
        )

    def censored_fraction(self, censoring_rate: float) -> float:
        if censoring_rate == 0.0:
            return 0.0
        a = self.rate_early + censoring_rate
        b = self.rate_late + censoring_rate
        early = censoring_rate / a * -math.expm1(-a * self.t_cut)
        late = censoring_rate / b * math.exp(-a * self.t_cut)
        return early + late

    def inverse_cdf(self, x):
        """Map standard-exponential draws to event times of this hazard."""
        x = np.asarray(x, dtype=float)
        knee = self.rate_early * self.t_cut
        return np.where(
            x < knee,
            x / self.rate_early,
            self.t_cut + (x - knee) / self.rate_late,
        )


def piecewise_quantile(rate_early: float, rate_late: float, t_cut: float,
                       p: float) -> float:
    """p-quantile of the two-piece exponential.

    Below the cut the cumulative hazard is rate_early * t; past it the
    residual log survival accrues at rate_late.
    """
    _check_rate(rate_early, "rate_early")
    _check_rate(rate_late, "rate_late")
    _check_probability(p)
    target = -math.log1p(-p)
    knee = rate_early * t_cut
    if target < knee:
        return target / rate_early
    return t_cut + (target - knee) / rate_late


def phi_exponential(rate: float, censoring_rate: float, t: float) -> float:
    """phi(t) for an exponential event arm under exponential censoring.

    The integrand rate / (e^{-rate s} e^{-c s}) integrates to
    rate/(rate+c) * (e^{(rate+c) t} - 1). Saturates to inf once the
    exponential overflows, which is the honest limit for quantiles far out
    in a heavily censored tail.
    """
    _check_rate(rate, "rate")
    if censoring_rate < 0:
        raise ValidationError("censoring_rate must be non-negative")
    if t < 0:
        raise ValidationError("t must be non-negative")
    total = rate + censoring_rate
    try:
        return rate / total * math.expm1(total * t)
    except OverflowError:
        return math.inf


def phi_piecewise(rate_early: float, rate_late: float, t_cut: float,
                  censoring_rate: float, t: float) -> float:
    """phi(t) for the two-piece exponential arm under exponential censoring."""
    _check_rate(rate_early, "rate_early")
    _check_rate(rate_late, "rate_late")
    if censoring_rate < 0:
        raise ValidationError("censoring_rate must be non-negative")
    if t < 0:
        raise ValidationError("t must be non-negative")
    a = rate_early + censoring_rate
    try:
        if t <= t_cut:
            return rate_early / a * math.expm1(a * t)
        early = rate_early / a * math.expm1(a * t_cut)
        b = rate_late + censoring_rate
        # on (t_cut, t] the inverse of S(s) S_c(s) carries the accumulated
        # early-piece hazard as the constant factor e^{(rate_early-rate_late) t_cut}
        late = (
            rate_late / b
            * math.exp((rate_early - rate_late) * t_cut)
            * (math.exp(b * t) - math.exp(b * t_cut))
        )
    except OverflowError:
        return math.inf
    return early + late


def rate_from_delta_scn1(rate_control: float, p: float, delta: float) -> float:
    """Comparator exponential rate whose p-quantile is shifted by delta."""
    shifted = exp_quantile(rate_control, p) - delta
    if shifted <= 0:
        raise InfeasibleDeltaError(
            f"delta={delta:g} pushes the comparator p-quantile to {shifted:g}; "
            "it must stay positive"
        )
    return -math.log1p(-p) / shifted


def rate_from_delta_scn2(rate_control: float, p: float, delta: float,
                         t_cut: float) -> float:
    """Late rate of a two-piece comparator matching the quantile shift.

    The comparator keeps the control hazard on [0, t_cut), so the shifted
    quantile must land strictly past the cut for a positive late rate to
    exist.
    """
    shifted = exp_quantile(rate_control, p) - delta
    if shifted <= t_cut:
        raise InfeasibleDeltaError(
            f"delta={delta:g} needs the comparator p-quantile at {shifted:g}, "
            f"which does not lie past the hazard change point t_cut={t_cut:g}"
        )
    target = -math.log1p(-p)
    return (target - rate_control * t_cut) / (shifted - t_cut)


@dataclass(frozen=True)
class TrialScenario:
    """Two arms plus shared exponential censoring and the arm-1 fraction."""

    arm1: object
    arm2: object
    censoring_rate: float = 0.0
    mu1: float = 0.5

    def __post_init__(self):
        if self.censoring_rate < 0:
            raise ValidationError("censoring_rate must be non-negative")
        if not 0.0 < self.mu1 < 1.0:
            raise ValidationError("mu1 must lie strictly between 0 and 1")

    @property
    def mu2(self) -> float:
        return 1.0 - self.mu1

    def quantile_difference(self, p: float) -> float:
        return self.arm1.quantile(p) - self.arm2.quantile(p)

    def censoring_fraction(self):
        """Expected censored fraction (arm1, arm2)."""
        return (
            self.arm1.censored_fraction(self.censoring_rate),
            self.arm2.censored_fraction(self.censoring_rate),
        )


def scenario_from_delta(
    rate_control: float,
    p: float,
    delta: float,
    t_cut=None,
    censoring_rate: float = 0.0,
    mu1: float = 0.5,
) -> TrialScenario:
    """Build the planning scenario for a target quantile shift delta.

    t_cut=None gives the proportional-hazards comparator, otherwise the
    delayed-effect comparator whose hazard equals the control's until t_cut.
    """
    arm1 = ExponentialArm(rate_control)
    if t_cut is None:
        arm2 = ExponentialArm(rate_from_delta_scn1(rate_control, p, delta))
    else:
        late = rate_from_delta_scn2(rate_control, p, delta, t_cut)
        arm2 = PiecewiseExponentialArm(rate_control, late, t_cut)
    return TrialScenario(arm1, arm2, censoring_rate=censoring_rate, mu1=mu1)


def _arm_term(arm, p, t, censoring_rate, mu):
    density = arm.density(t)
    if density <= 0:
        raise ValidationError("arm density vanishes at its quantile")
    return (1.0 - p) ** 2 * arm.phi(t, censoring_rate) / (mu * density ** 2)


def scenario_sigma2(scenario: TrialScenario, p: float):
    """Asymptotic variance of the scaled quantile difference, plus pieces.

    Returns (sigma2, diagnostics) where diagnostics carries the per-arm
    quantiles, densities, and phi values that make up the sum.
    """
    _check_probability(p)
    t1 = scenario.arm1.quantile(p)
    t2 = scenario.arm2.quantile(p)
    diag = {
        "p": p,
        "quantile1": t1,
        "quantile2": t2,
        "density1": scenario.arm1.density(t1),
        "density2": scenario.arm2.density(t2),
        "phi1": scenario.arm1.phi(t1, scenario.censoring_rate),
        "phi2": scenario.arm2.phi(t2, scenario.censoring_rate),
    }
    sigma2 = _arm_term(
        scenario.arm1, p, t1, scenario.censoring_rate, scenario.mu1
    ) + _arm_term(scenario.arm2, p, t2, scenario.censoring_rate, scenario.mu2)
    return sigma2, diag


def _upsilon(arm, probabilities, censoring_rate, mu):
    ps = np.asarray(probabilities, dtype=float)
    times = np.array([arm.quantile(p) for p in ps])
    densities = np.array([arm.density(t) for t in times])
    if np.any(densities <= 0):
        raise ValidationError("arm density vanishes at one of the quantiles")
    size = ps.size
    out = np.empty((size, size))
    for j in range(size):
        for l in range(size):
            early = j if times[j] <= times[l] else l
            out[j, l] = (
                (1.0 - ps[j]) * (1.0 - ps[l])
                * arm.phi(times[early], censoring_rate)
                / (mu * densities[j] * densities[l])
            )
    return out


def scenario_psi(scenario: TrialScenario, probabilities) -> np.ndarray:
    """Covariance matrix of the scaled quantile-difference vector."""
    ps = np.asarray(probabilities, dtype=float)
    if ps.ndim != 1 or ps.size == 0:
        raise ValidationError("probabilities must be a non-empty 1-d sequence")
    for p in ps:
        _check_probability(p)
    if np.unique(ps).size != ps.size:
        raise ValidationError("probabilities must be distinct")
    return _upsilon(
        scenario.arm1, ps, scenario.censoring_rate, scenario.mu1
    ) + _upsilon(scenario.arm2, ps, scenario.censoring_rate, scenario.mu2)


def calibrate_censoring(arm, target_fraction: float, tol: float = 1e-8) -> float:
    """Censoring rate giving the requested expected censored fraction.

    Monotone bisection on censored_fraction(rate); the bracket is grown
    geometrically first. Stops when the bracket width drops under
    tol * max(1, hi).
    """
    if not 0.0 < target_fraction < 1.0:
        raise ValidationError(
            f"target censored fraction must lie strictly in (0, 1), got "
            f"{target_fraction!r}"
        )
    lo, hi = 0.0, 1.0
    while arm.censored_fraction(hi) < target_fraction:
        hi *= 2.0
        if hi > 1e12:
            raise ValidationError("no finite censoring rate reaches the target")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if arm.censored_fraction(mid) < target_fraction:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_SCALAR_KEYS = {
    "lambda_a", "lambda_b", "delta", "t_cut", "lambda_cens",
    "target_censoring", "p", "mu1",
}
_LIST_KEYS = {"p_list"}


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario description from flat key=value text.

    Recognized keys: lambda_a (control rate, required), exactly one of
    lambda_b / delta (comparator rate or quantile shift), optional t_cut
    (presence selects the delayed-effect comparator), at most one of
    lambda_cens / target_censoring, exactly one of p / p_list, optional
    mu1 (default 0.5).
    """

    lambda_a: float
    lambda_b: float = None
    delta: float = None
    t_cut: float = None
    lambda_cens: float = None
    target_censoring: float = None
    p: float = None
    p_list: tuple = None
    mu1: float = 0.5

    def __post_init__(self):
        _check_rate(self.lambda_a, "lambda_a")
        if (self.lambda_b is None) == (self.delta is None):
            raise ValidationError("give exactly one of lambda_b or delta")
        if self.lambda_cens is not None and self.target_censoring is not None:
            raise ValidationError(
                "give at most one of lambda_cens or target_censoring"
            )
        if (self.p is None) == (self.p_list is None):
            raise ValidationError("give exactly one of p or p_list")
        if self.p is not None:
            _check_probability(self.p)
        if self.p_list is not None:
            if len(self.p_list) == 0:
                raise ValidationError("p_list must not be empty")
            for value in self.p_list:
                _check_probability(value)
            if len(set(self.p_list)) != len(self.p_list):
                raise ValidationError("p_list entries must be distinct")

    @property
    def probabilities(self) -> tuple:
        if self.p is not None:
            return (self.p,)
        return self.p_list


def parse_scenario_values(text: str) -> dict:
    """Parse key=value lines ('#' comments and blank lines skipped).

    Returns the raw key/value mapping without cross-field validation, so a
    caller can overlay command-line choices before building the config.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(
                f"scenario config line {lineno}: expected key=value, got {raw!r}"
            )
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if key in values:
            raise ValidationError(f"scenario config line {lineno}: duplicate key {key}")
        if key in _SCALAR_KEYS:
            try:
                values[key] = float(rhs)
            except ValueError:
                raise ValidationError(
                    f"scenario config line {lineno}: {key} needs a number, got {rhs!r}"
                ) from None
        elif key in _LIST_KEYS:
            try:
                values[key] = tuple(float(tok) for tok in rhs.split(",") if tok.strip())
            except ValueError:
                raise ValidationError(
                    f"scenario config line {lineno}: {key} needs comma-separated "
                    f"numbers, got {rhs!r}"
                ) from None
        else:
            raise ValidationError(
                f"scenario config line {lineno}: unknown key {key!r}"
            )
    return values


def parse_scenario_config(text: str) -> ScenarioConfig:
    values = parse_scenario_values(text)
    if "lambda_a" not in values:
        raise ValidationError("scenario config is missing lambda_a")
    return ScenarioConfig(**values)


def resolve_scenario(config: ScenarioConfig) -> TrialScenario:
    """Turn a parsed config into a concrete TrialScenario.

    delta-form configs use the first probability as the planning quantile;
    target_censoring is calibrated on the control arm by bisection.
    """
    arm1 = ExponentialArm(config.lambda_a)
    if config.lambda_b is not None:
        if config.t_cut is None:
            arm2 = ExponentialArm(config.lambda_b)
        else:
            arm2 = PiecewiseExponentialArm(
                config.lambda_a, config.lambda_b, config.t_cut
            )
    else:
        p = config.probabilities[0]
        if config.t_cut is None:
            arm2 = ExponentialArm(
                rate_from_delta_scn1(config.lambda_a, p, config.delta)
            )
        else:
            late = rate_from_delta_scn2(
                config.lambda_a, p, config.delta, config.t_cut
            )
            arm2 = PiecewiseExponentialArm(config.lambda_a, late, config.t_cut)
    if config.target_censoring is not None:
        censoring_rate = calibrate_censoring(arm1, config.target_censoring)
    elif config.lambda_cens is not None:
        if config.lambda_cens < 0:
            raise ValidationError("lambda_cens must be non-negative")
        censoring_rate = config.lambda_cens
    else:
        censoring_rate = 0.0
    return TrialScenario(arm1, arm2, censoring_rate=censoring_rate, mu1=config.mu1)
