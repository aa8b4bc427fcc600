"""Plan a two-arm trial on the median: power grid, then minimum sample size.

Walks the closed-form planning path end to end. The control arm is
exponential with rate 1.5 (median about 0.46), administrative censoring is
exponential with rate 0.48 (about 24% censored in the control arm), and we
want to detect a median shift of 0.1 or 0.2. Two comparator families are
considered: proportional hazards, and a delayed effect whose hazard only
drops after t = 0.2.

Run: python3 demos/design_a_trial.py
"""

import math

from survquant import (
    PowerSpec,
    min_sample_size,
    power_univariate,
    scenario_from_delta,
    scenario_sigma2,
)

RATE = 1.5
CENS = 0.48
P = 0.5
T_CUT = 0.2


def describe(form, t_cut):
    print(f"--- {form} comparator ---")
    for delta in (0.1, 0.2):
        scenario = scenario_from_delta(
            RATE, P, delta, t_cut=t_cut, censoring_rate=CENS
        )
        sigma2, parts = scenario_sigma2(scenario, P)
        frac1, frac2 = scenario.censoring_fraction()
        print(
            f"delta={delta}: sigma^2={sigma2:.4f} "
            f"(quantiles {parts['quantile1']:.4f} vs {parts['quantile2']:.4f}, "
            f"censored {frac1:.1%} / {frac2:.1%})"
        )

        # power over a small per-group grid
        cells = []
        for n in (50, 100, 200, 500):
            spec = PowerSpec(
                alpha=0.05, deltas=delta, sigma=math.sqrt(sigma2), per_group_n=n
            )
            cells.append(f"n={n}: {power_univariate(spec):.3f}")
        print("  power  " + "  ".join(cells))

        # smallest per-group n for common targets, with the certificate
        for target in (0.80, 0.90):
            res = min_sample_size(target, delta, sigma=math.sqrt(sigma2))
            print(
                f"  target {target:.0%}: n={res.per_group_n}/group "
                f"(achieves {res.achieved_power:.4f}, "
                f"one fewer gives {res.power_at_n_minus_1:.4f})"
            )
    print()


if __name__ == "__main__":
    print(f"Control: Exp({RATE}), median {-math.log(0.5) / RATE:.4f}; "
          f"censoring Exp({CENS})\n")
    describe("proportional-hazards", t_cut=None)
    describe("delayed-effect", t_cut=T_CUT)
    print("Note how the delayed comparator needs fewer patients at equal")
    print("delta: squeezing the same median shift into the post-t_cut window")
    print("forces a steeper late hazard, which concentrates events and")
    print("shrinks the variance of the comparator's quantile estimate.")
