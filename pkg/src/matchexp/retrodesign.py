"""Retrospective design diagnostics under a Gaussian estimator model.

Given a hypothesized true effect D and the standard error s of an estimator
treated as N(D, s^2), these closed forms give the probability of a
significant result (power), the probability that a significant estimate has
the wrong sign (type S error, conditional on significance), and the expected
factor by which a significant estimate overstates |D| (type M error, the
exaggeration ratio). With lam = D/s and z the two-sided critical value:

    power  = Phi(lam - z) + Phi(-lam - z)
    type S = Phi(-lam - z) / power                          (D > 0)
    type M = [phi(lam - z) + phi(lam + z)
              + lam (Phi(lam - z) + Phi(lam + z) - 1)] / (lam * power)

At D = 0 the model is symmetric: power equals alpha, a significant estimate
is equally likely on either side (type S = 1/2), and the exaggeration ratio
is undefined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm

from .errors import ConfigError


@dataclass(frozen=True)
class RetrodesignResult:
    effect: float
    se: float
    alpha: float
    power: float
    type_s: float
    type_m: float | None  # undefined at effect == 0


def retrodesign(effect: float, se: float, alpha: float = 0.05) -> RetrodesignResult:
    """Power, type S, and type M error for a hypothesized true effect."""
    if not se > 0:
        raise ConfigError("standard error must be positive")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    z = float(norm.ppf(1 - alpha / 2))
    if effect == 0:
        return RetrodesignResult(
            effect=0.0, se=se, alpha=alpha, power=alpha, type_s=0.5, type_m=None
        )
    lam = abs(effect) / se
    p_right = float(norm.cdf(lam - z))  # significant with the sign of the effect
    p_wrong = float(norm.cdf(-lam - z))  # significant with the opposite sign
    power = p_right + p_wrong
    type_s = p_wrong / power
    numerator = (
        float(norm.pdf(lam - z))
        + float(norm.pdf(lam + z))
        + lam * (float(norm.cdf(lam - z)) + float(norm.cdf(lam + z)) - 1.0)
    )
    type_m = numerator / (lam * power)
    return RetrodesignResult(
        effect=float(effect),
        se=float(se),
        alpha=alpha,
        power=power,
        type_s=type_s,
        type_m=type_m,
    )


def retrodesign_curve(
    se: float,
    effects: Sequence[float],
    alpha: float = 0.05,
) -> list[RetrodesignResult]:
    """One result per hypothetical effect; checks the expected monotone shape
    (power non-decreasing, exaggeration ratio non-increasing in the effect)."""
    effs = [float(e) for e in effects]
    if not effs or any(e <= 0 for e in effs):
        raise ConfigError("effect grid must contain positive values only")
    if sorted(effs) != effs:
        raise ConfigError("effect grid must be sorted increasing")
    results = [retrodesign(e, se, alpha) for e in effs]
    for a, b in zip(results, results[1:]):
        if b.power < a.power - 1e-12:
            raise RuntimeError("power is not non-decreasing along the effect grid")
        if a.type_m is not None and b.type_m is not None and b.type_m > a.type_m + 1e-12:
            raise RuntimeError("type M is not non-increasing along the effect grid")
    return results


def curve_frame(
    results: Sequence[RetrodesignResult],
    half_point: float | None = None,
) -> pd.DataFrame:
    """Tidy (effect, power, type_s, type_m) table; when `half_point` is given
    a row at half the point estimate is appended and marked."""
    rows = [
        {
            "effect": r.effect,
            "power": r.power,
            "type_s": r.type_s,
            "type_m": np.nan if r.type_m is None else r.type_m,
            "is_half_point": False,
        }
        for r in results
    ]
    if half_point is not None and half_point != 0:
        half = retrodesign(abs(half_point) / 2, results[0].se, results[0].alpha)
        rows.append(
            {
                "effect": half.effect,
                "power": half.power,
                "type_s": half.type_s,
                "type_m": np.nan if half.type_m is None else half.type_m,
                "is_half_point": True,
            }
        )
    return pd.DataFrame(rows)
