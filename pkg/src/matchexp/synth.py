"""Synthetic data-generating processes with known ground truth.

Two layers: `generate` builds a full time series (weather-like covariates,
a regular arrival schedule with random dropouts, outcomes with an injected
treatment effect) for exercising the whole matching pipeline, and
`PairedDGP` draws matched-pair differences directly for fast calibration
and coverage experiments on the inference machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .dataset import CalendarTable, Granularity, Schema, TimeSeriesDataset
from .errors import ConfigError
from .inference import (
    InferenceSettings,
    fisherian_interval,
    neyman,
    studentized_interval,
)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic time series generator."""

    n_units: int
    granularity: Granularity = "hourly"
    start: str = "2012-01-02T00:00:00"
    seed: int = 0
    # arrival process: scheduled slots thinned by random dropouts
    arrival_hours: tuple[int, ...] = (7, 8)
    arrival_weekdays: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6)
    arrival_dropout: float = 0.35
    off_schedule_rate: float = 0.005
    two_vessel_rate: float = 0.0
    tonnage_mean: float = 65_000.0
    tonnage_sd: float = 12_000.0
    confounding: float = 0.0  # links dropout odds to temperature
    # outcome model
    outcomes: tuple[str, ...] = ("no2",)
    effect: float = 0.0
    effect_sd: float = 0.0
    noise_sd: float = 4.0
    missing_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.n_units < 1:
            raise ConfigError("n_units must be positive")
        if not 0 <= self.arrival_dropout <= 1:
            raise ConfigError("arrival_dropout must lie in [0, 1]")
        if not self.outcomes:
            raise ConfigError("at least one outcome is required")

    @classmethod
    def from_dict(cls, raw) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        coerced = dict(raw)
        for key in ("arrival_hours", "arrival_weekdays", "outcomes"):
            if key in coerced:
                coerced[key] = tuple(coerced[key])
        return cls(**coerced)


@dataclass(frozen=True)
class GroundTruth:
    """What the generator actually injected, for validation harnesses."""

    unit_effects: np.ndarray
    treated: np.ndarray
    n_arrivals: int
    in_window_fraction: float
    confounding: float


def synthetic_calendar(years: Sequence[int]) -> CalendarTable:
    """A small fixed calendar: four bank days and two vacation windows a year."""
    bank, holidays = [], []
    for y in years:
        bank += [f"{y}-01-01", f"{y}-05-01", f"{y}-07-14", f"{y}-12-25"]
        holidays += [(f"{y}-08-01", f"{y}-08-15"), (f"{y}-12-20", f"{y}-12-31")]
    return CalendarTable.from_dict({"bank_days": bank, "holidays": holidays})


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    shocks = rng.normal(0.0, sigma, size=n)
    out = np.empty(n)
    out[0] = shocks[0] / np.sqrt(1 - phi**2)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + shocks[t]
    return out


def _two_state_chain(
    rng: np.random.Generator, n: int, p_stay: float, p_enter: float
) -> np.ndarray:
    u = rng.random(n)
    state = np.zeros(n, dtype=bool)
    state[0] = u[0] < p_enter
    for t in range(1, n):
        prob = p_stay if state[t - 1] else p_enter
        state[t] = u[t] < prob
    return state


def generate(config: SynthConfig) -> tuple[TimeSeriesDataset, GroundTruth]:
    """Deterministic synthetic dataset plus its ground truth record."""
    rng = np.random.default_rng(config.seed)
    n = config.n_units
    step = "h" if config.granularity == "hourly" else "D"
    timestamps = pd.date_range(config.start, periods=n, freq=step)

    day_of_year = timestamps.dayofyear.to_numpy()
    hour = timestamps.hour.to_numpy()
    weekday = timestamps.weekday.to_numpy()

    temperature = (
        14.0
        + 8.0 * np.sin(2 * np.pi * (day_of_year - 100) / 365.25)
        + (4.0 * np.sin(2 * np.pi * (hour - 10) / 24.0) if config.granularity == "hourly" else 0.0)
        + _ar1(rng, n, 0.8, 1.5)
    )
    humidity = np.clip(
        65.0 - 0.8 * (temperature - 14.0) + _ar1(rng, n, 0.6, 4.0), 20.0, 100.0
    )
    wind_speed = np.abs(3.0 + _ar1(rng, n, 0.7, 1.2))
    west = _two_state_chain(rng, n, p_stay=0.85, p_enter=0.35)
    wind_direction = np.where(west, "W", "E").astype(object)
    rainfall = _two_state_chain(rng, n, p_stay=0.5, p_enter=0.05).astype(float)

    # arrival schedule with dropouts (optionally confounded by temperature)
    if config.granularity == "hourly":
        scheduled = np.isin(hour, config.arrival_hours) & np.isin(
            weekday, config.arrival_weekdays
        )
    else:
        scheduled = np.isin(weekday, config.arrival_weekdays)
    temp_z = (temperature - temperature.mean()) / max(temperature.std(), 1e-9)
    dropout = np.clip(config.arrival_dropout + config.confounding * temp_z, 0.02, 0.98)
    occurs = scheduled & (rng.random(n) >= dropout)
    stray = (~scheduled) & (rng.random(n) < config.off_schedule_rate)
    counts = (occurs | stray).astype(float)
    counts += ((counts > 0) & (rng.random(n) < config.two_vessel_rate)).astype(float)
    tonnage_draw = np.maximum(rng.normal(config.tonnage_mean, config.tonnage_sd, n), 5_000.0)
    tonnage = counts * tonnage_draw

    treated = counts > 0
    unit_effects = config.effect + config.effect_sd * rng.standard_normal(n)

    frame = pd.DataFrame(
        {
            "timestamp": timestamps,
            "temperature": temperature,
            "humidity": humidity,
            "wind_speed": wind_speed,
            "wind_direction": wind_direction,
            "rainfall": rainfall,
            "cruise_tonnage": tonnage,
            "cruise_count": counts,
        }
    )
    for i, name in enumerate(config.outcomes):
        base = 20.0 + 5.0 * i
        signal = (
            base
            + 0.5 * (temperature - 14.0)
            + 0.05 * (humidity - 65.0)
            - 0.8 * (wind_speed - 3.0)
            + 2.0 * west.astype(float)
            + unit_effects * treated
            + _ar1(rng, n, 0.5, config.noise_sd)
        )
        if config.missing_rate > 0:
            signal = np.where(rng.random(n) < config.missing_rate, np.nan, signal)
        frame[name] = signal

    schema = Schema(
        granularity=config.granularity,
        covariates={
            "temperature": "numeric",
            "humidity": "numeric",
            "wind_speed": "numeric",
            "wind_direction": "categorical",
            "rainfall": "numeric",
        },
        outcomes={name: "ug/m3" for name in config.outcomes},
        interventions=("cruise_tonnage", "cruise_count"),
    )
    dataset = TimeSeriesDataset(frame, schema)
    dataset = dataset.with_calendar(
        synthetic_calendar(sorted(set(timestamps.year.tolist())))
    )

    n_arrivals = int((counts > 0).sum())
    in_window = float((occurs.sum()) / max(n_arrivals, 1))
    truth = GroundTruth(
        unit_effects=unit_effects,
        treated=treated,
        n_arrivals=n_arrivals,
        in_window_fraction=in_window,
        confounding=config.confounding,
    )
    return dataset, truth


# ---------------------------------------------------------------------------
# Pair-level calibration harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairedDGP:
    """Matched-pair differences with randomized within-pair assignment.

    d_i = tau_i + (eta_t - eta_c) with iid unit noises, so the adjusted
    difference is sign-symmetric by construction; tau_i is constant when
    `effect_sd` is 0 and varies between pairs otherwise.
    """

    n_pairs: int
    effect: float = 0.0
    effect_sd: float = 0.0
    noise_sd: float = 1.0

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        tau = self.effect + self.effect_sd * rng.standard_normal(self.n_pairs)
        noise = self.noise_sd * (
            rng.standard_normal(self.n_pairs) - rng.standard_normal(self.n_pairs)
        )
        return tau + noise, float(np.mean(tau))


@dataclass(frozen=True)
class EstimatorCoverage:
    coverage: float
    mean_width: float
    rejection_rate: float  # interval excludes zero


@dataclass(frozen=True)
class CoverageSummary:
    replications: int
    fisherian: EstimatorCoverage
    neyman: EstimatorCoverage
    studentized: EstimatorCoverage


def coverage_experiment(
    dgp: PairedDGP,
    replications: int,
    settings: InferenceSettings = InferenceSettings(),
    seed: int = 0,
) -> CoverageSummary:
    """Empirical coverage of the realized mean effect, per estimator.

    Each replication draws a fresh pair-difference vector, builds the
    Fisherian, Neymanian, and studentized intervals, and scores whether each
    interval contains that replication's realized mean effect.
    """
    if replications < 100:
        raise ConfigError("coverage experiments need at least 100 replications")
    seeds = np.random.SeedSequence(seed).spawn(replications)
    hits = {"fisherian": 0, "neyman": 0, "studentized": 0}
    widths = {"fisherian": 0.0, "neyman": 0.0, "studentized": 0.0}
    rejects = {"fisherian": 0, "neyman": 0, "studentized": 0}

    for rep_seq in seeds:
        rng = np.random.default_rng(rep_seq)
        d, estimand = dgp.draw(rng)
        rep_seed = int(rep_seq.generate_state(1)[0])
        fisher = fisherian_interval(
            d,
            grid=settings.grid,
            alpha=settings.alpha,
            draws=settings.draws,
            seed=rep_seed,
            exact_cutoff=settings.exact_cutoff,
            threads=settings.threads,
        )
        ney = neyman(d, settings.alpha)
        stud = studentized_interval(
            d,
            grid=settings.grid,
            alpha=settings.alpha,
            draws=settings.draws,
            seed=rep_seed,
            exact_cutoff=settings.exact_cutoff,
            threads=settings.threads,
        )
        for name, lo, hi in (
            ("fisherian", fisher.lower, fisher.upper),
            ("neyman", ney.lower, ney.upper),
            ("studentized", stud.lower, stud.upper),
        ):
            hits[name] += int(lo <= estimand <= hi)
            widths[name] += hi - lo
            rejects[name] += int(lo > 0 or hi < 0)

    def summarize(name: str) -> EstimatorCoverage:
        return EstimatorCoverage(
            coverage=hits[name] / replications,
            mean_width=widths[name] / replications,
            rejection_rate=rejects[name] / replications,
        )

    return CoverageSummary(
        replications=replications,
        fisherian=summarize("fisherian"),
        neyman=summarize("neyman"),
        studentized=summarize("studentized"),
    )
