"""Ground-truth-bearing synthetic data.

Emulates a cyclic corrosion chamber: each simulated day the corrosion
current spikes at scheduled peak times, then decays exponentially with that
day's planted time constant toward a baseline; RH and conductance follow
square-wave exposure episodes. A second, independently written Ogata
thinning simulator produces Hawkes event streams for cross-validation
against the model's own sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DegradationEvent, EventSequence, SensorRecord, TimeSeries
from .hawkes import HawkesParams, PeriodicKDE
from .errors import DomainError

BASELINE_CURRENT = 1.0  # uA
RH_DRY = 40.0  # % RH outside wet episodes
RH_WET = 90.0
COND_DRY = 100.0  # uS outside contaminated episodes
COND_WET = 12000.0


@dataclass(frozen=True)
class GroundTruth:
    peak_times: np.ndarray
    peak_amplitudes: np.ndarray
    tau_by_day: np.ndarray
    change_day: int
    rh_episodes: tuple
    cond_episodes: tuple


@dataclass(frozen=True)
class SynthSpec:
    n_days: int = 10
    sample_period: float = 1.0 / 12.0  # hours (5-minute sampling)
    taus: tuple = ()  # per-day tau; empty means constant 4 h
    change_day: int | None = None  # recorded in GroundTruth only
    peak_schedule: tuple = ()  # (hour_of_day, amplitude) applied daily
    rh_episodes: tuple = ()  # absolute (start, end) hours
    cond_episodes: tuple = ()
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_days < 1 or self.sample_period <= 0:
            raise DomainError("need n_days >= 1 and positive sample period")
        if self.taus and len(self.taus) != self.n_days:
            raise DomainError("taus must have one entry per day")
        if self.taus and min(self.taus) <= 0:
            raise DomainError("planted taus must be positive")
        if self.change_day is not None and not 0 <= self.change_day < self.n_days:
            raise DomainError("change_day must lie before n_days")

    def tau_for_day(self, day: int) -> float:
        return self.taus[day] if self.taus else 4.0


def generate_sensor(spec: SynthSpec) -> tuple:
    """Simulate one chamber sensor; returns (SensorRecord, GroundTruth)."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(0.0, spec.n_days * 24.0, spec.sample_period)
    schedule = tuple(spec.peak_schedule) or ((4.0, 5.0),)

    current = np.full_like(t, BASELINE_CURRENT)
    peak_times, peak_amps = [], []
    for day in range(spec.n_days):
        tau = spec.tau_for_day(day)
        for hour, amp in schedule:
            t_peak = day * 24.0 + hour
            peak_times.append(t_peak)
            peak_amps.append(amp)
            after = t >= t_peak
            within_day = t < (day + 1) * 24.0
            sel = after & within_day
            current[sel] += (amp - BASELINE_CURRENT) * np.exp(-(t[sel] - t_peak) / tau)
    if spec.noise_sigma > 0:
        current = current + rng.normal(0.0, spec.noise_sigma, size=len(t))
        current = np.maximum(current, 0.0)

    def square_wave(episodes, low, high):
        v = np.full_like(t, low)
        for start, end in episodes:
            v[(t >= start) & (t < end)] = high
        return v

    rh = square_wave(spec.rh_episodes, RH_DRY, RH_WET)
    cond = square_wave(spec.cond_episodes, COND_DRY, COND_WET)
    temp = 25.0 + 10.0 * np.sin(2 * math.pi * t / 24.0)

    record = SensorRecord(
        sensor_id=f"synth-{spec.seed}",
        platform_id="synth",
        coating_class="non_chromate",
        channels={
            "corrosion_current_uA": TimeSeries(t, current, "corrosion_current_uA"),
            "relative_humidity_pct": TimeSeries(t, rh, "relative_humidity_pct"),
            "conductance_uS": TimeSeries(t, cond, "conductance_uS"),
            "temperature_C": TimeSeries(t, temp, "temperature_C"),
        },
        measurement_period=spec.sample_period,
    )
    truth = GroundTruth(
        np.array(peak_times),
        np.array(peak_amps),
        np.array([spec.tau_for_day(d) for d in range(spec.n_days)]),
        -1 if spec.change_day is None else spec.change_day,
        tuple(spec.rh_episodes),
        tuple(spec.cond_episodes),
    )
    return record, truth


def generate_hawkes_stream(
    params: HawkesParams,
    background: PeriodicKDE | None,
    mark_dist: tuple = (1.0, 0.0),
    T: float = 336.0,
    seed: int = 0,
    sensor_id: str = "synth",
    event_type: str = "corrosion",
) -> EventSequence:
    """Exact Ogata thinning from a specified Hawkes model.

    Marks are i.i.d. from a Gaussian (mean, sigma) truncated at 0 (constant
    when sigma is 0). This is a deliberately separate implementation from
    the model's own sampler so the two can cross-validate.
    """
    rng = np.random.default_rng(seed)
    mean_m, sigma_m = mark_dist
    mu_max = background.mu_max if background is not None else 1.0

    def mu(x):
        return background(x) if background is not None else 1.0

    times: list = []
    marks: list = []

    def excitation_at(x):
        if params.omega == 0.0 or not times:
            return 0.0
        ts = np.asarray(times)
        ms = np.asarray(marks)
        return float(params.beta * np.sum(ms * np.exp(-params.beta * (x - ts))))

    t = 0.0
    while t < T:
        # dominating rate: peak background plus excitation frozen at time t,
        # valid forward since the exponential kernel only decays
        rate_bound = params.alpha * mu_max + params.omega * excitation_at(t)
        if rate_bound <= 0:
            break
        t = t + rng.exponential(1.0 / rate_bound)
        if t >= T:
            break
        lam = params.alpha * mu(t) + params.omega * excitation_at(t)
        if rng.uniform() <= lam / rate_bound:
            if sigma_m > 0:
                m = -1.0
                while m <= 0:
                    m = rng.normal(mean_m, sigma_m)
            else:
                m = mean_m
            times.append(t)
            marks.append(m)
    events = tuple(DegradationEvent(ti, m) for ti, m in zip(times, marks))
    return EventSequence(sensor_id, event_type, events, float(T))


def planted_tau_profile(n_days: int, tau_before: float, tau_after: float, change_day: int) -> tuple:
    """Step profile used by change-point tests."""
    return tuple(tau_before if d < change_day else tau_after for d in range(n_days))
