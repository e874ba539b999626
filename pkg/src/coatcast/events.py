"""Discrete degradation events from continuous sensor channels.

Three event kinds: corrosion (current peaks above a moving quantile),
environment (joint persistent wetness + contamination), and hybrid
(corrosion peaks gated by the environment condition). Extraction parameters
are calibrated by minimizing the coefficient of variation of the number of
events at failure across a calibration cohort.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import defaults
from .core import DegradationEvent, EventSequence, FailureLabel, SensorRecord, TimeSeries
from .errors import DomainError, StatsError


@dataclass(frozen=True)
class CorrosionEventParams:
    window_len: float = defaults.CORROSION_WINDOW_LEN
    quantile: float = defaults.CORROSION_QUANTILE
    local_radius: float = defaults.CORROSION_LOCAL_RADIUS

    def __post_init__(self):
        if self.window_len <= 0 or self.local_radius <= 0:
            raise DomainError("window_len and local_radius must be positive")
        if not 0 < self.quantile < 1:
            raise DomainError("quantile must lie in (0, 1)")

    def astuple(self):
        return (self.window_len, self.quantile, self.local_radius)


@dataclass(frozen=True)
class EnvironmentEventParams:
    rh_thresh: float = defaults.ENV_RH_THRESH
    cond_thresh: float = defaults.ENV_COND_THRESH
    time_of_wetness_min: float = defaults.ENV_TOW_MIN
    contaminant_time_min: float = defaults.ENV_CET_MIN

    def __post_init__(self):
        if not 0 < self.rh_thresh < 100:
            raise DomainError("rh_thresh must lie in (0, 100)")
        if self.time_of_wetness_min <= 0 or self.contaminant_time_min <= 0:
            raise DomainError("persistence durations must be positive")

    def astuple(self):
        return (self.rh_thresh, self.cond_thresh, self.time_of_wetness_min, self.contaminant_time_min)


@dataclass(frozen=True)
class HybridEventParams:
    corrosion: CorrosionEventParams
    environment: EnvironmentEventParams

    def astuple(self):
        return self.corrosion.astuple() + self.environment.astuple()


@dataclass(frozen=True)
class EventStats:
    mean_count_at_failure: float
    cv: float
    pearson_ttf: float
    spearman_ttf: float


# ---------------------------------------------------------------------------
# Extraction


def _trailing_quantile(t, v, window_len, q):
    """Empirical quantile of the trailing window at each sample (inclusive)."""
    out = np.empty(len(t))
    start = 0
    for i in range(len(t)):
        while t[i] - t[start] > window_len:
            start += 1
        out[i] = np.quantile(v[start : i + 1], q)
    return out


def _local_maxima(t, v, radius):
    """Indices that dominate their +-radius neighborhood.

    A sample qualifies if it is >= everything in the neighborhood, strictly
    greater than every earlier sample there, and strictly greater than at
    least one neighbor (so plateaus keep only their first sample and
    constant stretches produce nothing).
    """
    idx = []
    n = len(t)
    lo = 0
    hi = 0
    for i in range(n):
        while t[i] - t[lo] > radius:
            lo += 1
        while hi < n and t[hi] - t[i] <= radius:
            hi += 1
        left = v[lo:i]
        right = v[i + 1 : hi]
        if len(left) == 0 and len(right) == 0:
            continue
        if len(left) and v[i] <= left.max():
            continue
        if len(right) and v[i] < right.max():
            continue
        if not ((len(left) and v[i] > left.min()) or (len(right) and v[i] > right.min())):
            continue
        idx.append(i)
    return np.array(idx, dtype=int)


def extract_corrosion_events(
    current: TimeSeries,
    p: CorrosionEventParams = CorrosionEventParams(),
    sensor_id: str = "",
) -> EventSequence:
    """Current peaks above a trailing moving-quantile threshold.

    An event fires at every sample that is a strict local maximum within
    +-local_radius and exceeds the trailing window_len quantile; the mark is
    the current at the peak.
    """
    t, v = current.timestamps, current.values
    if len(t) == 0 or t[-1] - t[0] < p.window_len:
        raise DomainError("series must span at least window_len")
    thresh = _trailing_quantile(t, v, p.window_len, p.quantile)
    peaks = _local_maxima(t, v, p.local_radius)
    keep = peaks[v[peaks] > thresh[peaks]]
    events = tuple(DegradationEvent(float(t[i]), float(v[i])) for i in keep)
    return EventSequence(sensor_id, "corrosion", events, float(t[-1]))


def _joint_episodes(rh: TimeSeries, cond: TimeSeries, p: EnvironmentEventParams):
    """Latched joint-exposure episodes as (event_time, episode_end) pairs.

    The RH persistence clock starts when RH first holds >= rh_thresh, the
    conductance clock analogously; an episode fires when both clocks have
    run for their minimum durations, and stays latched until either raw
    signal drops below its threshold, which resets both clocks.
    """
    if len(rh) != len(cond) or not np.array_equal(rh.timestamps, cond.timestamps):
        raise DomainError("rh and conductance must share a timestamp grid")
    t = rh.timestamps
    episodes = []
    wet_start = None
    cond_start = None
    latched = False
    fired_at = None
    for k in range(len(t)):
        rh_ok = rh.values[k] >= p.rh_thresh
        cond_ok = cond.values[k] >= p.cond_thresh
        if latched:
            if not (rh_ok and cond_ok):
                episodes.append((fired_at, float(t[k])))
                latched = False
                fired_at = None
                # an episode ending resets both persistence clocks, even for
                # the signal that stayed above its threshold
                wet_start = float(t[k]) if rh_ok else None
                cond_start = float(t[k]) if cond_ok else None
            continue
        # outside an episode the two clocks run independently: each starts
        # when its own signal first holds and resets only when it drops
        if rh_ok:
            if wet_start is None:
                wet_start = float(t[k])
        else:
            wet_start = None
        if cond_ok:
            if cond_start is None:
                cond_start = float(t[k])
        else:
            cond_start = None
        if wet_start is not None and cond_start is not None:
            t_star = max(wet_start + p.time_of_wetness_min, cond_start + p.contaminant_time_min)
            if t_star <= t[k]:
                latched = True
                fired_at = t_star
    if latched:
        episodes.append((fired_at, np.inf))  # still active at series end
    return episodes


def extract_environment_events(
    rh: TimeSeries,
    cond: TimeSeries,
    p: EnvironmentEventParams = EnvironmentEventParams(),
    sensor_id: str = "",
) -> EventSequence:
    """One unit-mark event per latched joint wet+contaminated episode."""
    episodes = _joint_episodes(rh, cond, p)
    events = tuple(DegradationEvent(start, 1.0) for start, _ in episodes)
    return EventSequence(sensor_id, "environment", events, float(rh.timestamps[-1]))


def extract_hybrid_events(
    current: TimeSeries,
    rh: TimeSeries,
    cond: TimeSeries,
    p: HybridEventParams | None = None,
    sensor_id: str = "",
) -> EventSequence:
    """Corrosion peaks that occur inside an active environment episode."""
    if p is None:
        p = HybridEventParams(
            CorrosionEventParams(),
            EnvironmentEventParams(
                defaults.HYBRID_RH_THRESH,
                defaults.HYBRID_COND_THRESH,
                defaults.HYBRID_TOW_MIN,
                defaults.HYBRID_CET_MIN,
            ),
        )
    corro = extract_corrosion_events(current, p.corrosion, sensor_id)
    episodes = _joint_episodes(rh, cond, p.environment)
    events = tuple(
        e
        for e in corro.events
        if any(start <= e.time < end for start, end in episodes)
    )
    return EventSequence(sensor_id, "hybrid", events, corro.horizon_T)


def extract_events(record: SensorRecord, kind: str, params) -> EventSequence:
    """Dispatch extraction by event kind on a full SensorRecord."""
    if kind == "corrosion":
        return extract_corrosion_events(record.current, params, record.sensor_id)
    if kind == "environment":
        return extract_environment_events(
            record.channel("relative_humidity_pct"),
            record.channel("conductance_uS"),
            params,
            record.sensor_id,
        )
    if kind == "hybrid":
        return extract_hybrid_events(
            record.current,
            record.channel("relative_humidity_pct"),
            record.channel("conductance_uS"),
            params,
            record.sensor_id,
        )
    raise DomainError(f"unknown event kind {kind!r}")


# ---------------------------------------------------------------------------
# Diagnostics


def counts_at_failure(seqs, labels) -> list:
    """Per sensor, how many events occurred at or before the failure time."""
    by_sensor = {lab.sensor_id: lab.time for lab in labels}
    counts = []
    for seq in seqs:
        if seq.sensor_id not in by_sensor:
            raise DomainError(f"no failure label for sensor {seq.sensor_id!r}")
        t_fail = by_sensor[seq.sensor_id]
        counts.append(int(np.sum(seq.times <= t_fail)))
    return counts


def event_stats(seqs, labels) -> EventStats:
    """CV of counts at failure plus pooled accumulation-vs-TTF correlations.

    The accumulated metric is evaluated at each sensor's own event times and
    paired with (failure time - event time); pairs are pooled over sensors
    before computing Pearson and Spearman correlations.
    """
    if len(seqs) < 3:
        raise DomainError("need at least 3 sensors")
    counts = np.asarray(counts_at_failure(seqs, labels), dtype=float)
    mean = float(np.mean(counts))
    if mean == 0:
        raise StatsError("cv undefined: mean count at failure is 0")
    cv = float(np.std(counts, ddof=1) / mean)

    by_sensor = {lab.sensor_id: lab.time for lab in labels}
    acc, ttf = [], []
    for seq in seqs:
        t_fail = by_sensor[seq.sensor_id]
        for i, e in enumerate(seq.events):
            acc.append(i + 1)
            ttf.append(t_fail - e.time)
    pear = float(stats.pearsonr(acc, ttf).statistic) if len(acc) > 1 else float("nan")
    spear = float(stats.spearmanr(acc, ttf).statistic) if len(acc) > 1 else float("nan")
    return EventStats(mean, cv, pear, spear)


# ---------------------------------------------------------------------------
# Parameter calibration


def _cv_of_counts(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    mean = counts.mean()
    if mean == 0:
        return float("inf")
    return float(np.std(counts, ddof=1) / mean)


def grid_search_params(grid, calibration, kind: str):
    """Pick the extraction parameters minimizing the CV of counts at failure.

    ``calibration`` is a list of (SensorRecord, FailureLabel) pairs. Ties go
    to the point with fewer mean events, then to the smaller parameter tuple.
    Returns (best params, list of (params, cv) over the grid).
    """
    if not grid:
        raise DomainError("empty parameter grid")
    if len(calibration) < 3:
        raise DomainError("need at least 3 calibration sensors")
    surface = []
    scored = []
    for p in grid:
        counts = []
        for record, label in calibration:
            seq = extract_events(record, kind, p)
            counts.append(int(np.sum(seq.times <= label.time)))
        cv = _cv_of_counts(counts)
        surface.append((p, cv))
        scored.append((cv, float(np.mean(counts)), p.astuple(), p))
    scored.sort(key=lambda s: (s[0], s[1], s[2]))
    return scored[0][3], surface


def make_param_grid(kind: str, axes: dict):
    """Cartesian parameter grid from per-field value lists.

    For hybrid, only the environment fields vary; the corrosion part stays
    fixed at the shipped defaults, matching how the hybrid search is run.
    """
    if kind == "corrosion":
        keys = ["window_len", "quantile", "local_radius"]
        cls = CorrosionEventParams
    elif kind == "environment":
        keys = ["rh_thresh", "cond_thresh", "time_of_wetness_min", "contaminant_time_min"]
        cls = EnvironmentEventParams
    elif kind == "hybrid":
        keys = ["rh_thresh", "cond_thresh", "time_of_wetness_min", "contaminant_time_min"]
        corro = CorrosionEventParams()
        grids = [axes.get(k, [getattr(EnvironmentEventParams(), k)]) for k in keys]
        return [
            HybridEventParams(corro, EnvironmentEventParams(**dict(zip(keys, combo))))
            for combo in itertools.product(*grids)
        ]
    else:
        raise DomainError(f"unknown event kind {kind!r}")
    grids = [axes.get(k, [getattr(cls(), k)]) for k in keys]
    return [cls(**dict(zip(keys, combo))) for combo in itertools.product(*grids)]
