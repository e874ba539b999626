"""Diurnal-cycle segmentation and exponential-tail fitting.

Each 24 h cycle of the corrosion current ends in a decay back toward
baseline; the decay is modeled as A*exp(-(t-t0)/tau) + B with t0 pinned to
the segment start. The per-cycle tau series feeds change-point detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SensorRecord, TimeSeries, save_json
from .errors import DomainError, FitError

GRID_POINTS = 32
GRID_LO_FRAC = 1.0 / 20.0  # of segment span
GRID_HI_FRAC = 5.0  # of segment span
GOLDEN_TOL = 1e-4  # relative
MIN_TAIL_SAMPLES = 5


@dataclass(frozen=True)
class Segment:
    """One cycle's tail: samples from the window maximum to the window end."""

    cycle_index: int
    timestamps: np.ndarray
    values: np.ndarray
    fit_ok: bool

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.timestamps[0] + self.timestamps[-1])


@dataclass(frozen=True)
class TailFit:
    A: float
    B: float
    t0: float
    tau: float
    rmse: float
    cycle_index: int


@dataclass(frozen=True)
class TauSeries:
    sensor_id: str
    cycle_times: np.ndarray
    taus: np.ndarray  # NaN where fit_ok is False
    fit_ok: np.ndarray
    rmses: np.ndarray

    def __post_init__(self):
        ct = np.asarray(self.cycle_times, dtype=float)
        if len(ct) > 1 and np.any(np.diff(ct) <= 0):
            raise DomainError("cycle times must be strictly increasing")

    def valid(self):
        """(cycle_times, taus) restricted to cycles with a usable fit."""
        ok = np.asarray(self.fit_ok, dtype=bool)
        return np.asarray(self.cycle_times)[ok], np.asarray(self.taus)[ok]


def segment_cycles(current: TimeSeries, period: float = 24.0):
    """Split the series into fixed-length cycles and cut out each tail.

    Cycle k covers [k*period, (k+1)*period) from t=0. The tail runs from the
    cycle's global maximum to the cycle end; tails with fewer than 5 samples
    are flagged unfit.
    """
    t, v = current.timestamps, current.values
    if t[-1] - t[0] < 2 * period:
        raise DomainError("series must span at least two cycle periods")
    n_cycles = max(1, int(math.ceil(t[-1] / period - 1e-12)))
    segments = []
    for k in range(n_cycles):
        lo, hi = k * period, (k + 1) * period
        if k == n_cycles - 1:
            sel = (t >= lo) & (t <= hi)  # last window keeps its right edge
        else:
            sel = (t >= lo) & (t < hi)
        if not np.any(sel):
            continue
        tw, vw = t[sel], v[sel]
        imax = int(np.argmax(vw))
        tail_t, tail_v = tw[imax:], vw[imax:]
        ok = len(tail_t) >= MIN_TAIL_SAMPLES
        segments.append(Segment(k, tail_t, tail_v, ok))
    return segments


def _solve_linear(t, y, tau):
    """Given tau, least-squares (A, B) for y = A*exp(-(t-t0)/tau) + B."""
    e = np.exp(-(t - t[0]) / tau)
    X = np.column_stack([e, np.ones_like(e)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef[0], coef[1], float(np.sqrt(np.mean(resid**2)))


def fit_tail(segment: Segment) -> TailFit:
    """Least-squares (A, B, tau) for one tail segment.

    tau is scanned on a 32-point multiplicative grid spanning span/20 to
    5*span, with (A, B) solved linearly at each tau, then refined by
    golden-section search around the best grid point.
    """
    t = np.asarray(segment.timestamps, dtype=float)
    y = np.asarray(segment.values, dtype=float)
    if len(t) < MIN_TAIL_SAMPLES:
        raise DomainError("tail segment needs at least 5 samples")
    if np.ptp(y) == 0:
        raise FitError("degenerate tail segment: constant values")

    span = t[-1] - t[0]
    grid = np.geomspace(GRID_LO_FRAC * span, GRID_HI_FRAC * span, GRID_POINTS)
    rmses = np.array([_solve_linear(t, y, tau)[2] for tau in grid])
    best = int(np.argmin(rmses))

    # golden-section refinement between the neighbors of the best grid point
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, GRID_POINTS - 1)]
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _solve_linear(t, y, c)[2]
    fd = _solve_linear(t, y, d)[2]
    while (b - a) > GOLDEN_TOL * a:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _solve_linear(t, y, c)[2]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _solve_linear(t, y, d)[2]
    tau = 0.5 * (a + b)
    A, B, rmse = _solve_linear(t, y, tau)
    if rmse > rmses[best]:
        # refinement never worsens the best grid point
        tau = grid[best]
        A, B, rmse = _solve_linear(t, y, tau)
    return TailFit(float(A), float(B), float(t[0]), float(tau), rmse, segment.cycle_index)


def tau_at_grid_boundary(fit: TailFit, segment: Segment, rel: float = 1e-3) -> bool:
    """A tau pinned against the search-grid edge is unreliable."""
    span = segment.timestamps[-1] - segment.timestamps[0]
    lo, hi = GRID_LO_FRAC * span, GRID_HI_FRAC * span
    return fit.tau <= lo * (1 + rel) or fit.tau >= hi * (1 - rel)


def tau_series(sensor: SensorRecord, period: float = 24.0) -> TauSeries:
    """Per-cycle tau for one sensor's corrosion current."""
    segments = segment_cycles(sensor.current, period)
    times, taus, oks, rmses = [], [], [], []
    for seg in segments:
        times.append(seg.midpoint)
        if not seg.fit_ok:
            taus.append(np.nan)
            oks.append(False)
            rmses.append(np.nan)
            continue
        try:
            fit = fit_tail(seg)
        except FitError:
            taus.append(np.nan)
            oks.append(False)
            rmses.append(np.nan)
            continue
        if fit.A <= 0 or tau_at_grid_boundary(fit, seg):
            taus.append(np.nan)
            oks.append(False)
            rmses.append(fit.rmse)
            continue
        taus.append(fit.tau)
        oks.append(True)
        rmses.append(fit.rmse)
    return TauSeries(
        sensor.sensor_id,
        np.array(times),
        np.array(taus),
        np.array(oks, dtype=bool),
        np.array(rmses),
    )


def tau_series_to_json(ts: TauSeries) -> dict:
    cycles = []
    for t, tau, rmse, ok in zip(ts.cycle_times, ts.taus, ts.rmses, ts.fit_ok):
        cycles.append(
            {
                "t": float(t),
                "tau": None if not ok else float(tau),
                "rmse": None if np.isnan(rmse) else float(rmse),
                "ok": bool(ok),
            }
        )
    return {"sensor_id": ts.sensor_id, "cycles": cycles}


def tau_series_from_json(doc: dict) -> TauSeries:
    cycles = doc["cycles"]
    return TauSeries(
        doc["sensor_id"],
        np.array([c["t"] for c in cycles], dtype=float),
        np.array([np.nan if c["tau"] is None else c["tau"] for c in cycles], dtype=float),
        np.array([c["ok"] for c in cycles], dtype=bool),
        np.array([np.nan if c["rmse"] is None else c["rmse"] for c in cycles], dtype=float),
    )


def save_tau_series(ts: TauSeries, path) -> None:
    save_json(tau_series_to_json(ts), path)
