"""Failure-window construction and linear autoregressive baselines.

Event-based windows come from the trajectory-averaged hitting times of the
0.25/0.75 quantiles of the events-at-failure distribution; the baseline
forecasts corrosion current with a lagged linear model fed true exogenous
conditions and converts accumulated-charge crossings into windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import defaults
from .core import EventSequence, SensorRecord, TimeSeries, accumulated_charge
from .errors import DomainError, FitError
from .hawkes import HawkesModel, sample_trajectory

Z_QUARTILE = 0.6745  # standard normal 0.75 quantile


@dataclass(frozen=True)
class FailureWindow:
    sensor_id: str
    t_lo: float
    t_hi: float
    method: str
    censored: tuple = (False, False)

    def __post_init__(self):
        if not any(self.censored) and self.t_lo > self.t_hi:
            raise DomainError("t_lo must not exceed t_hi")

    def to_json(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "t_lo": self.t_lo,
            "t_hi": self.t_hi,
            "censored": list(self.censored),
            "method": self.method,
        }

    @classmethod
    def from_json(cls, doc) -> "FailureWindow":
        return cls(doc["sensor_id"], doc["t_lo"], doc["t_hi"], doc["method"], tuple(doc["censored"]))


@dataclass(frozen=True)
class QuantileTargets:
    coating_class: str
    n_25: float
    n_75: float
    source: str

    def __post_init__(self):
        if not (0 < self.n_25 <= self.n_75):
            raise DomainError("require 0 < n_25 <= n_75")


@dataclass(frozen=True)
class VarBaselineModel:
    lag_p: int
    coefficients: np.ndarray  # [intercept, current lags 1..p, then per-exog: now + lags 1..p]
    regularization: str
    reg_strength: float
    exog_channels: tuple

    def __post_init__(self):
        if self.lag_p < 1:
            raise DomainError("lag_p must be at least 1")


# ---------------------------------------------------------------------------
# Quantile targets


def quantile_targets(counts=None, mode: str = "empirical", coating_class: str = "non_chromate",
                     mean: float | None = None, cv: float | None = None) -> QuantileTargets:
    """IQR event-count targets, empirical or Gaussian-parametric.

    Empirical mode takes linear-interpolated sample quartiles of ``counts``;
    gaussian mode uses mean*(1 +- cv*z_0.75), floored at 1.
    """
    if mode == "empirical":
        if counts is None or len(counts) < 4:
            raise DomainError("empirical targets need at least 4 counts")
        n25 = float(np.quantile(counts, defaults.QUANTILE_LO))
        n75 = float(np.quantile(counts, defaults.QUANTILE_HI))
    elif mode == "gaussian":
        if mean is None or cv is None or mean <= 0 or cv <= 0:
            raise DomainError("gaussian targets need positive mean and cv")
        n25 = mean * (1.0 - cv * Z_QUARTILE)
        n75 = mean * (1.0 + cv * Z_QUARTILE)
    else:
        raise DomainError(f"unknown quantile mode {mode!r}")
    n25 = max(n25, 1.0)
    n75 = max(n75, 1.0)
    return QuantileTargets(coating_class, n25, n75, mode)


# ---------------------------------------------------------------------------
# Event-based windows


def _hitting_time(observed: EventSequence, sampled: EventSequence, target: int):
    """First time cumulative (observed + sampled-after-observed) count hits target."""
    times = sampled.times  # sampled trajectories include the observed prefix
    if len(times) >= target:
        return float(times[target - 1])
    return None


def predict_failure_window(
    observed: EventSequence,
    model: HawkesModel,
    targets: QuantileTargets,
    n_traj: int = defaults.N_TRAJ,
    max_horizon: float = 2000.0,
    seed_base: int = 0,
) -> FailureWindow:
    """Trajectory-averaged IQR hitting-time window for one sensor.

    Seeds run 0..n_traj-1 (offset by seed_base); a bound reached by fewer
    than half the trajectories within max_horizon is censored there. Bounds
    already reached by the observed prefix are exact, with no sampling.
    """
    n_lo = int(math.ceil(targets.n_25))
    n_hi = int(math.ceil(targets.n_75))
    n_obs = len(observed)
    if n_obs >= n_hi:
        # both quantiles already observed: degenerate window at observed times
        return FailureWindow(
            observed.sensor_id,
            float(observed.times[n_lo - 1]),
            float(observed.times[n_hi - 1]),
            "hawkes-iqr-degenerate",
        )
    if max_horizon <= (observed.times[-1] if n_obs else 0.0):
        raise DomainError("max_horizon must exceed the observed history")

    need_sampling = n_obs < n_lo or n_obs < n_hi
    bounds = []
    censored = []
    hit_lists = {n_lo: [], n_hi: []}
    if need_sampling:
        for k in range(n_traj):
            traj = sample_trajectory(observed, model, max_horizon, seed=seed_base + k)
            for target in (n_lo, n_hi):
                ht = _hitting_time(observed, traj, target)
                if ht is not None:
                    hit_lists[target].append(ht)
    for target in (n_lo, n_hi):
        if n_obs >= target:
            bounds.append(float(observed.times[target - 1]))
            censored.append(False)
        elif len(hit_lists[target]) * 2 >= n_traj:
            bounds.append(float(np.mean(hit_lists[target])))
            censored.append(False)
        else:
            bounds.append(float(max_horizon))
            censored.append(True)
    if not any(censored):
        # different trajectory subsets can reach the two targets; keep ordering
        bounds[1] = max(bounds[1], bounds[0])
    return FailureWindow(
        observed.sensor_id, bounds[0], bounds[1], "hawkes-iqr", tuple(censored)
    )


# ---------------------------------------------------------------------------
# Linear baseline

EXOG_CHANNELS = ("temperature_C", "relative_humidity_pct", "conductance_uS")
TRAIN_HOURS = 336.0  # first two weeks


def _design(record: SensorRecord, lag: int, upto: float | None, exog):
    """Lagged design matrix: current lags 1..p plus exogenous now and lags."""
    cur = record.current
    sel = np.ones(len(cur), dtype=bool) if upto is None else cur.timestamps <= upto
    y_all = cur.values[sel]
    cols = [np.ones(len(y_all))]
    for j in range(1, lag + 1):
        cols.append(np.roll(y_all, j))
    for ch in exog:
        x = record.channel(ch).values[sel]
        cols.append(x)
        for j in range(1, lag + 1):
            cols.append(np.roll(x, j))
    X = np.column_stack(cols)[lag:]
    y = y_all[lag:]
    return X, y


def _solve_ols(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    # flag a numerically singular design: OLS answer is not unique
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise FitError("singular design under OLS; try ridge")
    return coef, resid


def _solve_ridge(X, y, lam):
    n, d = X.shape
    P = lam * np.eye(d)
    P[0, 0] = 0.0  # intercept unpenalized
    coef = np.linalg.solve(X.T @ X + P, X.T @ y)
    return coef


def _solve_lasso(X, y, lam, tol=1e-8, max_iter=100000):
    """Coordinate descent for (1/2n)||y - Xw||^2 + lam*||w_1:||_1.

    Intercept (column 0) is unpenalized.
    """
    n, d = X.shape
    w = np.zeros(d)
    col_sq = (X**2).sum(axis=0) / n
    r = y.copy()
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(d):
            if col_sq[j] == 0:
                continue
            rho = (X[:, j] @ r) / n + col_sq[j] * w[j]
            if j == 0:
                w_new = rho / col_sq[j]
            else:
                w_new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            delta = w_new - w[j]
            if delta != 0.0:
                r -= delta * X[:, j]
                w[j] = w_new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return w


def fit_var_baseline(train, val, lags=(1, 2, 3), regs=(("ols", 0.0),), exog=EXOG_CHANNELS):
    """Select (lag, regularization) by one-step validation MSE.

    The regression of current_t on its own lags plus current-and-lagged
    exogenous channels is fit on the first two weeks of each training
    sensor, pooled. ``regs`` is a list of (kind, strength) pairs with kind
    in {ols, ridge, lasso}.
    """
    best = None
    for lag in lags:
        Xs, ys = [], []
        for rec in train:
            X, y = _design(rec, lag, TRAIN_HOURS, exog)
            Xs.append(X)
            ys.append(y)
        X = np.vstack(Xs)
        y = np.concatenate(ys)
        for kind, strength in regs:
            if kind == "ols":
                coef, _ = _solve_ols(X, y)
            elif kind == "ridge":
                coef = _solve_ridge(X, y, strength)
            elif kind == "lasso":
                coef = _solve_lasso(X, y, strength)
            else:
                raise DomainError(f"unknown regularization {kind!r}")
            mse = 0.0
            n_val = 0
            for rec in val:
                Xv, yv = _design(rec, lag, None, exog)
                resid = yv - Xv @ coef
                mse += float((resid**2).sum())
                n_val += len(yv)
            mse /= max(n_val, 1)
            cand = VarBaselineModel(lag, coef, kind, strength, tuple(exog))
            if best is None or mse < best[0]:
                best = (mse, cand)
    return best[1]


def forecast_current(
    observed: SensorRecord,
    model: VarBaselineModel,
    future_exogenous: dict,
) -> TimeSeries:
    """Roll the model forward feeding back its own (clamped) predictions.

    ``future_exogenous`` maps channel name -> TimeSeries covering the
    forecast horizon on the same grid spacing as the observations.
    """
    cur = observed.current
    p = model.lag_p
    if len(cur) < p:
        raise DomainError("observed history shorter than the model lag")
    grid = future_exogenous[model.exog_channels[0]].timestamps
    exog_vals = {ch: future_exogenous[ch].values for ch in model.exog_channels}
    hist = list(cur.values[-p:])
    preds = []
    for i in range(len(grid)):
        row = [1.0]
        row.extend(hist[-1 : -p - 1 : -1])  # lags 1..p, most recent first
        for ch in model.exog_channels:
            row.append(exog_vals[ch][i])
            for j in range(1, p + 1):
                k = i - j
                if k >= 0:
                    row.append(exog_vals[ch][k])
                else:
                    row.append(float(observed.channel(ch).values[k]))
        y_hat = float(np.asarray(row) @ model.coefficients)
        y_hat = max(y_hat, 0.0)  # physical current is non-negative
        preds.append(y_hat)
        hist.append(y_hat)
    return TimeSeries(grid, np.array(preds), "corrosion_current_uA")


def _crossing_time(t, cumcharge, target):
    """Linear-interpolated first crossing of the accumulated-charge target."""
    idx = np.searchsorted(cumcharge, target, side="left")
    if idx >= len(cumcharge):
        return None
    if idx == 0 or cumcharge[idx] == target:
        return float(t[idx])
    c0, c1 = cumcharge[idx - 1], cumcharge[idx]
    frac = (target - c0) / (c1 - c0) if c1 > c0 else 0.0
    return float(t[idx - 1] + frac * (t[idx] - t[idx - 1]))


def forecast_charge_window(
    observed: SensorRecord,
    model: VarBaselineModel,
    future_exogenous: dict,
    charge_targets: tuple,
    method: str | None = None,
) -> FailureWindow:
    """Charge-crossing window from the rolled-out current forecast."""
    q25, q75 = charge_targets
    cur = observed.current
    obs_t = cur.timestamps
    obs_charge = np.array([accumulated_charge(cur, t) for t in obs_t])

    fc = forecast_current(observed, model, future_exogenous)
    # accumulate forecast charge continuing from the observed total
    fut_t = np.concatenate([[obs_t[-1]], fc.timestamps])
    fut_v = np.concatenate([[cur.values[-1]], fc.values])
    fut_charge = obs_charge[-1] + np.concatenate(
        [[0.0], np.cumsum(0.5 * (fut_v[1:] + fut_v[:-1]) * np.diff(fut_t))]
    )
    all_t = np.concatenate([obs_t, fc.timestamps])
    all_charge = np.concatenate([obs_charge, fut_charge[1:]])

    bounds, censored = [], []
    for target in (q25, q75):
        ct = _crossing_time(all_t, all_charge, target)
        if ct is None:
            bounds.append(float(all_t[-1]))
            censored.append(True)
        else:
            bounds.append(ct)
            censored.append(False)
    return FailureWindow(
        observed.sensor_id,
        bounds[0],
        bounds[1],
        method or f"var-{model.regularization}",
        tuple(censored),
    )


# ---------------------------------------------------------------------------
# Evaluation


def evaluate_windows(windows, labels) -> dict:
    """Mean width, mean outside-window error, and inside count.

    Censored windows are excluded from the width average but contribute to
    the error using the censored bound. Labels inside their window add to
    n_inside and are excluded from the error average.
    """
    if not windows:
        raise DomainError("no windows to evaluate")
    by_sensor = {lab.sensor_id: lab.time for lab in labels}
    widths, errors = [], []
    n_inside = 0
    for w in windows:
        if w.sensor_id not in by_sensor:
            raise DomainError(f"no label for sensor {w.sensor_id!r}")
        t_fail = by_sensor[w.sensor_id]
        if not any(w.censored):
            widths.append(w.t_hi - w.t_lo)
        if w.t_lo <= t_fail <= w.t_hi:
            n_inside += 1
        else:
            errors.append(min(abs(t_fail - w.t_lo), abs(t_fail - w.t_hi)))
    return {
        "mean_width": float(np.mean(widths)) if widths else float("nan"),
        "mean_error": float(np.mean(errors)) if errors else 0.0,
        "n_inside": n_inside,
    }
