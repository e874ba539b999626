"""Sequential change-point detection on the tail time constant.

The detector is a window-limited CUSUM on the standardized tau series: a
positive shift in tau marks the onset of blistering, and the first threshold
exceedance becomes the data-driven failure label. Threshold calibration
picks the value that best reconciles data-driven labels with externally
supplied visual labels across two sensor groups.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .core import FailureLabel
from .defaults import CPD_THRESHOLD, CPD_WINDOW
from .errors import CalibrationError, DomainError
from .tailfit import TauSeries


@dataclass(frozen=True)
class CusumState:
    """Forward-evolving CUSUM statistic with detection bookkeeping."""

    W: float = 0.0
    index: int = 0
    threshold: float = CPD_THRESHOLD
    window: tuple = ()
    detected_at: float | None = None


def cusum_step(state: CusumState, llr: float, at_time: float | None = None) -> CusumState:
    """One CUSUM update: W' = max(W, 0) + llr.

    Detection is recorded the first time W' exceeds the threshold; a state
    that already detected is carried forward unchanged except for W.
    """
    w_new = max(state.W, 0.0) + llr
    detected = state.detected_at
    if detected is None and w_new > state.threshold:
        detected = at_time if at_time is not None else float(state.index)
    return replace(state, W=w_new, index=state.index + 1, detected_at=detected)


def _wl_increments(z: np.ndarray, w: int) -> np.ndarray:
    """Window-limited log-likelihood-ratio increments for standardized z.

    The post-change mean estimate for step i is the mean of the previous w
    observations z[i-w:i], clamped at 0 since the change of interest is a
    positive shift; the increment is zbar*(z_i - zbar/2). Updates begin at
    i = 2w, once the estimation window no longer overlaps the first-w
    standardization baseline (an overlapping window feeds the baseline's own
    sampling error back into the shift estimate and inflates false alarms).
    """
    incs = np.zeros(len(z))
    for i in range(2 * w, len(z)):
        zbar = max(float(np.mean(z[i - w : i])), 0.0)
        incs[i] = zbar * (z[i] - zbar / 2.0)
    return incs


def wlcusum_tau(
    taus: TauSeries,
    w: int = CPD_WINDOW,
    b: float = CPD_THRESHOLD,
) -> FailureLabel | None:
    """Run the window-limited CUSUM over one sensor's tau series.

    Tau values are standardized by the mean/std of the first w valid fits
    (the pre-change baseline); the statistic only updates at valid-fit
    cycles. Returns a data-driven FailureLabel at the first exceedance of b,
    or None if the statistic never exceeds b.
    """
    if w < 2:
        raise DomainError("window length must be at least 2")
    times, vals = taus.valid()
    if len(vals) < w:
        raise DomainError(f"need at least w={w} valid fits, got {len(vals)}")

    base = vals[:w]
    mu = float(np.mean(base))
    sd = float(np.std(base, ddof=1))
    if sd == 0:
        sd = 1.0  # flat baseline: any change shows up in raw units
    z = (vals - mu) / sd

    incs = _wl_increments(z, w)
    state = CusumState(threshold=b)
    for i in range(len(z)):
        state = cusum_step(state, incs[i], at_time=times[i])
        if state.detected_at is not None:
            return FailureLabel(taus.sensor_id, float(state.detected_at), "data_driven")
    return None


def calibrate_threshold(
    tau_sets: dict,
    visual_labels: list,
    b_grid,
    w: int = CPD_WINDOW,
):
    """Pick the detection threshold that best aligns the two sensor groups.

    For each candidate b, the per-sensor difference (visual failure time
    minus data-driven failure time) is computed in each group; a two-sample
    Welch T-test compares the two difference distributions, and the b with
    the largest p-value wins (ties broken by smaller b). Sensors without a
    detection at some b are excluded at that b; a b where either group has
    fewer than 2 detected sensors is skipped.

    Returns (b_hat, {b: p_value}).
    """
    if len(tau_sets) != 2:
        raise DomainError("calibration expects exactly two groups")
    by_sensor = {lab.sensor_id: lab.time for lab in visual_labels}
    groups = list(tau_sets)

    p_values = {}
    for b in b_grid:
        diffs = {g: [] for g in groups}
        for g in groups:
            for taus in tau_sets[g]:
                if taus.sensor_id not in by_sensor:
                    continue
                det = wlcusum_tau(taus, w=w, b=b)
                if det is None:
                    continue
                diffs[g].append(by_sensor[taus.sensor_id] - det.time)
        if any(len(diffs[g]) < 2 for g in groups):
            continue
        a, c = np.asarray(diffs[groups[0]]), np.asarray(diffs[groups[1]])
        if np.array_equal(np.sort(a), np.sort(c)):
            p = 1.0  # identical samples: indistinguishable by construction
        else:
            p = float(stats.ttest_ind(a, c, equal_var=False).pvalue)
            if np.isnan(p):
                p = 1.0  # zero-variance equal means
        p_values[float(b)] = p

    if not p_values:
        raise CalibrationError("no threshold had >= 2 detections in both groups")
    best_p = max(p_values.values())
    b_hat = min(b for b, p in p_values.items() if p == best_p)
    return b_hat, p_values
