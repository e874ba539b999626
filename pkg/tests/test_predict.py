"""Failure-window construction, VAR baseline, and evaluation tests."""

import math

import numpy as np
import pytest

from coatcast.core import (
    DegradationEvent,
    EventSequence,
    FailureLabel,
    SensorRecord,
    TimeSeries,
)
from coatcast.errors import DomainError, FitError
from coatcast.hawkes import FlatBackground, HawkesModel, HawkesParams, MarkModel
from coatcast.predict import (
    FailureWindow,
    VarBaselineModel,
    evaluate_windows,
    fit_var_baseline,
    forecast_charge_window,
    forecast_current,
    predict_failure_window,
    quantile_targets,
)


def _seq(times, T=100.0):
    events = tuple(DegradationEvent(float(t), 1.0) for t in times)
    return EventSequence("s", "environment", events, float(T))


def _poisson_model(alpha, omega=0.0, beta=1.0):
    return HawkesModel(
        HawkesParams(alpha, omega, beta), FlatBackground(), MarkModel(), "environment"
    )


def _record(current, rh=None, cond=None, sensor_id="s", dt=1.0):
    current = np.asarray(current, dtype=float)
    t = dt * np.arange(len(current))
    channels = {"corrosion_current_uA": TimeSeries(t, current, "corrosion_current_uA")}
    if rh is not None:
        channels["relative_humidity_pct"] = TimeSeries(t, np.asarray(rh, float), "relative_humidity_pct")
    if cond is not None:
        channels["conductance_uS"] = TimeSeries(t, np.asarray(cond, float), "conductance_uS")
    return SensorRecord(sensor_id, "p", "non_chromate", channels, dt)


class TestQuantileTargets:
    def test_empirical_interpolated_quartiles(self):
        t = quantile_targets([10, 20, 30, 40])
        assert t.n_25 == pytest.approx(17.5)
        assert t.n_75 == pytest.approx(32.5)
        assert t.source == "empirical"

    def test_gaussian_hand_values(self):
        t = quantile_targets(mode="gaussian", mean=20.0, cv=0.4)
        assert t.n_25 == pytest.approx(14.60, abs=0.01)
        assert t.n_75 == pytest.approx(25.40, abs=0.01)

    def test_degenerate_counts(self):
        t = quantile_targets([7, 7, 7, 7])
        assert t.n_25 == t.n_75 == 7.0

    def test_too_few_counts(self):
        with pytest.raises(DomainError):
            quantile_targets([5, 6, 7])

    def test_gaussian_needs_positive_mean_cv(self):
        with pytest.raises(DomainError):
            quantile_targets(mode="gaussian", mean=0.0, cv=0.4)
        with pytest.raises(DomainError):
            quantile_targets(mode="gaussian", mean=5.0, cv=-1.0)

    def test_targets_floor_at_one(self):
        t = quantile_targets(mode="gaussian", mean=1.0, cv=1.4)
        assert t.n_25 == 1.0


class TestPredictFailureWindow:
    def test_poisson_hitting_time_analytic(self):
        # near-continuous arrivals: time to n events concentrates at n/alpha
        model = _poisson_model(alpha=100.0)
        targets = quantile_targets(mode="gaussian", mean=300.0, cv=1.0 / (0.6745 * 3))
        # gaussian targets give n_25/n_75 = 300 -/+ 100
        assert targets.n_25 == pytest.approx(200.0)
        assert targets.n_75 == pytest.approx(400.0)
        w = predict_failure_window(_seq([], T=0.0), model, targets, max_horizon=100.0)
        assert not any(w.censored)
        assert w.t_lo == pytest.approx(200.0 / 100.0, rel=0.05)
        assert w.t_hi == pytest.approx(400.0 / 100.0, rel=0.05)

    def test_observed_prefix_pins_lower_bound(self):
        model = _poisson_model(alpha=1.0)
        targets = quantile_targets([2, 2, 6, 6])
        observed = _seq([3.0, 8.0, 15.0], T=20.0)
        w = predict_failure_window(observed, model, targets, max_horizon=500.0)
        assert w.t_lo == 8.0  # time of the ceil(n_25)=2nd observed event
        assert w.t_hi > 15.0

    def test_both_targets_already_observed(self):
        model = _poisson_model(alpha=1.0)
        targets = quantile_targets([1, 1, 3, 3])
        observed = _seq([2.0, 5.0, 9.0], T=20.0)
        w = predict_failure_window(observed, model, targets, max_horizon=500.0)
        assert (w.t_lo, w.t_hi) == (2.0, 9.0)
        assert not any(w.censored)

    def test_dead_model_censors_both_bounds(self):
        model = _poisson_model(alpha=0.0, omega=0.0)
        targets = quantile_targets([3, 4, 5, 6])
        w = predict_failure_window(_seq([], T=0.0), model, targets, max_horizon=300.0)
        assert w.censored == (True, True)
        assert w.t_lo == w.t_hi == 300.0

    def test_bit_reproducible(self):
        model = _poisson_model(alpha=0.5, omega=0.3, beta=0.2)
        targets = quantile_targets([5, 8, 12, 15])
        a = predict_failure_window(_seq([1.0], T=2.0), model, targets, max_horizon=1000.0)
        b = predict_failure_window(_seq([1.0], T=2.0), model, targets, max_horizon=1000.0)
        assert a == b

    def test_upper_bound_monotone_in_target(self):
        model = _poisson_model(alpha=0.5)
        lo = quantile_targets([4, 4, 8, 8])
        hi = quantile_targets([4, 4, 12, 12])
        w1 = predict_failure_window(_seq([], T=0.0), model, lo, max_horizon=1000.0)
        w2 = predict_failure_window(_seq([], T=0.0), model, hi, max_horizon=1000.0)
        assert w2.t_hi >= w1.t_hi

    def test_window_json_round_trip(self):
        w = FailureWindow("s", 10.0, 20.0, "hawkes-iqr", (False, True))
        assert FailureWindow.from_json(w.to_json()) == w


class TestVarBaseline:
    def _planted(self, seed, n=300, lag_coefs=(0.5,), coef_rh=0.1):
        """Noiseless linear system: every design row is exactly consistent."""
        rng = np.random.default_rng(seed)
        rh = rng.uniform(40.0, 80.0, n)
        p = len(lag_coefs)
        cur = np.zeros(n)
        cur[:p] = rh[:p]
        for i in range(p, n):
            cur[i] = sum(c * cur[i - 1 - j] for j, c in enumerate(lag_coefs)) + coef_rh * rh[i]
        return _record(cur, rh=rh, sensor_id=f"s{seed}")

    def test_ols_recovers_planted_coefficients(self):
        recs = [self._planted(s) for s in range(3)]
        model = fit_var_baseline(recs[:2], recs[2:], lags=(1,), exog=("relative_humidity_pct",))
        # columns: intercept, current lag 1, RH now, RH lag 1
        expected = np.array([0.0, 0.5, 0.1, 0.0])
        assert np.allclose(model.coefficients, expected, atol=1e-6)

    def test_validation_mse_selects_planted_lag(self):
        for seed in range(10):
            recs = [
                self._planted(7 * seed + k, lag_coefs=(0.35, 0.25, 0.2)) for k in range(3)
            ]
            model = fit_var_baseline(
                recs[:2], recs[2:], lags=(1, 2, 3), exog=("relative_humidity_pct",)
            )
            assert model.lag_p == 3

    def test_ridge_limit_shrinks_coefficients(self):
        recs = [self._planted(s) for s in range(3)]
        model = fit_var_baseline(
            recs[:2], recs[2:], lags=(1,),
            regs=(("ridge", 1e10),), exog=("relative_humidity_pct",),
        )
        assert np.all(np.abs(model.coefficients[1:]) < 1e-3)

    def test_lasso_zeroes_irrelevant_channel(self):
        rng = np.random.default_rng(0)
        recs = []
        for seed in range(3):
            rec = self._planted(seed)
            cond = rng.uniform(0.0, 10.0, len(rec.current))
            channels = dict(rec.channels)
            channels["conductance_uS"] = TimeSeries(
                rec.current.timestamps, cond, "conductance_uS"
            )
            recs.append(SensorRecord(rec.sensor_id, "p", "non_chromate", channels, 1.0))
        model = fit_var_baseline(
            recs[:2], recs[2:], lags=(1,),
            regs=(("lasso", 0.2),),
            exog=("relative_humidity_pct", "conductance_uS"),
        )
        # columns: intercept, cur lag, RH now, RH lag, cond now, cond lag
        assert np.all(model.coefficients[4:] == 0.0)
        assert abs(model.coefficients[1]) > 0.1

    def test_singular_design_raises(self):
        recs = [self._planted(s) for s in range(3)]
        with pytest.raises(FitError):
            fit_var_baseline(
                recs[:2], recs[2:], lags=(1,),
                exog=("relative_humidity_pct", "relative_humidity_pct"),
            )

    def test_ols_training_mse_no_worse_than_ridge(self):
        recs = [self._planted(s, lag_coefs=(0.5, 0.2)) for s in range(2)]
        from coatcast.predict import _design, _solve_ols, _solve_ridge

        X, y = _design(recs[0], 2, None, ("relative_humidity_pct",))
        coef_ols, _ = _solve_ols(X, y)
        for lam in (0.1, 10.0, 1e4):
            coef_r = _solve_ridge(X, y, lam)
            assert ((y - X @ coef_ols) ** 2).mean() <= ((y - X @ coef_r) ** 2).mean() + 1e-12


class TestChargeForecast:
    def _const_model(self, c, lag=1):
        # coefficient layout: intercept, current lags, exog now + lags
        coef = np.zeros(2 + 2 * lag)
        coef[0] = c
        return VarBaselineModel(lag, coef, "ols", 0.0, ("relative_humidity_pct",))

    def _future_exog(self, t):
        return {
            "relative_humidity_pct": TimeSeries(t, np.full_like(t, 50.0), "relative_humidity_pct")
        }

    def test_constant_forecast_crossing_analytic(self):
        obs = _record(np.full(11, 2.0), rh=np.full(11, 50.0))  # charge 2t, ends at 20
        fut_t = np.arange(11.0, 61.0)
        w = forecast_charge_window(obs, self._const_model(2.0), self._future_exog(fut_t), (30.0, 60.0))
        assert not any(w.censored)
        assert w.t_lo == pytest.approx(15.0, abs=1.0)
        assert w.t_hi == pytest.approx(30.0, abs=1.0)

    def test_targets_below_observed_charge(self):
        obs = _record(np.full(11, 2.0), rh=np.full(11, 50.0))
        fut_t = np.arange(11.0, 21.0)
        w = forecast_charge_window(obs, self._const_model(2.0), self._future_exog(fut_t), (4.0, 10.0))
        assert w.t_lo == pytest.approx(2.0)
        assert w.t_hi == pytest.approx(5.0)

    def test_unreachable_target_censored(self):
        obs = _record(np.full(11, 2.0), rh=np.full(11, 50.0))
        fut_t = np.arange(11.0, 21.0)
        w = forecast_charge_window(obs, self._const_model(2.0), self._future_exog(fut_t), (4.0, 1e9))
        assert w.censored == (False, True)
        assert w.t_hi == fut_t[-1]

    def test_ar_rollout_matches_closed_form(self):
        c0 = 3.0
        coef = np.zeros(4)
        coef[1] = 0.8  # pure AR(1) decay, exogenous coefficients zero
        model = VarBaselineModel(1, coef, "ols", 0.0, ("relative_humidity_pct",))
        obs = _record(np.full(5, c0), rh=np.full(5, 50.0))
        fut_t = np.arange(5.0, 25.0)
        fc = forecast_current(obs, model, self._future_exog(fut_t))
        expected = c0 * 0.8 ** np.arange(1, len(fut_t) + 1)
        assert np.allclose(fc.values, expected, atol=1e-9)

    def test_short_history_rejected(self):
        obs = _record(np.full(2, 1.0), rh=np.full(2, 50.0))
        model = VarBaselineModel(3, np.zeros(8), "ols", 0.0, ("relative_humidity_pct",))
        with pytest.raises(DomainError):
            forecast_current(obs, model, self._future_exog(np.arange(2.0, 10.0)))


class TestEvaluateWindows:
    def _fixture(self):
        windows = [
            FailureWindow("a", 10.0, 20.0, "m"),
            FailureWindow("b", 10.0, 20.0, "m"),
            FailureWindow("c", 30.0, 60.0, "m"),
            FailureWindow("d", 10.0, 100.0, "m", (False, True)),
            FailureWindow("e", 0.0, 10.0, "m"),
        ]
        labels = [
            FailureLabel("a", 15.0, "visual"),   # inside
            FailureLabel("b", 25.0, "visual"),   # outside by 5
            FailureLabel("c", 10.0, "visual"),   # outside by 20
            FailureLabel("d", 50.0, "visual"),   # inside, censored width excluded
            FailureLabel("e", 10.0, "visual"),   # on the boundary counts inside
        ]
        return windows, labels

    def test_hand_computed_fixture(self):
        windows, labels = self._fixture()
        out = evaluate_windows(windows, labels)
        assert out["mean_width"] == pytest.approx((10.0 + 10.0 + 30.0 + 10.0) / 4)
        assert out["mean_error"] == pytest.approx((5.0 + 20.0) / 2)
        assert out["n_inside"] == 3

    def test_all_inside_zero_error(self):
        windows = [FailureWindow("a", 0.0, 10.0, "m")]
        out = evaluate_windows(windows, [FailureLabel("a", 5.0, "visual")])
        assert out["mean_error"] == 0.0
        assert out["n_inside"] == 1

    def test_width_translation_invariant(self):
        w1 = [FailureWindow("a", 10.0, 25.0, "m")]
        w2 = [FailureWindow("a", 110.0, 125.0, "m")]
        lab1 = [FailureLabel("a", 12.0, "visual")]
        lab2 = [FailureLabel("a", 112.0, "visual")]
        assert evaluate_windows(w1, lab1)["mean_width"] == evaluate_windows(w2, lab2)["mean_width"]

    def test_no_windows_raises(self):
        with pytest.raises(DomainError):
            evaluate_windows([], [])

    def test_missing_label_raises(self):
        with pytest.raises(DomainError):
            evaluate_windows([FailureWindow("a", 0.0, 1.0, "m")], [FailureLabel("b", 0.5, "visual")])
