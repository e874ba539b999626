"""Marked self-exciting point process for degradation events.

Ground intensity: lambda_g(t) = alpha*mu(t) + omega * sum_i m_i * beta *
exp(-beta*(t - t_i)) over history events, where mu is a periodic (daily)
KDE normalized to mean one over the day. Marks are modeled by a Gaussian
whose mean and variance track all marks seen so far. Fitting alternates
stochastic gradient steps on (alpha, omega) with a line search on beta;
forecasting uses Ogata thinning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.cluster import DBSCAN

from . import defaults
from .core import DegradationEvent, EventSequence, save_json
from .errors import DomainError, FitError, InitError, LikelihoodError, SampleError

_MU_GRID = 4096  # evaluation grid per period for normalization / max bound


@dataclass(frozen=True)
class HawkesParams:
    alpha: float  # background weight, events/hour
    omega: float  # excitation weight, dimensionless
    beta: float  # excitation decay, 1/hour

    def __post_init__(self):
        if self.alpha < 0 or self.omega < 0 or not self.beta > 0:
            raise DomainError("require alpha >= 0, omega >= 0, beta > 0")


class PeriodicKDE:
    """Wrapped-Gaussian KDE over the daily clock, normalized to mean one."""

    def __init__(self, support_points, bandwidth, period=defaults.KDE_PERIOD):
        pts = np.asarray(support_points, dtype=float)
        if len(pts) == 0:
            raise FitError("periodic KDE needs at least one event")
        if bandwidth <= 0:
            raise DomainError("bandwidth must be positive")
        self.period = float(period)
        self.bandwidth = float(bandwidth)
        self.support_points = np.sort(np.mod(pts, self.period))
        grid = np.linspace(0.0, self.period, _MU_GRID, endpoint=False)
        raw = self._raw(grid)
        self._norm = float(np.mean(raw))
        if self._norm <= 0:
            raise FitError("degenerate KDE normalization")
        self._mu_max = float(raw.max() / self._norm)

    def _raw(self, t):
        """Unnormalized wrapped-kernel density at clock times t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        h = self.bandwidth
        total = np.zeros_like(t)
        for j in range(-3, 4):  # wrap kernels over +-3 adjacent periods
            d = t[:, None] - (self.support_points[None, :] + j * self.period)
            total += np.exp(-0.5 * (d / h) ** 2).sum(axis=1)
        return total / (len(self.support_points) * h * math.sqrt(2 * math.pi))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        mu = self._raw(np.mod(t, self.period)) / self._norm
        return float(mu[0]) if scalar else mu

    @property
    def mu_max(self) -> float:
        return self._mu_max

    def to_json(self) -> dict:
        return {
            "period": self.period,
            "bandwidth": self.bandwidth,
            "points": self.support_points.tolist(),
        }

    @classmethod
    def from_json(cls, doc):
        if doc["bandwidth"] is None or not len(doc["points"]):
            return FlatBackground(doc["period"])
        return cls(doc["points"], doc["bandwidth"], doc["period"])


class FlatBackground:
    """Exactly-constant mu(t) = 1; the homogeneous-Poisson special case."""

    def __init__(self, period=defaults.KDE_PERIOD):
        self.period = float(period)
        self.bandwidth = float("inf")
        self.support_points = np.array([])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 if t.ndim == 0 else np.ones_like(t)

    @property
    def mu_max(self) -> float:
        return 1.0

    def to_json(self) -> dict:
        return {"period": self.period, "bandwidth": None, "points": []}


@dataclass(frozen=True)
class MarkModel:
    """Running Gaussian over marks seen so far.

    With fewer than two prior marks the density falls back to prior_mean /
    prior_sigma (one prior mark replaces the mean only).
    """

    prior_sigma: float = defaults.MARK_PRIOR_SIGMA
    prior_mean: float = 0.0

    def __post_init__(self):
        if not self.prior_sigma > 0:
            raise DomainError("prior_sigma must be positive")

    def stats_at(self, t, history: EventSequence):
        """(mean, variance) of marks with t_i < t."""
        marks = history.marks[history.times < t]
        if len(marks) == 0:
            return self.prior_mean, self.prior_sigma**2
        if len(marks) == 1:
            return float(marks[0]), self.prior_sigma**2
        return float(np.mean(marks)), float(np.var(marks, ddof=1))


@dataclass(frozen=True)
class HawkesModel:
    params: HawkesParams
    background: PeriodicKDE
    mark_model: MarkModel
    event_type: str


# ---------------------------------------------------------------------------
# Background


def fit_background(train_seqs, bandwidth: float = defaults.KDE_BANDWIDTH) -> PeriodicKDE:
    """Daily-clock KDE pooled over all training sequences' event times."""
    times = np.concatenate([seq.times for seq in train_seqs]) if train_seqs else np.array([])
    if len(times) == 0:
        raise FitError("no events to fit a background from")
    return PeriodicKDE(times, bandwidth)


# ---------------------------------------------------------------------------
# Intensity and likelihood


def _excitation(t, times, marks, beta):
    """sum_i m_i * beta * exp(-beta*(t - t_i)) over events with t_i < t.

    Vectorized over an array of query times t.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if len(times) == 0:
        return np.zeros_like(t)
    d = t[:, None] - times[None, :]
    k = np.where(d > 0, np.exp(-beta * np.maximum(d, 0.0)), 0.0)
    return beta * (k * marks[None, :]).sum(axis=1)


def ground_intensity(t: float, history: EventSequence, model: HawkesModel) -> float:
    """Eq.-style ground intensity alpha*mu(t) + excitation at time t."""
    times, marks = history.times, history.marks
    if len(times) and times[-1] >= t:
        raise DomainError("history events must all precede t")
    p = model.params
    exc = float(_excitation(t, times, marks, p.beta)[0])
    return p.alpha * model.background(t) + p.omega * exc


def mark_log_density(m: float, t: float, history: EventSequence, model: HawkesModel) -> float:
    """Gaussian log-density of mark m under the running mark statistics."""
    mean, var = model.mark_model.stats_at(t, history)
    return -0.5 * math.log(2 * math.pi * var) - 0.5 * (m - mean) ** 2 / var


def _midpoint_grid(T: float, dt: float = defaults.LL_DT, breaks=()):
    """Midpoints and widths of the [0, T] integration cells.

    Cells are additionally split at the given break points (event times,
    where the excitation jumps); the midpoint rule is only second-order
    accurate when the integrand is smooth within each cell.
    """
    n_full = int(math.floor(T / dt + 1e-12))
    edges = np.arange(n_full + 1) * dt
    if T - edges[-1] > 1e-12:
        edges = np.append(edges, T)
    breaks = np.asarray(breaks, dtype=float)
    if len(breaks):
        inner = breaks[(breaks > 0.0) & (breaks < T)]
        edges = np.unique(np.concatenate([edges, inner]))
    widths = np.diff(edges)
    keep = widths > 0
    widths = widths[keep]
    mids = edges[:-1][keep] + widths / 2
    return mids, widths


def _intensity_pieces(seq: EventSequence, model: HawkesModel, dt=defaults.LL_DT):
    """Background/excitation values at events and on the integration grid.

    Returns (mu_ev, exc_ev, mu_grid, exc_grid, widths); excitations exclude
    omega so the same pieces serve value and gradient evaluation.
    """
    times, marks = seq.times, seq.marks
    beta = model.params.beta
    mu_ev = model.background(times) if len(times) else np.array([])
    exc_ev = _excitation(times, times, marks, beta) if len(times) else np.array([])
    mids, widths = _midpoint_grid(seq.horizon_T, dt, breaks=times)
    mu_grid = model.background(mids)
    exc_grid = _excitation(mids, times, marks, beta)
    return mu_ev, exc_ev, mu_grid, exc_grid, widths


def log_likelihood(seq: EventSequence, model: HawkesModel, dt: float = defaults.LL_DT) -> float:
    """Ground-process log-likelihood with the midpoint-rule integral."""
    p = model.params
    mu_ev, exc_ev, mu_grid, exc_grid, widths = _intensity_pieces(seq, model, dt)
    lam_ev = p.alpha * mu_ev + p.omega * exc_ev
    if len(lam_ev) and lam_ev.min() <= 0:
        raise LikelihoodError("zero intensity at an observed event")
    integral = float(((p.alpha * mu_grid + p.omega * exc_grid) * widths).sum())
    return float(np.log(lam_ev).sum()) - integral


def ll_gradients(seq: EventSequence, model: HawkesModel, dt: float = defaults.LL_DT):
    """Analytic (d ell/d alpha, d ell/d omega) for one sequence."""
    p = model.params
    mu_ev, exc_ev, mu_grid, exc_grid, widths = _intensity_pieces(seq, model, dt)
    lam_ev = p.alpha * mu_ev + p.omega * exc_ev
    if len(lam_ev) and lam_ev.min() <= 0:
        raise LikelihoodError("zero intensity at an observed event")
    d_alpha = float((mu_ev / lam_ev).sum()) - float((mu_grid * widths).sum())
    d_omega = float((exc_ev / lam_ev).sum()) - float((exc_grid * widths).sum())
    return d_alpha, d_omega


def compensator(t: float, seq: EventSequence, model: HawkesModel, dt: float = 0.01) -> float:
    """Fine-grid integrated intensity over [0, t] given seq's events before t."""
    mids, widths = _midpoint_grid(t, dt, breaks=seq.times)
    p = model.params
    lam = p.alpha * model.background(mids) + p.omega * _excitation(
        mids, seq.times, seq.marks, p.beta
    )
    return float((lam * widths).sum())


# ---------------------------------------------------------------------------
# Initialization


def init_params(train_seqs) -> HawkesParams:
    """DBSCAN-based starting point for the MLE.

    eps is the pooled median inter-event gap and min_pts 2; alpha0 is the
    overall event rate, omega0 the ratio of clusters to events, beta0 the
    reciprocal mean cluster duration (falling back to the median gap when no
    cluster has positive duration).
    """
    all_gaps = []
    n_events = 0
    total_T = 0.0
    for seq in train_seqs:
        n_events += len(seq)
        total_T += seq.horizon_T
        if len(seq) > 1:
            all_gaps.extend(np.diff(seq.times))
    if n_events < 2:
        raise InitError("need at least 2 events to initialize")
    med_gap = float(np.median(all_gaps)) if all_gaps else 1.0
    if med_gap <= 0:
        med_gap = 1.0

    n_clusters = 0
    durations = []
    for seq in train_seqs:
        if len(seq) == 0:
            continue
        labels = DBSCAN(eps=med_gap, min_samples=2).fit_predict(seq.times.reshape(-1, 1))
        for lab in set(labels) - {-1}:
            member_t = seq.times[labels == lab]
            n_clusters += 1
            dur = float(member_t.max() - member_t.min())
            if dur > 0:
                durations.append(dur)

    alpha0 = n_events / total_T
    omega0 = n_clusters / n_events if n_clusters else 1.0 / n_events
    beta0 = 1.0 / float(np.mean(durations)) if durations else 1.0 / med_gap
    return HawkesParams(alpha0, omega0, beta0)


# ---------------------------------------------------------------------------
# MLE


def _nll_total(seqs, model, dt=defaults.LL_DT):
    total = 0.0
    for seq in seqs:
        try:
            total -= log_likelihood(seq, model, dt)
        except LikelihoodError:
            return float("inf")
    return total


class _SeqPieces:
    """Per-sequence likelihood pieces with the beta-dependent parts cached.

    The background terms never change during a fit; the excitation terms
    only change when beta does. With both cached, NLL and (alpha, omega)
    gradients reduce to a handful of dot products.
    """

    def __init__(self, seq, background, dt):
        self.times = seq.times
        self.marks = seq.marks
        self.mu_ev = background(self.times) if len(self.times) else np.array([])
        mids, widths = _midpoint_grid(seq.horizon_T, dt, breaks=self.times)
        self.mids = mids
        self.widths = widths
        self.mu_grid = background(mids)
        self.mu_int = float((self.mu_grid * widths).sum())
        self._beta = None

    def set_beta(self, beta):
        if beta == self._beta:
            return
        self.exc_ev = (
            _excitation(self.times, self.times, self.marks, beta)
            if len(self.times)
            else np.array([])
        )
        exc_grid = _excitation(self.mids, self.times, self.marks, beta)
        self.exc_int = float((exc_grid * self.widths).sum())
        self._beta = beta

    def nll(self, alpha, omega):
        lam = alpha * self.mu_ev + omega * self.exc_ev
        if len(lam) and lam.min() <= 0:
            return float("inf")
        return -(float(np.log(lam).sum()) - alpha * self.mu_int - omega * self.exc_int)

    def nll_grads(self, alpha, omega):
        """(dNLL/dalpha, dNLL/domega)."""
        lam = alpha * self.mu_ev + omega * self.exc_ev
        if len(lam) and lam.min() <= 0:
            return None
        g_a = -(float((self.mu_ev / lam).sum()) - self.mu_int)
        g_o = -(float((self.exc_ev / lam).sum()) - self.exc_int)
        return g_a, g_o


def _rel_change(new, old):
    if not (math.isfinite(new) and math.isfinite(old)):
        return float("inf")
    denom = max(abs(old), 1e-300)
    return abs(new - old) / denom


def fit_mle(
    train_seqs,
    val_seqs,
    hyper: dict | None = None,
    init: HawkesParams | None = None,
    background: PeriodicKDE | None = None,
    mark_model: MarkModel | None = None,
    event_type: str = "corrosion",
    seed: int = 0,
    max_sgd_iters: int = 100,
    max_rounds: int = 2000,
):
    """Coordinate-descent MLE: SGD on (alpha, omega), line search on beta.

    Each SGD iteration takes one uniformly sampled training sequence,
    computes analytic NLL gradients, clips them elementwise to
    [-grad_clip, grad_clip], and steps; full-train NLL is checked every 10
    iterations and when its relative change falls below tol (or the
    per-round iteration budget runs out), beta is updated by a line search
    over beta_search_points equally spaced values within
    +-beta_search_radius of the current beta on one random training
    sequence. The proposed beta is accepted only if it does not increase
    the full-train NLL, which keeps the traced NLL non-increasing across
    accepted line-search steps. The alternation stops when, after an
    accepted beta update, the relative change in total validation NLL
    falls below tol.

    Returns (HawkesParams, trace) where trace is a list of dict records.
    """
    if not train_seqs or not val_seqs:
        raise DomainError("need at least one train and one validation sequence")
    hyper = {**defaults.mle_hyper(event_type), **(hyper or {})}
    lr = hyper["lr"]
    clip = hyper["grad_clip"]
    radius = hyper["beta_search_radius"]
    n_points = hyper.get("beta_search_points", 20)
    tol = hyper["tol"]

    rng = np.random.default_rng(seed)
    params = init if init is not None else init_params(train_seqs)
    background = background if background is not None else fit_background(train_seqs)
    mark_model = mark_model if mark_model is not None else MarkModel()
    dt = defaults.LL_DT

    train_pieces = [_SeqPieces(s, background, dt) for s in train_seqs]
    val_pieces = [_SeqPieces(s, background, dt) for s in val_seqs]

    def set_beta_all(pieces, beta):
        for pc in pieces:
            pc.set_beta(beta)

    def total_nll(pieces, p):
        return sum(pc.nll(p.alpha, p.omega) for pc in pieces)

    set_beta_all(train_pieces, params.beta)
    set_beta_all(val_pieces, params.beta)
    if not math.isfinite(total_nll(train_pieces, params)):
        raise FitError("non-finite NLL at initialization")

    trace = []
    val_nll = total_nll(val_pieces, params)
    for round_idx in range(max_rounds):
        # (1) SGD on alpha, omega
        train_nll = total_nll(train_pieces, params)
        it = 0
        while it < max_sgd_iters:
            for _ in range(10):
                pc = train_pieces[rng.integers(len(train_pieces))]
                grads = pc.nll_grads(params.alpha, params.omega)
                if grads is None or not all(math.isfinite(g) for g in grads):
                    trace.append({"round": round_idx, "iter": it, "skipped": "bad gradient"})
                    it += 1
                    continue
                g_a = min(max(grads[0], -clip), clip)
                g_o = min(max(grads[1], -clip), clip)
                params = HawkesParams(
                    max(params.alpha - lr * g_a, 0.0),
                    max(params.omega - lr * g_o, 0.0),
                    params.beta,
                )
                it += 1
            new_nll = total_nll(train_pieces, params)
            if _rel_change(new_nll, train_nll) < tol:
                break
            train_nll = new_nll
        trace.append({"round": round_idx, "sgd_iters": it, "train_nll": train_nll})

        # (2) beta line search on one random training sequence; the winning
        # candidate only sticks if the full-train NLL does not get worse
        pick = int(rng.integers(len(train_seqs)))
        search_pc = _SeqPieces(train_seqs[pick], background, dt)
        betas = np.linspace(params.beta - radius, params.beta + radius, n_points)
        candidates = np.append(betas[betas > 0], params.beta)
        best_beta, best_nll = params.beta, float("inf")
        for b in candidates:
            search_pc.set_beta(float(b))
            nll = search_pc.nll(params.alpha, params.omega)
            if nll < best_nll:
                best_beta, best_nll = float(b), nll
        accepted = False
        if best_beta != params.beta:
            full_before = total_nll(train_pieces, params)
            set_beta_all(train_pieces, best_beta)
            full_after = total_nll(
                train_pieces, HawkesParams(params.alpha, params.omega, best_beta)
            )
            if full_after <= full_before:
                params = HawkesParams(params.alpha, params.omega, best_beta)
                accepted = True
            else:
                set_beta_all(train_pieces, params.beta)
        if accepted:
            set_beta_all(val_pieces, params.beta)

        new_val = total_nll(val_pieces, params)
        trace.append(
            {
                "round": round_idx,
                "beta": params.beta,
                "accepted": accepted,
                "line_search_nll": best_nll,
                "val_nll": new_val,
            }
        )
        if accepted and _rel_change(new_val, val_nll) < tol:
            val_nll = new_val
            break
        val_nll = new_val

    return params, trace


# ---------------------------------------------------------------------------
# Sampling


def sample_trajectory(
    history: EventSequence,
    model: HawkesModel,
    horizon: float,
    seed: int,
) -> EventSequence:
    """Ogata thinning forward from the observed history to ``horizon``.

    The dominating rate at current time t is alpha*max(mu) plus the current
    excitation (non-increasing until the next event), so acceptance with
    probability lambda_g(candidate)/bound is exact. Deterministic given the
    seed.
    """
    if len(history) and horizon <= history.times[-1]:
        raise DomainError("horizon must exceed the history end")
    rng = np.random.default_rng(seed)
    p = model.params
    events = list(history.events)
    hist_marks = list(history.marks)

    t = float(history.times[-1]) if len(history) else 0.0
    # exponential kernel is memoryless: S = sum_i m_i exp(-beta (t - t_i))
    # updates by pure decay between events, so excitation = omega*beta*S.
    S = float(np.sum(history.marks * np.exp(-p.beta * (t - history.times)))) if len(history) else 0.0
    bg_max = p.alpha * model.background.mu_max
    n_marks = len(hist_marks)
    mark_mean = float(np.mean(hist_marks)) if n_marks else model.mark_model.prior_mean
    mark_m2 = float(np.var(hist_marks) * n_marks) if n_marks > 1 else 0.0

    while True:
        lam_bar = bg_max + p.omega * p.beta * S
        if not math.isfinite(lam_bar):
            raise SampleError("non-finite intensity bound")
        if lam_bar <= 0:
            break
        gap = rng.exponential(1.0 / lam_bar)
        t_cand = t + gap
        if t_cand >= horizon:
            break
        S *= math.exp(-p.beta * gap)
        t = t_cand
        lam = p.alpha * model.background(t_cand) + p.omega * p.beta * S
        if not math.isfinite(lam):
            raise SampleError("non-finite intensity at candidate")
        if rng.uniform() * lam_bar <= lam:
            if model.event_type == "environment":
                m = 1.0
            else:
                if n_marks >= 2:
                    mean, var = mark_mean, mark_m2 / (n_marks - 1)
                else:
                    mean = mark_mean if n_marks else model.mark_model.prior_mean
                    var = model.mark_model.prior_sigma**2
                sd = math.sqrt(var)
                m = rng.normal(mean, sd)
                tries = 0
                while m <= 0:
                    m = rng.normal(mean, sd)
                    tries += 1
                    if tries > 10000:
                        raise SampleError("mark rejection sampling failed")
            events.append(DegradationEvent(float(t_cand), float(m)))
            S += m
            # Welford update of the running mark statistics
            n_marks += 1
            delta = m - mark_mean
            mark_mean += delta / n_marks
            mark_m2 += delta * (m - mark_mean)
    return EventSequence(history.sensor_id, history.event_type, tuple(events), horizon)


# ---------------------------------------------------------------------------
# Serialization


def model_to_json(model: HawkesModel) -> dict:
    return {
        "event_type": model.event_type,
        "alpha": model.params.alpha,
        "omega": model.params.omega,
        "beta": model.params.beta,
        "kde": model.background.to_json(),
        "mark_prior_sigma": model.mark_model.prior_sigma,
        "mark_prior_mean": model.mark_model.prior_mean,
    }


def model_from_json(doc: dict) -> HawkesModel:
    return HawkesModel(
        HawkesParams(doc["alpha"], doc["omega"], doc["beta"]),
        PeriodicKDE.from_json(doc["kde"]),
        MarkModel(doc["mark_prior_sigma"], doc.get("mark_prior_mean", 0.0)),
        doc["event_type"],
    )


def save_model(model: HawkesModel, path) -> None:
    save_json(model_to_json(model), path)
