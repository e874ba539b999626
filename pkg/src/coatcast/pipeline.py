"""Config-driven end-to-end run: ingest -> tailfit -> detect -> extract ->
fit -> predict -> evaluate, with a reproducible manifest."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import defaults
from .core import (
    ingest_csv,
    read_labels_csv,
    save_json,
    event_sequence_to_json,
    write_labels_csv,
)
from .cpd import wlcusum_tau
from .errors import ConfigError, CoatcastError
from .events import (
    CorrosionEventParams,
    EnvironmentEventParams,
    HybridEventParams,
    counts_at_failure,
    extract_events,
)
from .hawkes import HawkesModel, MarkModel, fit_background, fit_mle, model_to_json
from .predict import evaluate_windows, predict_failure_window, quantile_targets
from .tailfit import tau_series, tau_series_to_json

OBSERVED_HOURS_DEFAULT = 336.0


@dataclass
class PipelineConfig:
    data_dir: str
    event_kind: str = "corrosion"
    event_params: dict = field(default_factory=dict)
    cpd: dict = field(default_factory=lambda: {"window": defaults.CPD_WINDOW, "threshold": defaults.CPD_THRESHOLD})
    hawkes_hyper: dict = field(default_factory=dict)
    predict: dict = field(default_factory=dict)
    split: dict = field(default_factory=lambda: {"train": [], "val": [], "test": []})
    seed: int = 0

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def validate(self):
        if self.event_kind not in ("corrosion", "environment", "hybrid"):
            raise ConfigError(f"unknown event kind {self.event_kind!r}")
        groups = [set(self.split.get(k, [])) for k in ("train", "val", "test")]
        for i in range(3):
            for j in range(i + 1, 3):
                overlap = groups[i] & groups[j]
                if overlap:
                    raise ConfigError(f"split lists overlap: {sorted(overlap)}")
        data_dir = Path(self.data_dir)
        present = {p.stem for p in data_dir.glob("*.csv") if p.name != "labels.csv"}
        referenced = groups[0] | groups[1] | groups[2]
        missing = referenced - present
        if missing:
            raise ConfigError(f"sensors missing from data_dir: {sorted(missing)}")

    def event_param_obj(self):
        ep = self.event_params
        if self.event_kind == "corrosion":
            return CorrosionEventParams(**ep) if ep else CorrosionEventParams()
        if self.event_kind == "environment":
            return EnvironmentEventParams(**ep) if ep else EnvironmentEventParams()
        corro = CorrosionEventParams(**ep.get("corrosion", {}))
        env_defaults = dict(
            rh_thresh=defaults.HYBRID_RH_THRESH,
            cond_thresh=defaults.HYBRID_COND_THRESH,
            time_of_wetness_min=defaults.HYBRID_TOW_MIN,
            contaminant_time_min=defaults.HYBRID_CET_MIN,
        )
        env_defaults.update(ep.get("environment", {}))
        return HybridEventParams(corro, EnvironmentEventParams(**env_defaults))


def _config_hash(config: PipelineConfig) -> str:
    doc = json.dumps(config.__dict__, sort_keys=True, default=str)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def run_pipeline(config: PipelineConfig, out_dir) -> dict:
    """Execute every stage, writing intermediates and a run manifest.

    Returns the manifest dict. A stage failure aborts the run with partial
    artifacts preserved; the manifest is written either way.
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(os.environ.get("COATCAST_SEED", config.seed))
    manifest = {
        "config_hash": _config_hash(config),
        "seed": seed,
        "version": "0.1.0",
        "stages": [],
    }

    def stage(name):
        rec = {"name": name, "started": time.time()}
        manifest["stages"].append(rec)
        return rec

    try:
        # 1. ingest
        rec = stage("ingest")
        data_dir = Path(config.data_dir)
        records = {}
        for p in sorted(data_dir.glob("*.csv")):
            if p.name == "labels.csv":
                continue
            records[p.stem] = ingest_csv(p)
        rec["n_sensors"] = len(records)
        rec["wall_s"] = time.time() - rec.pop("started")

        # 2. tailfit
        rec = stage("tailfit")
        taus = {sid: tau_series(r) for sid, r in records.items()}
        tau_dir = out / "tau"
        tau_dir.mkdir(exist_ok=True)
        for sid, ts in taus.items():
            save_json(tau_series_to_json(ts), tau_dir / f"{sid}.json")
        rec["wall_s"] = time.time() - rec.pop("started")

        # 3. detect (data-driven failure labels)
        rec = stage("detect")
        cpd_w = int(config.cpd.get("window", defaults.CPD_WINDOW))
        cpd_b = float(config.cpd.get("threshold", defaults.CPD_THRESHOLD))
        labels = []
        for sid, ts in taus.items():
            lab = wlcusum_tau(ts, w=cpd_w, b=cpd_b)
            if lab is not None:
                labels.append(lab)
        write_labels_csv(labels, out / "labels.csv")
        rec["n_labels"] = len(labels)
        rec["wall_s"] = time.time() - rec.pop("started")

        # 4. extract events
        rec = stage("extract")
        params = config.event_param_obj()
        seqs = {sid: extract_events(r, config.event_kind, params) for sid, r in records.items()}
        ev_dir = out / "events"
        ev_dir.mkdir(exist_ok=True)
        for sid, seq in seqs.items():
            save_json(event_sequence_to_json(seq), ev_dir / f"{sid}.json")
        rec["wall_s"] = time.time() - rec.pop("started")

        # 5. fit hawkes
        rec = stage("fit")
        train_ids = config.split.get("train") or sorted(records)
        val_ids = config.split.get("val") or train_ids
        train_seqs = [seqs[s] for s in train_ids]
        val_seqs = [seqs[s] for s in val_ids]
        hyper = dict(config.hawkes_hyper)
        bandwidth = hyper.pop("bandwidth", defaults.KDE_BANDWIDTH)
        prior_sigma = hyper.pop("mark_prior_sigma", defaults.MARK_PRIOR_SIGMA)
        background = fit_background(train_seqs, bandwidth)
        params_fit, trace = fit_mle(
            train_seqs,
            val_seqs,
            hyper=hyper or None,
            background=background,
            mark_model=MarkModel(prior_sigma),
            event_type=config.event_kind,
            seed=seed,
        )
        model = HawkesModel(params_fit, background, MarkModel(prior_sigma), config.event_kind)
        save_json(model_to_json(model), out / "model.json")
        rec["n_mle_rounds"] = sum(1 for t in trace if "beta" in t)
        rec["wall_s"] = time.time() - rec.pop("started")

        # 6. predict windows for test sensors
        rec = stage("predict")
        pr = config.predict
        n_traj = int(pr.get("n_traj", defaults.N_TRAJ))
        max_horizon = float(pr.get("max_horizon", 2000.0))
        observed_hours = float(pr.get("observed_hours", OBSERVED_HOURS_DEFAULT))
        labeled = {lab.sensor_id: lab for lab in labels}
        calib_ids = [s for s in (list(train_ids) + list(val_ids)) if s in labeled]
        counts = counts_at_failure(
            [seqs[s] for s in calib_ids], [labeled[s] for s in calib_ids]
        )
        mode = pr.get("quantile_mode", "empirical")
        if mode == "empirical" and len(counts) >= 4:
            targets = quantile_targets(counts, "empirical")
        else:
            arr = np.asarray(counts, dtype=float)
            cv = float(np.std(arr, ddof=1) / arr.mean()) if len(arr) > 1 and arr.mean() > 0 else 0.3
            targets = quantile_targets(mode="gaussian", mean=float(max(arr.mean(), 1.0)), cv=max(cv, 0.05))
        test_ids = config.split.get("test") or sorted(records)
        windows = []
        for sid in test_ids:
            observed = seqs[sid].before(observed_hours)
            win = predict_failure_window(
                observed, model, targets, n_traj=n_traj,
                max_horizon=max_horizon, seed_base=seed,
            )
            windows.append(win)
        save_json([w.to_json() for w in windows], out / "windows.json")
        rec["n_windows"] = len(windows)
        rec["wall_s"] = time.time() - rec.pop("started")

        # 7. evaluate
        rec = stage("evaluate")
        eval_windows = [w for w in windows if w.sensor_id in labeled]
        if eval_windows:
            metrics = evaluate_windows(eval_windows, [labeled[w.sensor_id] for w in eval_windows])
        else:
            metrics = {"mean_width": float("nan"), "mean_error": float("nan"), "n_inside": 0}
        save_json(metrics, out / "metrics.json")
        rec.update(metrics)
        rec["wall_s"] = time.time() - rec.pop("started")
    except CoatcastError:
        manifest["failed_stage"] = manifest["stages"][-1]["name"]
        save_json(manifest, out / "manifest.json")
        raise

    save_json(manifest, out / "manifest.json")
    return manifest
