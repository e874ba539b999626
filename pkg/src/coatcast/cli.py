"""Command-line surface: per-stage subcommands plus full pipeline runs."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import defaults
from .core import (
    event_sequence_from_json,
    event_sequence_to_json,
    ingest_csv,
    load_json,
    read_labels_csv,
    save_json,
    write_csv,
)
from .cpd import calibrate_threshold, wlcusum_tau
from .events import extract_events, grid_search_params, make_param_grid
from .hawkes import (
    HawkesModel,
    HawkesParams,
    MarkModel,
    PeriodicKDE,
    fit_background,
    fit_mle,
    model_from_json,
    model_to_json,
    sample_trajectory,
)
from .pipeline import PipelineConfig, run_pipeline
from .predict import FailureWindow, evaluate_windows, predict_failure_window, quantile_targets
from .synth import SynthSpec, generate_hawkes_stream, generate_sensor
from .tailfit import tau_series, tau_series_from_json, tau_series_to_json


def _emit(doc, as_json):
    if as_json:
        click.echo(json.dumps(doc, indent=2, sort_keys=True, default=str))
    else:
        for k, v in doc.items():
            click.echo(f"{k}: {v}")


@click.group()
def main():
    """Degradation events, Hawkes modeling, and failure-window forecasting."""


@main.command()
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
def ingest(csv_path, out, as_json):
    """Ingest a sensor CSV and write the aligned record back out."""
    record = ingest_csv(csv_path)
    write_csv(record, out)
    _emit({"sensor_id": record.sensor_id, "n_samples": len(record.current)}, as_json)


@main.command("tailfit")
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), required=True)
@click.option("--period", type=float, default=24.0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def tailfit_cmd(csv_path, out, period, as_json):
    """Fit per-cycle exponential tails and write the tau series JSON."""
    record = ingest_csv(csv_path)
    ts = tau_series(record, period)
    save_json(tau_series_to_json(ts), out)
    _emit({"sensor_id": ts.sensor_id, "n_cycles": len(ts.cycle_times), "n_ok": int(ts.fit_ok.sum())}, as_json)


@main.command("detect-failure")
@click.option("--tau", "tau_path", type=click.Path(exists=True), required=True)
@click.option("--window", type=int, default=defaults.CPD_WINDOW, show_default=True)
@click.option("--threshold", type=float, default=defaults.CPD_THRESHOLD, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def detect_failure(tau_path, window, threshold, as_json):
    """Run the window-limited CUSUM on a tau series JSON."""
    ts = tau_series_from_json(load_json(tau_path))
    label = wlcusum_tau(ts, w=window, b=threshold)
    if label is None:
        _emit({"sensor_id": ts.sensor_id, "detected": False}, as_json)
    else:
        _emit({"sensor_id": label.sensor_id, "detected": True, "time_hours": label.time}, as_json)


@main.command("calibrate-threshold")
@click.option("--tau-dir-a", type=click.Path(exists=True), required=True)
@click.option("--tau-dir-b", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--b-grid", default="0.5,0.7,0.9,1.1,1.3", show_default=True)
@click.option("--window", type=int, default=defaults.CPD_WINDOW, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def calibrate_threshold_cmd(tau_dir_a, tau_dir_b, labels_path, b_grid, window, as_json):
    """Calibrate the CUSUM threshold against visual labels."""
    sets = {}
    for name, d in (("a", tau_dir_a), ("b", tau_dir_b)):
        sets[name] = [tau_series_from_json(load_json(p)) for p in sorted(Path(d).glob("*.json"))]
    labels = read_labels_csv(labels_path)
    grid = [float(x) for x in b_grid.split(",")]
    b_hat, p_values = calibrate_threshold(sets, labels, grid, w=window)
    _emit(
        {"b_grid": list(p_values), "p_values": list(p_values.values()), "b_hat": b_hat},
        as_json,
    )


@main.command("extract-events")
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["corrosion", "environment", "hybrid"]), default="corrosion")
@click.option("--params", "params_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
def extract_events_cmd(csv_path, kind, params_path, out, as_json):
    """Extract degradation events from a sensor CSV."""
    record = ingest_csv(csv_path)
    cfg = PipelineConfig(data_dir=".", event_kind=kind,
                         event_params=load_json(params_path) if params_path else {})
    seq = extract_events(record, kind, cfg.event_param_obj())
    save_json(event_sequence_to_json(seq), out)
    _emit({"sensor_id": seq.sensor_id, "kind": kind, "n_events": len(seq)}, as_json)


@main.command("calibrate-events")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--kind", type=click.Choice(["corrosion", "environment", "hybrid"]), default="corrosion")
@click.option("--grid", "grid_path", type=click.Path(exists=True), required=True,
              help="JSON mapping parameter name -> list of candidate values")
@click.option("--json", "as_json", is_flag=True)
def calibrate_events(data_dir, labels_path, kind, grid_path, as_json):
    """Grid-search event parameters by minimizing CV of counts at failure."""
    labels = {lab.sensor_id: lab for lab in read_labels_csv(labels_path)}
    calib = []
    for p in sorted(Path(data_dir).glob("*.csv")):
        if p.stem in labels:
            calib.append((ingest_csv(p), labels[p.stem]))
    grid = make_param_grid(kind, load_json(grid_path))
    best, surface = grid_search_params(grid, calib, kind)
    _emit(
        {
            "best": best.astuple(),
            "surface": [{"params": p.astuple(), "cv": cv} for p, cv in surface],
        },
        as_json,
    )


@main.command("fit-hawkes")
@click.option("--train", "train_dir", type=click.Path(exists=True), required=True)
@click.option("--val", "val_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--kind", type=click.Choice(["corrosion", "environment", "hybrid"]), default="corrosion")
@click.option("--setting", type=click.Choice(["lab", "outdoor"]), default="lab")
@click.option("--bandwidth", type=float, default=defaults.KDE_BANDWIDTH, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--json", "as_json", is_flag=True)
def fit_hawkes(train_dir, val_dir, out, kind, setting, bandwidth, seed, as_json):
    """Fit the marked Hawkes process on event sequence JSON directories."""
    train = [event_sequence_from_json(load_json(p)) for p in sorted(Path(train_dir).glob("*.json"))]
    val = [event_sequence_from_json(load_json(p)) for p in sorted(Path(val_dir).glob("*.json"))]
    background = fit_background(train, bandwidth)
    params, trace = fit_mle(
        train, val, hyper=defaults.mle_hyper(kind, setting),
        background=background, event_type=kind, seed=seed,
    )
    model = HawkesModel(params, background, MarkModel(), kind)
    save_json(model_to_json(model), out)
    _emit({"alpha": params.alpha, "omega": params.omega, "beta": params.beta,
           "rounds": sum(1 for t in trace if "beta" in t)}, as_json)


@main.command("sample")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--history", "history_path", type=click.Path(exists=True), required=True)
@click.option("--horizon", type=float, required=True)
@click.option("--seeds", default="0..9", show_default=True, help="inclusive seed range lo..hi")
@click.option("--out", type=click.Path(), required=True, help="output directory")
@click.option("--json", "as_json", is_flag=True)
def sample(model_path, history_path, horizon, seeds, out, as_json):
    """Sample forecast trajectories conditioned on an observed history."""
    model = model_from_json(load_json(model_path))
    history = event_sequence_from_json(load_json(history_path))
    lo, hi = (int(x) for x in seeds.split(".."))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = {}
    for s in range(lo, hi + 1):
        traj = sample_trajectory(history, model, horizon, seed=s)
        save_json(event_sequence_to_json(traj), out_dir / f"traj_{s}.json")
        counts[s] = len(traj)
    _emit({"n_trajectories": hi - lo + 1, "counts": counts}, as_json)


@main.command("predict")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--targets", "targets_path", type=click.Path(exists=True), required=True)
@click.option("--history", "history_path", type=click.Path(exists=True), required=True)
@click.option("--ntraj", type=int, default=defaults.N_TRAJ, show_default=True)
@click.option("--max-horizon", type=float, default=2000.0, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--json", "as_json", is_flag=True)
def predict_cmd(model_path, targets_path, history_path, ntraj, max_horizon, seed, as_json):
    """Predict a failure window for one sensor's observed events."""
    model = model_from_json(load_json(model_path))
    history = event_sequence_from_json(load_json(history_path))
    tdoc = load_json(targets_path)
    targets = quantile_targets(
        counts=tdoc.get("counts"), mode=tdoc.get("mode", "empirical"),
        coating_class=tdoc.get("coating_class", "non_chromate"),
        mean=tdoc.get("mean"), cv=tdoc.get("cv"),
    )
    win = predict_failure_window(history, model, targets, ntraj, max_horizon, seed_base=seed)
    _emit(win.to_json(), as_json)


@main.command("evaluate")
@click.option("--windows", "windows_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--json", "as_json", is_flag=True)
def evaluate_cmd(windows_path, labels_path, as_json):
    """Score failure windows against labels."""
    windows = [FailureWindow.from_json(d) for d in load_json(windows_path)]
    labels = read_labels_csv(labels_path)
    _emit(evaluate_windows(windows, labels), as_json)


@main.group()
def synth():
    """Synthetic data generation."""


@synth.command("sensor")
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True, help="output directory")
@click.option("--seed", type=int, default=0)
@click.option("--json", "as_json", is_flag=True)
def synth_sensor(spec_path, out, seed, as_json):
    """Generate a synthetic chamber sensor CSV plus ground truth."""
    doc = load_json(spec_path) if spec_path else {}
    doc.setdefault("seed", seed)
    for key in ("taus", "peak_schedule", "rh_episodes", "cond_episodes"):
        if key in doc:
            doc[key] = tuple(tuple(x) if isinstance(x, list) else x for x in doc[key])
    spec = SynthSpec(**doc)
    record, truth = generate_sensor(spec)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(record, out_dir / f"{record.sensor_id}.csv")
    save_json(
        {
            "peak_times": truth.peak_times.tolist(),
            "peak_amplitudes": truth.peak_amplitudes.tolist(),
            "tau_by_day": truth.tau_by_day.tolist(),
            "change_day": truth.change_day,
            "rh_episodes": [list(e) for e in truth.rh_episodes],
            "cond_episodes": [list(e) for e in truth.cond_episodes],
        },
        out_dir / f"{record.sensor_id}.truth.json",
    )
    _emit({"sensor_id": record.sensor_id, "n_samples": len(record.current)}, as_json)


@synth.command("hawkes")
@click.option("--params", "params_path", type=click.Path(exists=True), required=True,
              help='JSON {"alpha":..,"omega":..,"beta":..}')
@click.option("--T", "horizon", type=float, default=336.0, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
def synth_hawkes(params_path, horizon, seed, out, as_json):
    """Simulate an event stream from a flat-background Hawkes model."""
    doc = load_json(params_path)
    params = HawkesParams(doc["alpha"], doc["omega"], doc["beta"])
    seq = generate_hawkes_stream(params, None, T=horizon, seed=seed)
    save_json(event_sequence_to_json(seq), out)
    _emit({"n_events": len(seq), "T": horizon, "seed": seed}, as_json)


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--json", "as_json", is_flag=True)
def run(config_path, out, seed, as_json):
    """Run the full pipeline from a JSON config."""
    config = PipelineConfig.from_json(load_json(config_path))
    if seed is not None:
        config.seed = seed
    manifest = run_pipeline(config, out)
    _emit({"stages": [s["name"] for s in manifest["stages"]], "config_hash": manifest["config_hash"]}, as_json)


if __name__ == "__main__":
    main()
