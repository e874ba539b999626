"""Shared 6-sensor synthetic cohort for pipeline and acceptance tests.

Each sensor fails at the same planted time (a tau step from 4 h to 12 h at
day 21) while its environment-episode rate differs, so counts at failure
spread with a coefficient of variation near 0.2.
"""

import numpy as np

from coatcast.core import write_csv
from coatcast.pipeline import PipelineConfig
from coatcast.synth import SynthSpec, generate_sensor

EPISODE_RATES = (1.4, 1.7, 2.0, 2.0, 2.3, 2.6)  # episodes per day
N_DAYS = 42
CHANGE_DAY = 21
TRUE_FAILURE_HOURS = CHANGE_DAY * 24.0


def build_cohort(data_dir):
    """Write the six sensor CSVs; returns the sorted sensor ids."""
    ids = []
    for i, rate in enumerate(EPISODE_RATES):
        rng = np.random.default_rng(100 + i)
        taus = tuple(
            (4.0 if d < CHANGE_DAY else 12.0) + rng.normal(0.0, 0.15)
            for d in range(N_DAYS)
        )
        starts = np.arange(0.0, N_DAYS * 24.0 - 3.0, 24.0 / rate)
        episodes = tuple(
            (round(s * 12) / 12, round(s * 12) / 12 + 3.0) for s in starts
        )
        spec = SynthSpec(
            n_days=N_DAYS,
            taus=taus,
            change_day=CHANGE_DAY,
            peak_schedule=((4.0, 5.0),),
            rh_episodes=episodes,
            cond_episodes=episodes,
            noise_sigma=0.0,
            seed=i,
        )
        record, _ = generate_sensor(spec)
        write_csv(record, data_dir / f"{record.sensor_id}.csv")
        ids.append(record.sensor_id)
    return sorted(ids)


def cohort_config(data_dir, ids):
    return PipelineConfig(
        data_dir=str(data_dir),
        event_kind="environment",
        hawkes_hyper={"lr": 1e-5},
        predict={"max_horizon": 1500.0, "observed_hours": 280.0},
        split={"train": ids[:4], "val": ids[4:], "test": []},
    )
