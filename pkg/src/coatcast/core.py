"""Shared data model, time-axis conventions, and dataset I/O.

All times are hours since the sensor's own first sample (t=0). Absolute
clock times are never compared across sensors.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import DomainError, IngestError, SchemaError

CHANNELS = (
    "corrosion_current_uA",
    "relative_humidity_pct",
    "conductance_uS",
    "temperature_C",
)

EVENT_TYPES = ("corrosion", "environment", "hybrid")
COATING_CLASSES = ("chromate", "non_chromate")
LABEL_SOURCES = ("visual", "data_driven")


@dataclass(frozen=True)
class TimeSeries:
    """One channel's samples on a strictly increasing hour grid."""

    timestamps: np.ndarray
    values: np.ndarray
    channel: str

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)
        if self.channel not in CHANNELS:
            raise SchemaError(f"unknown channel {self.channel!r}")
        if t.ndim != 1 or v.ndim != 1 or len(t) != len(v) or len(t) < 1:
            raise DomainError("timestamps and values must be equal-length, non-empty 1-D")
        if np.any(t < 0):
            raise DomainError("timestamps must be non-negative")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise DomainError("timestamps must be strictly increasing")
        if self.channel == "relative_humidity_pct" and (v.min() < 0 or v.max() > 100):
            raise DomainError("relative humidity must lie in [0, 100]")
        if self.channel in ("conductance_uS", "corrosion_current_uA") and v.min() < 0:
            raise DomainError(f"{self.channel} must be non-negative")

    @property
    def span(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class SensorRecord:
    """One coated sensor's aligned multi-channel time series plus metadata."""

    sensor_id: str
    platform_id: str
    coating_class: str
    channels: dict
    measurement_period: float

    def __post_init__(self):
        if self.coating_class not in COATING_CLASSES:
            raise DomainError(f"unknown coating class {self.coating_class!r}")
        if not self.channels:
            raise DomainError("sensor record needs at least one channel")
        grids = [ts.timestamps for ts in self.channels.values()]
        for g in grids[1:]:
            if len(g) != len(grids[0]) or not np.array_equal(g, grids[0]):
                raise DomainError("all channels must share one timestamp grid")
        if self.measurement_period <= 0:
            raise DomainError("measurement period must be positive")

    def channel(self, name: str) -> TimeSeries:
        try:
            return self.channels[name]
        except KeyError:
            raise DomainError(f"sensor {self.sensor_id} has no channel {name!r}") from None

    @property
    def current(self) -> TimeSeries:
        return self.channel("corrosion_current_uA")


@dataclass(frozen=True)
class DegradationEvent:
    """A discrete degradation event: time plus positive mark."""

    time: float
    mark: float

    def __post_init__(self):
        if not self.mark > 0:
            raise DomainError("event mark must be positive")


@dataclass(frozen=True)
class EventSequence:
    """Ordered marked events on [0, horizon_T] for one sensor."""

    sensor_id: str
    event_type: str
    events: tuple
    horizon_T: float

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.event_type not in EVENT_TYPES:
            raise DomainError(f"unknown event type {self.event_type!r}")
        t = np.array([e.time for e in self.events], dtype=float)
        m = np.array([e.mark for e in self.events], dtype=float)
        object.__setattr__(self, "_times", t)
        object.__setattr__(self, "_marks", m)
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise DomainError("event times must be strictly increasing")
        if len(t) and (t[0] < 0 or t[-1] > self.horizon_T):
            raise DomainError("event times must lie in [0, horizon_T]")
        if self.event_type == "environment" and any(e.mark != 1.0 for e in self.events):
            raise DomainError("environment events must carry mark 1")

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def marks(self) -> np.ndarray:
        return self._marks

    def __len__(self) -> int:
        return len(self.events)

    def before(self, t: float) -> "EventSequence":
        """Prefix of events strictly before t, with horizon t."""
        return EventSequence(
            self.sensor_id,
            self.event_type,
            tuple(e for e in self.events if e.time < t),
            float(t),
        )


@dataclass(frozen=True)
class FailureLabel:
    """A failure time for one sensor, labeled visually or data-driven."""

    sensor_id: str
    time: float
    source: str

    def __post_init__(self):
        if self.source not in LABEL_SOURCES:
            raise DomainError(f"unknown label source {self.source!r}")
        if not self.time > 0:
            raise DomainError("failure time must be positive")


# ---------------------------------------------------------------------------
# Ingestion


def _parse_timestamp(raw: str) -> tuple:
    """Return (kind, value): numeric hours or an absolute datetime."""
    try:
        return ("hours", float(raw))
    except ValueError:
        pass
    try:
        return ("abs", datetime.fromisoformat(raw))
    except ValueError:
        raise IngestError(f"unparseable timestamp {raw!r}") from None


def ingest_csv(
    path,
    schema: dict | None = None,
    *,
    sensor_id: str | None = None,
    platform_id: str = "",
    coating_class: str = "non_chromate",
) -> SensorRecord:
    """Read one sensor's CSV into an aligned SensorRecord.

    ``schema`` maps CSV column names to channel names; by default the known
    channel names map to themselves. Rows with any missing channel value are
    dropped whole. Timestamps (ISO-8601 or numeric hours) are converted to
    hours since the first surviving row.
    """
    path = Path(path)
    schema = dict(schema) if schema else {c: c for c in CHANNELS}
    for col, chan in schema.items():
        if chan not in CHANNELS:
            raise SchemaError(f"column {col!r} mapped to unknown channel {chan!r}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file")
        if "timestamp" not in reader.fieldnames:
            raise IngestError(f"{path}: no timestamp column")
        present = [c for c in reader.fieldnames if c in schema]
        if not present:
            raise SchemaError(f"{path}: no known channel columns")
        rows = list(reader)

    if not rows:
        raise IngestError(f"{path}: no data rows")

    times = []
    data = {schema[c]: [] for c in present}
    for row in rows:
        vals = {}
        complete = True
        for col in present:
            raw = (row.get(col) or "").strip()
            if raw == "":
                complete = False
                break
            vals[schema[col]] = float(raw)
        if not complete:
            continue
        times.append(_parse_timestamp(row["timestamp"].strip()))
        for chan, v in vals.items():
            data[chan].append(v)

    if not times:
        raise IngestError(f"{path}: every row has a missing channel value")

    kinds = {k for k, _ in times}
    if len(kinds) != 1:
        raise IngestError(f"{path}: mixed timestamp formats")
    if kinds == {"abs"}:
        t0 = times[0][1]
        hours = np.array([(t - t0).total_seconds() / 3600.0 for _, t in times])
    else:
        h = np.array([v for _, v in times], dtype=float)
        hours = h - h[0]
    if len(hours) > 1 and np.any(np.diff(hours) <= 0):
        raise IngestError(f"{path}: timestamps not strictly increasing")

    period = float(np.median(np.diff(hours))) if len(hours) > 1 else 1.0
    channels = {
        chan: TimeSeries(hours, np.array(vs, dtype=float), chan)
        for chan, vs in data.items()
    }
    return SensorRecord(
        sensor_id=sensor_id or path.stem,
        platform_id=platform_id,
        coating_class=coating_class,
        channels=channels,
        measurement_period=period,
    )


def write_csv(record: SensorRecord, path) -> None:
    """Write a SensorRecord back to the ingestion CSV format."""
    chans = [c for c in CHANNELS if c in record.channels]
    grid = record.channels[chans[0]].timestamps
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp"] + chans)
        for i, t in enumerate(grid):
            writer.writerow([repr(float(t))] + [repr(float(record.channels[c].values[i])) for c in chans])


def read_labels_csv(path) -> list:
    """Read a `sensor_id,time_hours,source` labels CSV."""
    labels = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            labels.append(
                FailureLabel(row["sensor_id"], float(row["time_hours"]), row["source"])
            )
    return labels


def write_labels_csv(labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sensor_id", "time_hours", "source"])
        for lab in labels:
            writer.writerow([lab.sensor_id, repr(lab.time), lab.source])


# ---------------------------------------------------------------------------
# Event sequence JSON


def event_sequence_to_json(seq: EventSequence) -> dict:
    return {
        "sensor_id": seq.sensor_id,
        "kind": seq.event_type,
        "horizon_T": seq.horizon_T,
        "events": [{"t": e.time, "m": e.mark} for e in seq.events],
    }


def event_sequence_from_json(doc: dict) -> EventSequence:
    return EventSequence(
        doc["sensor_id"],
        doc["kind"],
        tuple(DegradationEvent(e["t"], e["m"]) for e in doc["events"]),
        float(doc["horizon_T"]),
    )


def save_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Charge


def accumulated_charge(current: TimeSeries, upto: float) -> float:
    """Trapezoidal integral of corrosion current from series start to ``upto``.

    Returns charge in uA*hours.
    """
    t = current.timestamps
    v = current.values
    if upto < t[0] or upto > t[-1]:
        raise DomainError(f"upto={upto} outside series range [{t[0]}, {t[-1]}]")
    if upto == t[0]:
        return 0.0
    k = int(np.searchsorted(t, upto, side="right"))
    # whole segments up to index k-1, then a partial segment ending at upto
    charge = float(np.trapezoid(v[:k], t[:k]))
    if upto > t[k - 1]:
        frac = (upto - t[k - 1]) / (t[k] - t[k - 1])
        v_up = v[k - 1] + frac * (v[k] - v[k - 1])
        charge += 0.5 * (v[k - 1] + v_up) * (upto - t[k - 1])
    return charge
