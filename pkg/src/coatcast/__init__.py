"""Corrosion-sensor degradation events, Hawkes modeling, and failure forecasting."""

from .core import (
    DegradationEvent,
    EventSequence,
    FailureLabel,
    SensorRecord,
    TimeSeries,
    accumulated_charge,
    ingest_csv,
)
from .errors import (
    CalibrationError,
    CoatcastError,
    ConfigError,
    DomainError,
    FitError,
    IngestError,
    InitError,
    LikelihoodError,
    SampleError,
    SchemaError,
    StatsError,
)

__version__ = "0.1.0"
