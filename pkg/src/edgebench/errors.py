"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class EdgebenchError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EdgebenchError):
    """A plan, configuration file, or query failed validation."""


class MarkerError(EdgebenchError):
    """A line carried the marker prefix but violated the marker grammar."""


class SamplerError(EdgebenchError):
    """The telemetry sampler could not start or failed mid-sweep."""


class IncompletePhaseError(EdgebenchError):
    """A run log is missing a start or end event for the requested phase."""


class NoBaselineError(EdgebenchError):
    """No telemetry samples fell inside the idle window."""


class InsufficientSamplesError(EdgebenchError):
    """Too few telemetry samples in a phase window to compute a statistic."""


class MissingJoinError(EdgebenchError):
    """A query needs the accuracy table but the dataset has none."""


class MissingMetricError(EdgebenchError):
    """A report or query needs a metric the dataset does not carry."""


class StorageError(EdgebenchError):
    """A log or dataset file could not be parsed or written."""
