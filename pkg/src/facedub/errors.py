"""Exception taxonomy shared across the package.

Each class maps to one CLI exit code (see :mod:`facedub.cli`).
"""


class FacedubError(Exception):
    """Base class for all package errors."""


class ContractError(FacedubError, ValueError):
    """An argument violates a documented shape/value contract."""


class IngestionError(FacedubError):
    """Input media (video, frames, landmarks) could not be ingested."""


class SamplingError(FacedubError):
    """A dataset sampling constraint cannot be satisfied."""


class ConfigurationError(FacedubError):
    """Missing or inconsistent configuration, including absent model assets."""


class CheckpointError(FacedubError):
    """Checkpoint file is malformed, of the wrong version, or inconsistent."""


class TrainingDivergedError(FacedubError):
    """A loss became NaN/Inf; training aborted."""


class MetricsError(FacedubError):
    """Evaluation inputs are inconsistent (e.g. frame-count mismatch)."""
