"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(ToolkitError):
    """Malformed or inconsistent input data (CSV rows, labels, joins)."""


class FormatError(DataError):
    """Corrupt or incompatible binary artifact (embedding store, weights file)."""


class ConfigError(ToolkitError):
    """Invalid wiring: missing model for a method, provenance mismatch, bad flag combo."""


class PriorError(ToolkitError):
    """Probabilistically inconsistent inputs to a posterior computation."""


class TrainingError(ToolkitError):
    """Training diverged; message carries the epoch/batch where it happened."""
