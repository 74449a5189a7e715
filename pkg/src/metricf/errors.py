class MetricFError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MetricFError, ValueError):
    """Invalid or inconsistent hyperparameters."""


class DataFormatError(MetricFError, ValueError):
    """Malformed input data: parse failures, range violations, duplicates."""


class ShapeError(MetricFError, ValueError):
    pass


class NumericError(MetricFError, FloatingPointError):
    """A non-finite gradient or loss appeared during training."""
