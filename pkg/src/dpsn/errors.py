"""Exception hierarchy shared by the pipeline and the command line."""


class DpsnError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DpsnError):
    """Invalid hyperparameters, flags or experiment configuration."""


class DataError(DpsnError):
    """Unreadable or inconsistent input data."""


class TrainingError(DpsnError):
    """Numerical failure during network training."""
