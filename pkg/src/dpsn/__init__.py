"""Few-shot time-series classification with SFA histograms, a prototypical
network and shapelet-based explanations."""

from dpsn.errors import ConfigError, DataError, DpsnError, TrainingError
from dpsn.tscore import Dataset, TimeSeries, load_ucr, sliding_windows, znormalize

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DpsnError",
    "TimeSeries",
    "TrainingError",
    "load_ucr",
    "sliding_windows",
    "znormalize",
]
