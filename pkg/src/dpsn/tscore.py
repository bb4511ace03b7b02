"""Time-series data model, UCR ingestion and windowing primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from dpsn.errors import DataError

DEFAULT_EPSILON = 1e-8

_DELIMITERS = {"tab": "\t", "comma": ",", "space": None}


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One labelled univariate series.

    ``label`` is the integer class code (0..K-1) within the owning dataset;
    the original label lives in ``Dataset.classes[label]``.
    """

    id: int
    values: np.ndarray
    label: int

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise DataError(f"series {self.id}: values must be a non-empty 1-D sequence")
        values = np.nan_to_num(values, nan=0.0)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class Dataset:
    series: tuple[TimeSeries, ...]
    classes: tuple = field(default_factory=tuple)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "series", tuple(self.series))
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.series:
            raise DataError(f"dataset {self.name!r} has no series")
        if len(set(self.classes)) != len(self.classes):
            raise DataError(f"dataset {self.name!r} has duplicate class identifiers")
        for ts in self.series:
            if not 0 <= ts.label < len(self.classes):
                raise DataError(f"series {ts.id}: label code {ts.label} outside class set")

    @classmethod
    def from_arrays(cls, values: Iterable[Sequence[float]], labels: Sequence, name: str = "",
                    classes: Sequence | None = None) -> "Dataset":
        """Build a dataset from raw rows and original labels.

        Class order is the order of first appearance unless ``classes`` is given.
        """
        labels = [y.item() if isinstance(y, np.generic) else y for y in labels]
        if classes is None:
            classes = list(dict.fromkeys(labels))
        code = {c: i for i, c in enumerate(classes)}
        try:
            series = [TimeSeries(i, v, code[y]) for i, (v, y) in enumerate(zip(values, labels))]
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} not in class set") from None
        return cls(series, classes, name)

    @property
    def n_series(self) -> int:
        return len(self.series)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def labels(self) -> np.ndarray:
        return np.array([ts.label for ts in self.series], dtype=np.int64)

    @property
    def lengths(self) -> list[int]:
        return [len(ts) for ts in self.series]

    def values_matrix(self) -> np.ndarray:
        """Stack series into an (N, length) array; lengths must agree."""
        if len(set(self.lengths)) != 1:
            raise DataError(f"dataset {self.name!r} has unequal series lengths")
        return np.stack([ts.values for ts in self.series])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Series at ``indices`` (renumbered from 0), keeping the full class set."""
        picked = [self.series[i] for i in indices]
        series = [TimeSeries(j, ts.values, ts.label) for j, ts in enumerate(picked)]
        return Dataset(series, self.classes, self.name)

    def class_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)


def _parse_label(token: str, lineno: int):
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"row {lineno}: label {token!r} is not numeric") from None
    if math.isnan(value):
        raise DataError(f"row {lineno}: label is NaN")
    return int(value) if value.is_integer() else value


def _parse_value(token: str, lineno: int) -> float:
    token = token.strip()
    if not token:
        return 0.0
    try:
        return float(token)
    except ValueError:
        raise DataError(f"row {lineno}: value {token!r} is not numeric") from None


def load_ucr(path, delimiter: str = "auto", name: str | None = None) -> Dataset:
    """Read a UCR-format file: one series per line, ``label, v1, v2, ...``.

    NaN values and missing trailing values of shorter rows become 0.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [(i + 1, line.strip()) for i, line in enumerate(text.splitlines())]
    lines = [(i, line) for i, line in lines if line]
    if not lines:
        raise DataError(f"{path}: empty file (row 1)")

    if delimiter == "auto":
        first = lines[0][1]
        delimiter = "tab" if "\t" in first else "comma" if "," in first else "space"
    if delimiter not in _DELIMITERS:
        raise DataError(f"unknown delimiter {delimiter!r}")
    sep = _DELIMITERS[delimiter]

    rows, labels = [], []
    for lineno, line in lines:
        tokens = line.split(sep)
        labels.append(_parse_label(tokens[0], lineno))
        values = [_parse_value(t, lineno) for t in tokens[1:]]
        if not values:
            raise DataError(f"row {lineno}: no values after the label")
        rows.append(values)

    width = max(len(r) for r in rows)
    padded = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        padded[i, : len(r)] = r
    return Dataset.from_arrays(padded, labels, name=name if name is not None else path.stem)


def znormalize(window, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Zero-mean, unit-variance copy of ``window``; near-constant windows map to zeros."""
    window = np.asarray(window, dtype=np.float64)
    if window.size == 0:
        raise DataError("cannot normalize an empty window")
    centered = window - window.mean()
    std = window.std()
    if std < epsilon:
        return np.zeros_like(window)
    return centered / std


def znormalize_rows(windows: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Row-wise :func:`znormalize` for a 2-D array of windows."""
    centered = windows - windows.mean(axis=1, keepdims=True)
    std = windows.std(axis=1, keepdims=True)
    constant = std < epsilon
    out = centered / np.where(constant, 1.0, std)
    out[constant[:, 0]] = 0.0
    return out


def window_count(length: int, window_len: int, stride: int = 1) -> int:
    return (length - window_len) // stride + 1


def window_matrix(values, window_len: int, stride: int = 1) -> np.ndarray:
    """All windows of ``values`` as rows of a (ns, window_len) array."""
    values = np.asarray(values, dtype=np.float64)
    if window_len < 1 or stride < 1:
        raise DataError("window length and stride must be positive")
    if window_len > values.size:
        raise DataError(
            f"window length {window_len} exceeds series length {values.size}; "
            "shrink the window length (window_len / L_S)"
        )
    view = np.lib.stride_tricks.sliding_window_view(values, window_len)
    return np.ascontiguousarray(view[::stride])


def sliding_windows(series, window_len: int, stride: int = 1) -> list[tuple[int, np.ndarray]]:
    """``(start, window)`` pairs for every window of ``series`` at the given stride."""
    values = series.values if isinstance(series, TimeSeries) else series
    windows = window_matrix(values, window_len, stride)
    return [(i * stride, w) for i, w in enumerate(windows)]
