"""Synthetic labelled datasets with known structure."""

from __future__ import annotations

import numpy as np

from dpsn.tscore import Dataset

# (waveform, period) per class
MOTIFS = (("sine", 12), ("square", 20), ("sawtooth", 32))


def _wave(kind: str, t: np.ndarray) -> np.ndarray:
    phase = t % 1.0
    if kind == "sine":
        return np.sin(2 * np.pi * t)
    if kind == "square":
        return np.where(phase < 0.5, 1.0, -1.0)
    if kind == "sawtooth":
        return 2.0 * phase - 1.0
    raise ValueError(kind)


def periodic_motifs(n_per_class: int, length: int = 128, noise: float = 0.3, rng=None,
                    name: str = "motifs") -> Dataset:
    """Three classes, each a distinct waveform/period with random phase and amplitude jitter."""
    rng = np.random.default_rng(rng)
    rows, labels = [], []
    for k, (kind, period) in enumerate(MOTIFS):
        for _ in range(n_per_class):
            t = (np.arange(length) + rng.uniform(0, period)) / period
            amp = rng.uniform(0.8, 1.2)
            rows.append(amp * _wave(kind, t) + rng.normal(0, noise, length))
            labels.append(k)
    return Dataset.from_arrays(rows, labels, name=name, classes=list(range(len(MOTIFS))))


def bump_dataset(n_per_class: int, length: int = 100, bump_len: int = 16, height: float = 3.0,
                 noise: float = 0.3, rng=None, name: str = "bump") -> tuple[Dataset, dict[int, int]]:
    """Class 0 is flat noise; class 1 adds a smooth bump at a random offset.

    Returns the dataset and ``{series_id: bump_start}`` for class-1 series.
    """
    rng = np.random.default_rng(rng)
    rows, labels, starts = [], [], {}
    shape = height * np.sin(np.linspace(0, np.pi, bump_len))
    for k in (0, 1):
        for _ in range(n_per_class):
            x = rng.normal(0, noise, length)
            if k == 1:
                s = int(rng.integers(0, length - bump_len + 1))
                x[s:s + bump_len] += shape
                starts[len(rows)] = s
            rows.append(x)
            labels.append(k)
    return Dataset.from_arrays(rows, labels, name=name, classes=[0, 1]), starts


def interval_overlap(a_start: int, a_len: int, b_start: int, b_len: int) -> int:
    return max(0, min(a_start + a_len, b_start + b_len) - max(a_start, b_start))
