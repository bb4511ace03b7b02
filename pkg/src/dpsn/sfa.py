"""SFA word histograms: windowed truncated DFT, quantile binning, word counts.

A fitted :class:`SfaModel` turns any series at least ``window_len`` long into
a dense count vector over the words seen during fitting. Words never observed
in the training set get no column, and are ignored at transform time.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dpsn.errors import ConfigError, DataError
from dpsn.tscore import DEFAULT_EPSILON, Dataset, TimeSeries, window_matrix, znormalize, znormalize_rows

SYMBOLS = string.digits + string.ascii_lowercase


@dataclass(frozen=True)
class SfaParams:
    window_len: int
    num_coeffs: int
    alphabet_size: int = 4
    mean_norm: bool = True
    stride: int = 1
    normalize_series: bool = False
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.window_len < 1 or self.num_coeffs < 1 or self.stride < 1:
            raise ConfigError("window_len, num_coeffs and stride must be positive")
        if 2 * self.num_coeffs > self.window_len:
            raise ConfigError(
                f"num_coeffs={self.num_coeffs} needs window_len >= {2 * self.num_coeffs}, "
                f"got {self.window_len}"
            )
        if not 2 <= self.alphabet_size <= len(SYMBOLS):
            raise ConfigError(f"alphabet_size must be in [2, {len(SYMBOLS)}]")

    @property
    def word_len(self) -> int:
        return 2 * self.num_coeffs

    @classmethod
    def from_dict(cls, d: dict) -> "SfaParams":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        try:
            return cls(**known)
        except TypeError as exc:
            raise ConfigError(f"bad SFA parameters: {exc}") from None


@dataclass(frozen=True, eq=False)
class SfaBins:
    """Per-coefficient breakpoints, shape (word_len, alphabet_size - 1)."""

    breakpoints: np.ndarray

    @property
    def alphabet_size(self) -> int:
        return self.breakpoints.shape[1] + 1


@dataclass(frozen=True)
class SfaVocabulary:
    words: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word) -> bool:
        return word in self._index

    def index(self, word: str) -> int:
        return self._index[word]


def _coeff_slice(params: SfaParams) -> slice:
    start = 1 if params.mean_norm else 0
    return slice(start, start + params.num_coeffs)


def dft_truncate_rows(windows: np.ndarray, params: SfaParams) -> np.ndarray:
    """Interleaved [Re, Im, ...] of the retained DFT coefficients of each row."""
    spectrum = np.fft.rfft(windows, axis=-1)[..., _coeff_slice(params)]
    out = np.empty(spectrum.shape[:-1] + (2 * params.num_coeffs,))
    out[..., 0::2] = spectrum.real
    out[..., 1::2] = spectrum.imag
    return out


def dft_truncate(window, params: SfaParams) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (params.window_len,):
        raise DataError(f"window length {window.size} != window_len {params.window_len}")
    return dft_truncate_rows(window, params)


def fit_bins(coeffs, params: SfaParams) -> SfaBins:
    """Equi-depth breakpoints per coefficient column (linear-interpolated quantiles)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[0] == 0:
        raise DataError("cannot fit bins on an empty training set")
    if coeffs.shape[1] != params.word_len:
        raise DataError(f"expected {params.word_len} coefficients per window, got {coeffs.shape[1]}")
    qs = np.arange(1, params.alphabet_size) / params.alphabet_size
    breakpoints = np.quantile(coeffs, qs, axis=0).T
    return SfaBins(np.ascontiguousarray(breakpoints))


def symbols_of(coeffs: np.ndarray, bins: SfaBins) -> np.ndarray:
    # symbol = number of breakpoints strictly below the value
    coeffs = np.atleast_2d(coeffs)
    out = np.empty(coeffs.shape, dtype=np.int64)
    for j, bp in enumerate(bins.breakpoints):
        out[:, j] = np.searchsorted(bp, coeffs[:, j], side="left")
    return out


def word_of(coeffs, bins: SfaBins) -> str:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (bins.breakpoints.shape[0],):
        raise DataError("coefficient vector does not match the fitted bins")
    return "".join(SYMBOLS[s] for s in symbols_of(coeffs, bins)[0])


def _series_values(series, params: SfaParams) -> np.ndarray:
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if params.normalize_series:
        values = znormalize(values, params.epsilon)
    return values


def series_coeffs(series, params: SfaParams) -> np.ndarray:
    windows = window_matrix(_series_values(series, params), params.window_len, params.stride)
    return dft_truncate_rows(znormalize_rows(windows, params.epsilon), params)


def words_of_series(series, bins: SfaBins, params: SfaParams) -> list[str]:
    """Word sequence of a series after numerosity reduction."""
    symbols = symbols_of(series_coeffs(series, params), bins)
    words = ["".join(SYMBOLS[s] for s in row) for row in symbols]
    return [w for i, w in enumerate(words) if i == 0 or w != words[i - 1]]


def histogram(series, bins: SfaBins, params: SfaParams, vocab: SfaVocabulary | None = None):
    """Word counts of ``series``.

    Without a vocabulary returns a ``Counter`` of raw counts (fitting mode);
    with one, a dense float vector of length ``len(vocab)`` where
    out-of-vocabulary words are dropped.
    """
    counts = Counter(words_of_series(series, bins, params))
    if vocab is None:
        return counts
    vec = np.zeros(len(vocab))
    for word, n in counts.items():
        if word in vocab:
            vec[vocab.index(word)] = n
    return vec


@dataclass(frozen=True, eq=False)
class SfaModel:
    params: SfaParams
    bins: SfaBins
    vocab: SfaVocabulary

    @property
    def dim(self) -> int:
        return len(self.vocab)

    def transform(self, data) -> np.ndarray:
        """Feature matrix (N, D) for a Dataset or an iterable of series."""
        series = data.series if isinstance(data, Dataset) else data
        if not len(series):
            return np.zeros((0, self.dim))
        return np.stack([histogram(s, self.bins, self.params, self.vocab) for s in series])

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "breakpoints": self.bins.breakpoints.tolist(),
            "vocabulary": list(self.vocab.words),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SfaModel":
        params = SfaParams.from_dict(d["params"])
        bp = np.array(d["breakpoints"], dtype=np.float64).reshape(params.word_len, params.alphabet_size - 1)
        return cls(params, SfaBins(bp), SfaVocabulary(tuple(d["vocabulary"])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SfaModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_lengths(series: Sequence[TimeSeries], params: SfaParams) -> None:
    for ts in series:
        if len(ts) < params.window_len:
            raise DataError(
                f"series {ts.id} has length {len(ts)} < window length {params.window_len}; "
                "shrink the window length (window_len / L_S)"
            )


def fit(train: Dataset, params: SfaParams) -> tuple[SfaModel, np.ndarray]:
    _check_lengths(train.series, params)
    coeffs = [series_coeffs(ts, params) for ts in train.series]
    bins = fit_bins(np.concatenate(coeffs), params)
    counts = [histogram(ts, bins, params) for ts in train.series]
    vocab = SfaVocabulary(tuple(sorted(set().union(*counts))))
    features = np.zeros((len(counts), len(vocab)))
    for i, c in enumerate(counts):
        for word, n in c.items():
            features[i, vocab.index(word)] = n
    return SfaModel(params, bins, vocab), features


def fit_transform(train: Dataset, params: SfaParams) -> tuple[SfaBins, SfaVocabulary, np.ndarray]:
    model, features = fit(train, params)
    return model.bins, model.vocab, features


def loo_1nn_accuracy(features: np.ndarray, labels: np.ndarray) -> float:
    """Leave-one-out 1-NN accuracy under Euclidean distance."""
    sq = ((features[:, None, :] - features[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(sq, np.inf)
    return float(np.mean(labels[np.argmin(sq, axis=1)] == labels))


def default_grid(min_length: int, coeff_options: Sequence[int] = (2, 3, 4), n_windows: int = 8):
    lo = min(max(10, 2 * max(coeff_options)), min_length)
    lens = np.unique(np.linspace(lo, min_length, n_windows).round().astype(int))
    return [(int(L), w) for L in lens for w in coeff_options if 2 * w <= L]


def select_params(train: Dataset, grid=None, **fixed) -> SfaParams:
    """Pick (window_len, num_coeffs) by leave-one-out 1-NN accuracy on ``train``.

    Ties keep the earliest grid entry.
    """
    if train.n_series < 2:
        raise DataError("grid search needs at least two training series")
    if grid is None:
        grid = default_grid(min(train.lengths))
    labels = train.labels
    best, best_acc = None, -1.0
    for window_len, num_coeffs in grid:
        params = SfaParams(window_len=window_len, num_coeffs=num_coeffs, **fixed)
        _, features = fit(train, params)
        acc = loo_1nn_accuracy(features, labels)
        if acc > best_acc:
            best, best_acc = params, acc
    if best is None:
        raise ConfigError("empty hyperparameter grid")
    return best
