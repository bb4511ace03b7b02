"""Representative samples and discriminative shapelets for a trained model."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dpsn.errors import DataError
from dpsn.protonet import TransformNet, Prototypes, forward
from dpsn.sfa import SfaParams
from dpsn.tscore import Dataset, TimeSeries, window_matrix, znormalize_rows

log = logging.getLogger(__name__)

INF = math.inf


def representative_sample(net: TransformNet, protos: Prototypes, features, labels, k: int) -> int:
    """Index of the class-``k`` sample whose embedding is nearest the class prototype."""
    labels = np.asarray(labels)
    members = np.flatnonzero(labels == k)
    if members.size == 0:
        raise DataError(f"class {k} has no training samples")
    emb = forward(net, np.asarray(features, dtype=np.float64)[members])
    dist = np.linalg.norm(emb - protos.centers[k], axis=1)
    return int(members[np.argmin(dist)])


def lowpass_reconstruct(window, w: int) -> np.ndarray:
    """Keep the first ``w`` complex DFT coefficients (DC included) and invert."""
    window = np.asarray(window, dtype=np.float64)
    n = window.shape[-1]
    if not 1 <= w <= n // 2 + 1:
        raise DataError(f"w={w} outside [1, {n // 2 + 1}] for window length {n}")
    spectrum = np.fft.rfft(window, axis=-1)
    spectrum[..., w:] = 0.0
    return np.fft.irfft(spectrum, n=n, axis=-1)


def _as_values(series) -> np.ndarray:
    return series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)


def shapelet_distances(shapelets: np.ndarray, series, znorm: bool = False) -> np.ndarray:
    """Minimum Euclidean distance of each shapelet row to any subsequence of ``series``."""
    shapelets = np.atleast_2d(shapelets)
    values = _as_values(series)
    if shapelets.shape[1] > values.size:
        raise DataError(f"shapelet length {shapelets.shape[1]} exceeds series length {values.size}")
    windows = window_matrix(values, shapelets.shape[1])
    if znorm:
        windows = znormalize_rows(windows)
        shapelets = znormalize_rows(shapelets)
    out = np.empty(shapelets.shape[0])
    # chunked to bound the (m, ns, L) temporary
    step = max(1, 2_000_000 // max(1, windows.size))
    for lo in range(0, shapelets.shape[0], step):
        diff = shapelets[lo:lo + step, None, :] - windows[None, :, :]
        out[lo:lo + step] = np.sqrt(np.einsum("mnl,mnl->mn", diff, diff).min(axis=1))
    return out


def shapelet_distance(shapelet, series, znorm: bool = False) -> float:
    return float(shapelet_distances(np.asarray(shapelet, dtype=np.float64)[None, :], series, znorm)[0])


def variability(distances, labels, positive: int) -> tuple[float, float]:
    """(between, within) class variability for the positive-vs-rest split."""
    d = np.asarray(distances, dtype=np.float64)
    pos = np.asarray(labels) == positive
    groups = [d[pos], d[~pos]]
    if any(g.size == 0 for g in groups):
        raise DataError("f-test needs members in both the positive and negative group")
    n, k = d.size, 2
    if n <= k:
        raise DataError("f-test needs at least three distances")
    grand = d.mean()
    between = sum(g.size * (g.mean() - grand) ** 2 for g in groups) / (k - 1)
    within = sum(((g - g.mean()) ** 2).sum() for g in groups) / (n - k)
    return float(between), float(within)


def f_score(distances, labels, positive: int) -> float:
    """Between/within variability ratio; ``inf`` for a perfect split, 0 when flat."""
    between, within = variability(distances, labels, positive)
    if within == 0.0:
        return INF if between > 0.0 else 0.0
    return between / within


@dataclass
class ShapeletCandidate:
    source_series_id: int
    start: int
    length: int
    values: np.ndarray
    f_score: float
    between: float = 0.0

    def to_dict(self) -> dict:
        return {
            "source_series_id": self.source_series_id,
            "start": self.start,
            "length": self.length,
            "values": list(map(float, self.values)),
            "f_score": _encode_score(self.f_score),
            "between": self.between,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeletCandidate":
        return cls(d["source_series_id"], d["start"], d["length"], np.array(d["values"], dtype=np.float64),
                   _decode_score(d["f_score"]), d.get("between", 0.0))


def _encode_score(s: float):
    return "inf" if math.isinf(s) else s


def _decode_score(s) -> float:
    return INF if s == "inf" else float(s)


@dataclass
class ClassExplanation:
    label: object  # original class identifier
    representative_series_id: int
    discriminative: ShapeletCandidate
    distances: np.ndarray  # d(S_k, T_i) for every training series
    scores: np.ndarray  # f-score of every candidate, by start offset

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "representative_series_id": self.representative_series_id,
            "discriminative": self.discriminative.to_dict(),
            "distances": list(map(float, self.distances)),
            "scores": [_encode_score(float(s)) for s in self.scores],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassExplanation":
        return cls(d["label"], d["representative_series_id"], ShapeletCandidate.from_dict(d["discriminative"]),
                   np.array(d["distances"], dtype=np.float64),
                   np.array([_decode_score(s) for s in d["scores"]], dtype=np.float64))


@dataclass
class ShapeletReport:
    classes: list[ClassExplanation] = field(default_factory=list)
    window_len: int = 0
    num_coeffs: int = 0

    def to_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "num_coeffs": self.num_coeffs,
            "classes": [c.to_dict() for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeletReport":
        return cls([ClassExplanation.from_dict(c) for c in d["classes"]], d["window_len"], d["num_coeffs"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ShapeletReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def rank_key(score: float, between: float, start: int) -> tuple:
    # finite scores compare by value; sentinels beat them and compare by `between`
    if math.isinf(score):
        return (1, between, -start)
    return (0, score, -start)


def best_candidate(scores, betweens) -> int:
    keys = [rank_key(s, b, i) for i, (s, b) in enumerate(zip(scores, betweens))]
    return max(range(len(keys)), key=keys.__getitem__)


def discover(net: TransformNet, protos: Prototypes, train: Dataset, features, params: SfaParams,
             znorm: bool = False) -> ShapeletReport:
    """Per class: representative series, then the low-passed window of it that
    best separates the class from the rest by shapelet distance."""
    if train.n_classes < 2:
        raise DataError("shapelet discovery needs at least two classes")
    L, w = params.window_len, params.num_coeffs
    labels = train.labels
    usable = [i for i, ts in enumerate(train.series) if len(ts) >= L]
    if len(usable) < len(train.series):
        log.warning("%d series shorter than window %d excluded from distances",
                    len(train.series) - len(usable), L)
    usable_labels = labels[usable]

    report = ShapeletReport(window_len=L, num_coeffs=w)
    for k in range(train.n_classes):
        rep = representative_sample(net, protos, features, labels, k)
        if len(train.series[rep]) < L:
            raise DataError(f"representative series {rep} is shorter than the window length {L}")
        candidates = lowpass_reconstruct(window_matrix(train.series[rep].values, L), w)
        dist = np.stack([shapelet_distances(candidates, train.series[i], znorm) for i in usable], axis=1)
        parts = [variability(row, usable_labels, k) for row in dist]
        scores = np.array([INF if wi == 0.0 and b > 0.0 else (0.0 if wi == 0.0 else b / wi) for b, wi in parts])
        betweens = [b for b, _ in parts]
        best = best_candidate(scores, betweens)
        shapelet = ShapeletCandidate(rep, best, L, candidates[best], float(scores[best]), betweens[best])
        report.classes.append(ClassExplanation(train.classes[k], rep, shapelet, dist[best], scores))
    return report
