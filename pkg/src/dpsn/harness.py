"""Few-shot evaluation protocol: resampled training sets, baselines, aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from dpsn import sfa
from dpsn.errors import ConfigError, DataError, DpsnError
from dpsn.pipeline import DpsnModel, label_codes
from dpsn.protonet import TrainConfig
from dpsn.tscore import Dataset, load_ucr

log = logging.getLogger(__name__)

METHODS = ("dpsn", "nn_sfa", "nn_euclid")


@dataclass(frozen=True)
class FewShotTask:
    dataset: str
    shots: int | None
    ratio: float | None
    repeat_index: int
    seed: int
    indices: tuple[tuple[int, ...], ...]  # per class, sorted

    @property
    def mode(self) -> str:
        return mode_name(self.shots, self.ratio)

    @property
    def train_indices(self) -> list[int]:
        return sorted(i for group in self.indices for i in group)


def mode_name(shots: int | None, ratio: float | None) -> str:
    return f"shots={shots}" if shots is not None else f"ratio={ratio:g}"


def _ratio_count(ratio: float, size: int) -> int:
    return max(1, int(math.floor(ratio * size + 0.5)))


def make_tasks(train: Dataset, shots: int | None = None, ratio: float | None = None, repeats: int = 10,
               base_seed: int = 0) -> list[FewShotTask]:
    """Stratified subsamples of ``train``; repeat ``i`` is seeded with ``base_seed + i``."""
    if (shots is None) == (ratio is None):
        raise ConfigError("give exactly one of shots or ratio")
    if shots is not None and shots < 2:
        raise ConfigError("shots must be at least 2 (a prototype needs two samples)")
    if ratio is not None and not 0 < ratio <= 1:
        raise ConfigError("ratio must lie in (0, 1]")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")

    groups = [train.class_indices(k) for k in range(train.n_classes)]
    counts = [shots if shots is not None else _ratio_count(ratio, g.size) for g in groups]
    for k, (g, c) in enumerate(zip(groups, counts)):
        if g.size < c:
            raise DataError(f"{train.name}: class {train.classes[k]!r} has {g.size} series, {c} requested")

    tasks = []
    for i in range(repeats):
        seed = base_seed + i
        rng = np.random.default_rng(seed)
        picked = tuple(tuple(int(j) for j in np.sort(rng.choice(g, c, replace=False)))
                       for g, c in zip(groups, counts))
        tasks.append(FewShotTask(train.name, shots, ratio, i, seed, picked))
    return tasks


def nn_predict(references, ref_labels, queries) -> np.ndarray:
    """1-NN labels under Euclidean distance; ties go to the lowest reference index."""
    refs = np.atleast_2d(np.asarray(references, dtype=np.float64))
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if refs.shape[0] == 0 or refs.size == 0:
        raise DataError("empty reference set")
    if refs.shape[1] != queries.shape[1]:
        raise DataError(f"length mismatch: references {refs.shape[1]}, queries {queries.shape[1]}")
    ref_labels = np.asarray(ref_labels)
    out = np.empty(queries.shape[0], dtype=ref_labels.dtype)
    for lo in range(0, queries.shape[0], 256):
        diff = queries[lo:lo + 256, None, :] - refs[None, :, :]
        out[lo:lo + 256] = ref_labels[np.argmin(np.einsum("qrd,qrd->qr", diff, diff), axis=1)]
    return out


def baseline_nn(references, ref_labels, query):
    return nn_predict(references, ref_labels, query)[0].item()


def run(task: FewShotTask, method: str, train: Dataset, test: Dataset, params: sfa.SfaParams,
        cfg: TrainConfig) -> float:
    """Fit ``method`` on the task's training subset and return test accuracy."""
    sub = train.subset(task.train_indices)
    truth = label_codes(test, sub.classes)
    if method == "dpsn":
        model = DpsnModel.fit(sub, params, replace(cfg, seed=task.seed))
        pred = model.predict_codes(test)
    elif method == "nn_sfa":
        model, feats = sfa.fit(sub, params)
        pred = nn_predict(feats, sub.labels, model.transform(test))
    elif method == "nn_euclid":
        pred = nn_predict(sub.values_matrix(), sub.labels, test.values_matrix())
    else:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return float(np.mean(pred == truth))


@dataclass
class RunResult:
    dataset: str
    method: str
    mode: str
    accuracies: list[float]
    seeds: list[int] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


@dataclass
class ModeSummary:
    mode: str
    methods: list[str]
    datasets: list[str]
    mean: dict  # (dataset, method) -> float
    std: dict
    avg_accuracy_rank: dict[str, float]
    avg_std_rank: dict[str, float]
    wins: dict[str, int]


def aggregate(results: Sequence[RunResult]) -> list[ModeSummary]:
    """Per-mode tables: mean/std per cell, average ranks and win counts across datasets.

    Rank 1 is the highest mean accuracy (or lowest std); ties share the mean
    of the ranks they occupy. Every method tied for the best mean gets a win.
    """
    summaries = []
    for mode in dict.fromkeys(r.mode for r in results):
        rows = [r for r in results if r.mode == mode]
        methods = list(dict.fromkeys(r.method for r in rows))
        datasets = list(dict.fromkeys(r.dataset for r in rows))
        cell = {(r.dataset, r.method): r for r in rows}
        for d in datasets:
            seeds = {tuple(cell[d, m].seeds) for m in methods if (d, m) in cell}
            if len(seeds) > 1 or any((d, m) not in cell for m in methods):
                raise DataError(f"{d} ({mode}): methods were not evaluated on identical task lists")
        mean = {k: v.mean for k, v in cell.items()}
        std = {k: v.std for k, v in cell.items()}
        acc_ranks = np.array([rankdata([-mean[d, m] for m in methods]) for d in datasets])
        std_ranks = np.array([rankdata([std[d, m] for m in methods]) for d in datasets])
        wins = {m: 0 for m in methods}
        for d in datasets:
            best = max(mean[d, m] for m in methods)
            for m in methods:
                wins[m] += mean[d, m] == best
        summaries.append(ModeSummary(
            mode, methods, datasets, mean, std,
            dict(zip(methods, map(float, acc_ranks.mean(axis=0)))),
            dict(zip(methods, map(float, std_ranks.mean(axis=0)))),
            wins,
        ))
    return summaries


def pct(x: float) -> str:
    return f"{100 * x:.4f}"


def summary_markdown(summaries: Sequence[ModeSummary], failed: Sequence[str] = ()) -> str:
    out = []
    for s in summaries:
        out.append(f"## {s.mode}\n")
        out.append("| dataset | " + " | ".join(s.methods) + " |")
        out.append("|---" * (len(s.methods) + 1) + "|")
        for d in s.datasets:
            cells = [f"{pct(s.mean[d, m])}({pct(s.std[d, m])})" for m in s.methods]
            out.append(f"| {d} | " + " | ".join(cells) + " |")
        out.append("| average accuracy rank | " + " | ".join(f"{s.avg_accuracy_rank[m]:.2f}" for m in s.methods) + " |")
        out.append("| average std rank | " + " | ".join(f"{s.avg_std_rank[m]:.2f}" for m in s.methods) + " |")
        out.append("| wins | " + " | ".join(str(s.wins[m]) for m in s.methods) + " |")
        out.append("")
    if failed:
        out.append("## failed cells\n")
        out.extend(f"- {f}" for f in failed)
        out.append("")
    return "\n".join(out)


def summary_json(summaries: Sequence[ModeSummary], failed: Sequence[str] = ()) -> dict:
    return {
        "modes": [
            {
                "mode": s.mode,
                "methods": s.methods,
                "cells": [
                    {"dataset": d, "method": m, "mean": s.mean[d, m], "std": s.std[d, m]}
                    for d in s.datasets for m in s.methods
                ],
                "average_accuracy_rank": s.avg_accuracy_rank,
                "average_std_rank": s.avg_std_rank,
                "wins": s.wins,
            }
            for s in summaries
        ],
        "failed": list(failed),
    }


# -- benchmark configuration ------------------------------------------------

@dataclass
class DatasetSpec:
    name: str
    train: str
    test: str
    sfa: dict = field(default_factory=dict)


@dataclass
class BenchmarkConfig:
    datasets: list[DatasetSpec]
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    modes: list[dict] = field(default_factory=lambda: [{"shots": 6}])
    repeats: int = 10
    base_seed: int = 0
    sfa: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    n_jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "BenchmarkConfig":
        base_dir = Path(base_dir)
        try:
            datasets = []
            for entry in d["datasets"]:
                entry = dict(entry)
                name, tr, te = entry.pop("name"), entry.pop("train"), entry.pop("test")
                datasets.append(DatasetSpec(name, str(base_dir / tr), str(base_dir / te), entry))
            cfg = cls(datasets, **{k: v for k, v in d.items() if k != "datasets"})
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad benchmark config: {exc}") from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("benchmark config lists no datasets")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        for mode in self.modes:
            if set(mode) not in ({"shots"}, {"ratio"}):
                raise ConfigError(f"mode must be {{'shots': k}} or {{'ratio': r}}, got {mode}")
        if self.repeats < 1 or self.n_jobs < 1:
            raise ConfigError("repeats and n_jobs must be >= 1")
        TrainConfig.from_dict(self.train)

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, path.parent)


@dataclass
class CellRecord:
    dataset: str
    method: str
    mode: str
    repeat: int
    seed: int
    accuracy: float | None
    error: str | None = None


def _resolve_params(spec: DatasetSpec, train: Dataset, defaults: dict) -> sfa.SfaParams:
    merged = {**defaults, **spec.sfa}
    if "window_len" in merged and "num_coeffs" in merged:
        return sfa.SfaParams.from_dict(merged)
    fixed = {k: v for k, v in merged.items() if k not in ("window_len", "num_coeffs")}
    log.info("%s: selecting SFA window/coefficients by leave-one-out 1-NN", spec.name)
    return sfa.select_params(train, **fixed)


def _run_cell(job):
    task, method, train, test, params, cfg = job
    try:
        return task, method, run(task, method, train, test, params, cfg), None
    except DpsnError as exc:
        return task, method, None, str(exc)


def run_benchmark(config: BenchmarkConfig) -> tuple[list[CellRecord], list[ModeSummary], list[str]]:
    """Execute every (dataset, mode, method, repeat) cell.

    Missing or unreadable dataset files raise before any cell runs. Failing
    cells are recorded with an error and left out of the summary.
    """
    loaded = []
    for spec in config.datasets:
        for p in (spec.train, spec.test):
            if not Path(p).is_file():
                raise DataError(f"dataset {spec.name}: file not found: {p}")
        train = load_ucr(spec.train, name=spec.name)
        test = load_ucr(spec.test, name=spec.name)
        loaded.append((spec, train, test))

    train_cfg = TrainConfig.from_dict(config.train)
    jobs = []
    for spec, train, test in loaded:
        params = _resolve_params(spec, train, config.sfa)
        for mode in config.modes:
            tasks = make_tasks(train, mode.get("shots"), mode.get("ratio"), config.repeats, config.base_seed)
            for method in config.methods:
                jobs.extend((t, method, train, test, params, train_cfg) for t in tasks)

    if config.n_jobs > 1:
        with ProcessPoolExecutor(config.n_jobs) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(j) for j in jobs]

    records = [CellRecord(t.dataset, m, t.mode, t.repeat_index, t.seed, acc, err) for t, m, acc, err in outcomes]
    # config order for modes and methods, so outputs do not depend on completion order
    mode_rank = {mode_name(m.get("shots"), m.get("ratio")): i for i, m in enumerate(config.modes)}
    method_rank = {m: i for i, m in enumerate(config.methods)}
    records.sort(key=lambda r: (r.dataset, mode_rank[r.mode], method_rank[r.method], r.repeat))

    failed_cells = sorted({(r.dataset, r.mode, r.method) for r in records if r.error})
    failed = [f"{d} {mo} {me}" for d, mo, me in failed_cells]
    results = {}
    for r in records:
        if (r.dataset, r.mode, r.method) in failed_cells:
            continue
        res = results.setdefault((r.dataset, r.mode, r.method), RunResult(r.dataset, r.method, r.mode, []))
        res.accuracies.append(r.accuracy)
        res.seeds.append(r.seed)
    # drop datasets where some method failed so ranks stay comparable
    bad = {(d, mo) for d, mo, _ in failed_cells}
    kept = [v for (d, mo, _), v in results.items() if (d, mo) not in bad]
    return records, aggregate(kept), failed


def records_csv(records: Sequence[CellRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "method", "mode", "repeat", "seed", "accuracy"])
    for r in records:
        acc = repr(r.accuracy) if r.error is None else f"error: {r.error}"
        writer.writerow([r.dataset, r.method, r.mode, r.repeat, r.seed, acc])
    return buf.getvalue()

