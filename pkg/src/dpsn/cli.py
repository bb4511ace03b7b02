"""Command-line interface: ``dpsn fit | predict | explain | benchmark``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dpsn import harness, sfa
from dpsn.errors import ConfigError, DataError, DpsnError, TrainingError
from dpsn.interpret import discover
from dpsn.pipeline import DpsnModel, label_codes
from dpsn.protonet import TrainConfig
from dpsn.svg import overlay_svg
from dpsn.tscore import Dataset, load_ucr

log = logging.getLogger("dpsn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

DEFAULT_SEED = 0
EMIT_CHOICES = {"csv", "json", "svg"}


def _read_params(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read parameter file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"parameter file {path} must hold a flat JSON object")
    return doc


def _split_params(doc: dict) -> tuple[dict, dict]:
    sfa_keys = set(sfa.SfaParams.__dataclass_fields__)
    train_keys = set(TrainConfig.__dataclass_fields__)
    unknown = set(doc) - sfa_keys - train_keys
    if unknown:
        raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    return ({k: v for k, v in doc.items() if k in sfa_keys},
            {k: v for k, v in doc.items() if k in train_keys})


def _emit(value: str) -> set[str]:
    chosen = {v.strip() for v in value.split(",") if v.strip()}
    if not chosen <= EMIT_CHOICES:
        raise argparse.ArgumentTypeError(f"--emit accepts {', '.join(sorted(EMIT_CHOICES))}")
    return chosen


def _sfa_params(sfa_doc: dict, train) -> sfa.SfaParams:
    if "window_len" in sfa_doc and "num_coeffs" in sfa_doc:
        return sfa.SfaParams.from_dict(sfa_doc)
    fixed = {k: v for k, v in sfa_doc.items() if k not in ("window_len", "num_coeffs")}
    params = sfa.select_params(train, **fixed)
    print(f"selected window_len={params.window_len} num_coeffs={params.num_coeffs}")
    return params


def cmd_fit(args) -> int:
    sfa_doc, train_doc = _split_params(_read_params(args.params))
    train = load_ucr(args.train)
    if train.n_classes < 2:
        raise DataError(f"{args.train}: need at least two classes, found {train.n_classes}")
    params = _sfa_params(sfa_doc, train)
    cfg = TrainConfig.from_dict({**train_doc, "seed": args.seed})
    losses: list[float] = []
    model = DpsnModel.fit(train, params, cfg, loss_log=losses)
    model.save(args.out)
    print(f"D={model.sfa.dim} K={train.n_classes} final_loss={losses[-1] + 0.0:.6g}")
    print(f"bundle written to {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = DpsnModel.load(args.bundle)
    test = load_ucr(args.test)
    codes = model.predict_codes(test)
    truth = label_codes(test, model.proto.classes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["index,label,predicted"]
    for ts, c in zip(test.series, codes):
        lines.append(f"{ts.id},{test.classes[ts.label]},{model.proto.classes[c]}")
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    print(f"accuracy={float(np.mean(codes == truth)):.6f} on {test.n_series} series")
    return EXIT_OK


def cmd_explain(args) -> int:
    model = DpsnModel.load(args.bundle)
    train = load_ucr(args.train)
    if train.n_classes < 2:
        raise DataError("explain needs at least two classes (the f-test compares class vs rest)")
    features = model.features(train)
    if features.shape[1] != model.proto.net.input_dim:
        raise DataError(f"bundle expects D={model.proto.net.input_dim}, data gives D={features.shape[1]}")
    # class codes of the data must follow the bundle's class order
    if set(train.classes) != set(model.proto.classes):
        raise DataError("training labels do not match the classes stored in the bundle")
    order = [train.classes.index(c) for c in model.proto.classes]
    train = Dataset.from_arrays([ts.values for ts in train.series],
                                [train.classes[ts.label] for ts in train.series],
                                name=train.name, classes=[train.classes[i] for i in order])
    report = discover(model.proto.net, model.proto.protos, train, features, model.sfa.params, znorm=args.znorm)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if "json" in args.emit:
        report.save(out / "report.json")
    if "svg" in args.emit:
        for k, c in enumerate(report.classes):
            rep = train.series[c.representative_series_id].values
            s = c.discriminative
            title = f"{c.representative_series_id}th, label={c.label}"
            (out / f"class_{k}.svg").write_text(overlay_svg(rep, s.values, s.start, title))
    for c in report.classes:
        s = c.discriminative
        print(f"class {c.label}: representative={c.representative_series_id} "
              f"shapelet start={s.start} length={s.length} f={s.f_score:.6g}")
    return EXIT_OK


def _benchmark_config(args) -> harness.BenchmarkConfig:
    if args.config:
        config = harness.BenchmarkConfig.load(args.config)
    else:
        if not (args.train and args.test):
            raise ConfigError("benchmark needs --config or both --train and --test")
        sfa_doc, train_doc = _split_params(_read_params(args.params))
        name = Path(args.train).stem.replace("_TRAIN", "")
        config = harness.BenchmarkConfig.from_dict({
            "datasets": [{"name": name, "train": str(Path(args.train).resolve()),
                          "test": str(Path(args.test).resolve()), **sfa_doc}],
            "train": train_doc,
        })
    if args.method:
        config.methods = args.method
    if args.shots is not None:
        config.modes = [{"shots": args.shots}]
    elif args.ratio is not None:
        config.modes = [{"ratio": args.ratio}]
    if args.repeats is not None:
        config.repeats = args.repeats
    if args.seed is not None:
        config.base_seed = args.seed
    if args.n_jobs is not None:
        config.n_jobs = args.n_jobs
    config.validate()
    return config


def cmd_benchmark(args) -> int:
    config = _benchmark_config(args)
    records, summaries, failed = harness.run_benchmark(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if "csv" in args.emit:
        (out / "results.csv").write_text(harness.records_csv(records))
    (out / "summary.md").write_text(harness.summary_markdown(summaries, failed))
    if "json" in args.emit:
        (out / "summary.json").write_text(json.dumps(harness.summary_json(summaries, failed), indent=1) + "\n")
    print(harness.summary_markdown(summaries, failed))
    if failed:
        print(f"{len(failed)} cell(s) failed; see results.csv", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpsn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit SFA features and the prototypical network")
    p.add_argument("--train", required=True)
    p.add_argument("--params", help="flat JSON of SFA and training parameters")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, help="bundle directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="classify a test file with a fitted bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="representative samples and discriminative shapelets")
    p.add_argument("--bundle", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit", type=_emit, default={"json", "svg"})
    p.add_argument("--znorm", action="store_true", help="compare z-normalized subsequences")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("benchmark", help="few-shot resampling benchmark")
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--params")
    p.add_argument("--method", action="append", choices=harness.METHODS)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--shots", type=int)
    mode.add_argument("--ratio", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int, help="base seed (repeat i uses seed + i)")
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--emit", type=_emit, default={"csv", "json"})
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, DpsnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
