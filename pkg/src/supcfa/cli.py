"""Command-line interface.

Subcommands::

    supcfa synth --spec SPEC.json --out data.jsonl
    supcfa train --data data.jsonl --hyper hp.json --model-out model.json --trace-out trace.csv
    supcfa predict --model model.json --modality image --input data.jsonl --out pred.csv
    supcfa cv --config experiment.json --out-dir results/
    supcfa convergence --config experiment.json --out curve.csv

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
Progress goes to stderr; data only to the named files.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classify import predict_many
from .dataset import (
    DatasetError,
    Standardizer,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .harness import (
    METHODS,
    ExperimentConfig,
    ExperimentError,
    builtin_config,
    emit_boxplot_data,
    emit_convergence,
    load_config,
    run_cv,
)
from .model import Hyperparams, fit_supervised, load_model, save_model

logger = logging.getLogger("supcfa")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"{what} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} file {path} is not valid JSON: {exc}")


def _check_out(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")
    return Path(path)


def _check_in(path, what):
    if not Path(path).exists() and not (
        Path(str(path) + ".image.csv").exists()
    ):
        raise UsageError(f"{what} not found: {path}")
    return path


def cmd_synth(args):
    out = _check_out(args.out)
    raw = _read_json(args.spec, "synthetic spec")
    try:
        spec = SyntheticSpec.from_dict(raw)
        dataset = generate_synthetic(spec)
    except DatasetError as exc:
        raise UsageError(f"invalid synthetic spec: {exc}")
    save_dataset(dataset, out, args.format)
    print(
        f"n={dataset.n} d_image={dataset.d_image} d_text={dataset.d_text} "
        f"m={dataset.num_classes}",
        file=sys.stderr,
    )
    return EXIT_OK


def _hyperparams(path):
    if path is None:
        return Hyperparams()
    raw = _read_json(path, "hyperparameter")
    try:
        return Hyperparams.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid hyperparameters: {exc}")


def cmd_train(args):
    model_out = _check_out(args.model_out)
    trace_out = _check_out(args.trace_out) if args.trace_out else None
    dataset = load_dataset(_check_in(args.data, "data file"), args.format)
    hp = _hyperparams(args.hyper)
    try:
        hp.check_dims(dataset.d_image, dataset.d_text)
    except ValueError as exc:
        raise UsageError(str(exc))

    extra = {}
    if args.standardize:
        scaler = Standardizer.fit(dataset)
        dataset = scaler.transform(dataset)
        extra["standardizer"] = scaler.to_dict()
    logger.info("training on %d documents (d=%d, T=%d)", dataset.n, hp.shared_dim, hp.max_iters)
    result = fit_supervised(dataset, hp, init=args.init, seed=args.seed)
    if not result.trace.all_qp_converged:
        logger.warning("some QP solves hit the sweep cap; see the trace")
    extra["training"] = {"init": args.init, "seed": args.seed, "iterations": len(result.trace)}
    save_model(result.params, model_out, hp=hp, extra=extra)
    load_model(model_out)
    if trace_out is not None and len(result.trace):
        emit_convergence(result.trace, trace_out)
    elif trace_out is not None:
        with open(trace_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("iteration,primal_objective,qp_dual_objective\n")
    logger.info("model written to %s", model_out)
    return EXIT_OK


def _read_query_features(path, modality):
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                if line.strip():
                    rec = json.loads(line)
                    if modality not in rec:
                        raise DatasetError(f"record {i} has no {modality!r} vector")
                    rows.append([float(v) for v in rec[modality]])
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if not rows:
        raise DatasetError(f"empty input file: {path}")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise DatasetError(f"input rows have differing lengths {sorted(lengths)}")
    return np.array(rows, dtype=np.float64)


def cmd_predict(args):
    out = _check_out(args.out)
    params, doc = load_model(_check_in(args.model, "model file"), return_document=True)
    x = _read_query_features(_check_in(args.input, "input file"), args.modality)
    if doc.get("standardizer"):
        x = Standardizer.from_dict(doc["standardizer"]).transform_features(x, args.modality)
    scores, classes = predict_many(x, args.modality, params)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "predicted_class"] + [f"score_{k}" for k in range(scores.shape[1])])
        for i, (c, row) in enumerate(zip(classes, scores)):
            w.writerow([i, int(c)] + [repr(float(v)) for v in row])
    return EXIT_OK


def _experiment_config(path):
    try:
        if Path(path).exists():
            return load_config(path)
        if path in ("benchmark", "noiseless"):
            return builtin_config(path)
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}")
    except (ExperimentError, DatasetError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}")


def cmd_cv(args):
    out_dir = Path(args.out_dir)
    if not out_dir.parent.resolve().is_dir():
        raise UsageError(f"parent of output directory does not exist: {out_dir.parent}")
    config = _experiment_config(args.config)
    if args.methods:
        config = ExperimentConfig.from_dict(
            {**config.to_dict(), "methods": args.methods}, base_dir=config.base_dir
        )
    out_dir.mkdir(exist_ok=True)
    report = run_cv(config)
    emit_boxplot_data(report, out_dir / "boxplot.csv", out_dir / "rates.csv")
    for fold, trace in enumerate(report.traces):
        emit_convergence(trace, out_dir / f"convergence_fold{fold:02d}.csv")
    with open(out_dir / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(
            {"config": report.config, "summary": report.summary(), "rates": report.rates,
             "test_sizes": report.test_sizes},
            fh, indent=1, sort_keys=True,
        )
        fh.write("\n")
    for method, s in report.summary().items():
        logger.info("%s median %.4f (q1 %.4f, q3 %.4f)", method, s["median"], s["q1"], s["q3"])
    return EXIT_OK


def cmd_convergence(args):
    out = _check_out(args.out)
    config = _experiment_config(args.config)
    hp = config.hyperparams
    if args.max_iters is not None:
        hp = replace(hp, max_iters=args.max_iters)
    if args.no_early_stop:
        hp = replace(hp, outer_tol=0.0)
    dataset = config.load_data()
    if config.standardize:
        dataset = Standardizer.fit(dataset).transform(dataset)
    result = fit_supervised(dataset, hp, init=config.init, seed=config.seed)
    if len(result.trace) == 0:
        raise UsageError("max_iters is 0; nothing to record")
    emit_convergence(result.trace, out)
    logger.info("%d iterations, final objective %.6g", len(result.trace), result.trace.primal[-1])
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="supcfa", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic two-modal dataset")
    p.add_argument("--spec", required=True, help="JSON generator spec")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["jsonl", "csv-pair"], default="jsonl")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit projections and predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["jsonl", "csv-pair"], default="jsonl")
    p.add_argument("--hyper", help="JSON hyperparameters (defaults if omitted)")
    p.add_argument("--init", choices=["unsupervised", "random"], default="unsupervised")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action="store_true",
                   help="centre/scale features with training statistics")
    p.add_argument("--model-out", required=True)
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify single-modality queries")
    p.add_argument("--model", required=True)
    p.add_argument("--modality", choices=["image", "text"], required=True)
    p.add_argument("--input", required=True, help=".jsonl dataset or CSV of feature rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="k-fold comparison against the CFA baseline")
    p.add_argument("--config", required=True,
                   help="experiment JSON, or 'benchmark' / 'noiseless' for the shipped ones")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--methods", nargs="+", choices=list(METHODS))
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("convergence", help="objective per iteration on the full dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--no-early-stop", action="store_true")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"supcfa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ExperimentError, ValueError, OSError) as exc:
        print(f"supcfa {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
