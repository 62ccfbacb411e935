"""Cross-validated comparison of supervised CFA against the unsupervised
CFA baseline, plus CSV emitters for boxplot and convergence data."""

import csv
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .classify import evaluate
from .dataset import (
    DatasetError,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    make_folds,
    standardize,
)
from .model import Hyperparams, fit_predictor, fit_supervised, fit_unsupervised_cfa

__all__ = [
    "METHODS",
    "ExperimentError",
    "ExperimentConfig",
    "ExperimentReport",
    "load_config",
    "builtin_config",
    "run_cv",
    "run_baseline_cfa",
    "run_supcfa",
    "boxplot_summary",
    "emit_convergence",
    "emit_boxplot_data",
]

logger = logging.getLogger(__name__)

METHODS = ("supcfa", "cfa_baseline")


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """What to run: data source, hyperparameters and the CV layout.

    ``dataset`` is either ``{"synthetic": {...generator spec...}}`` or
    ``{"path": ..., "format": "jsonl" | "csv-pair"}``.
    """

    dataset: dict
    hyperparams: Hyperparams
    num_folds: int = 10
    seed: int = 0
    methods: tuple = METHODS
    standardize: bool = False
    init: str = "unsupervised"
    base_dir: Optional[str] = None

    def __post_init__(self):
        if self.num_folds < 2:
            raise ExperimentError("num_folds must be at least 2")
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ExperimentError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ExperimentError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ExperimentError("methods must not repeat")
        if not ("synthetic" in self.dataset) ^ ("path" in self.dataset):
            raise ExperimentError("dataset needs exactly one of 'synthetic' or 'path'")

    @classmethod
    def from_dict(cls, raw, base_dir=None):
        raw = dict(raw)
        known = {"dataset", "hyperparams", "num_folds", "seed", "methods", "standardize", "init"}
        unknown = set(raw) - known
        if unknown:
            raise ExperimentError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in raw:
            raise ExperimentError("config is missing 'dataset'")
        try:
            hp = Hyperparams.from_dict(raw.pop("hyperparams", {}))
        except (TypeError, ValueError) as exc:
            raise ExperimentError(f"invalid hyperparams: {exc}") from exc
        return cls(hyperparams=hp, base_dir=base_dir, **raw)

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "hyperparams": self.hyperparams.to_dict(),
            "num_folds": self.num_folds,
            "seed": self.seed,
            "methods": list(self.methods),
            "standardize": self.standardize,
            "init": self.init,
        }

    def load_data(self):
        if "synthetic" in self.dataset:
            return generate_synthetic(SyntheticSpec.from_dict(self.dataset["synthetic"]))
        path = Path(self.dataset["path"])
        if not path.is_absolute() and self.base_dir is not None:
            path = Path(self.base_dir) / path
        return load_dataset(path, self.dataset.get("format", "jsonl"))


def load_config(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ExperimentConfig.from_dict(raw, base_dir=str(path.parent))


def builtin_config(name="benchmark"):
    """Shipped configs: ``benchmark`` and ``noiseless``."""
    text = resources.files("supcfa").joinpath("configs", f"{name}.json").read_text("utf-8")
    return ExperimentConfig.from_dict(json.loads(text))


@dataclass
class ExperimentReport:
    config: dict
    rates: Dict[str, List[float]]
    traces: list = field(default_factory=list)
    test_sizes: List[int] = field(default_factory=list)
    fold_assignments: Optional[np.ndarray] = None

    def summary(self):
        return {m: boxplot_summary(r) for m, r in self.rates.items()}

    def median(self, method):
        return float(np.median(self.rates[method]))

    def mean(self, method):
        return float(np.mean(self.rates[method]))


def boxplot_summary(rates):
    """Five-number summary; quartiles interpolate linearly between order
    statistics (Hyndman-Fan type 7)."""
    r = np.asarray(rates, dtype=np.float64)
    q = np.percentile(r, [0, 25, 50, 75, 100], method="linear")
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))


def run_baseline_cfa(train, test, hp):
    """Unsupervised CFA projections, then the max-margin predictor at those
    fixed projections; returns the classification rate on ``test``."""
    omega_i, omega_t = fit_unsupervised_cfa(train, hp.shared_dim)
    params, _ = fit_predictor(train, omega_i, omega_t, hp)
    return evaluate(params, test)


def run_supcfa(train, test, hp, init="unsupervised", seed=0):
    result = fit_supervised(train, hp, init=init, seed=seed)
    return evaluate(result.params, test), result.trace


def run_cv(config, dataset=None):
    """k-fold cross-validation of every configured method.

    Each fold serves once as the test set; the others are merged for
    training. Both the image and the text of every test document are
    classified. Pass ``dataset`` to skip loading it from the config.
    """
    hp = config.hyperparams
    if dataset is None:
        dataset = config.load_data()
    hp.check_dims(dataset.d_image, dataset.d_text)
    try:
        plan = make_folds(dataset, config.num_folds, config.seed)
    except DatasetError as exc:
        raise ExperimentError(str(exc)) from exc

    rates = {m: [] for m in config.methods}
    traces, sizes = [], []
    for fold in range(config.num_folds):
        train = dataset.subset(plan.train_index(fold))
        test = dataset.subset(plan.test_index(fold))
        missing = np.flatnonzero(train.class_counts() == 0)
        if missing.size:
            raise ExperimentError(
                f"fold {fold}: classes {missing.tolist()} have no training documents; "
                "try a different seed or fewer folds"
            )
        if config.standardize:
            train, test = standardize(train, test)
        for method in config.methods:
            if method == "supcfa":
                rate, trace = run_supcfa(train, test, hp, init=config.init, seed=config.seed)
                traces.append(trace)
            else:
                rate = run_baseline_cfa(train, test, hp)
            rates[method].append(rate)
            logger.info("fold %d %s rate %.4f", fold, method, rate)
        sizes.append(test.n)
    return ExperimentReport(config.to_dict(), rates, traces, sizes, plan.assignments)


def _fmt(x):
    return repr(float(x))


def emit_convergence(trace, path):
    if len(trace) == 0:
        raise ValueError("empty training trace")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "primal_objective", "qp_dual_objective"])
        for r in trace.records:
            w.writerow([r.iteration, _fmt(r.primal_objective), _fmt(r.qp_dual_objective)])
    return Path(path)


def emit_boxplot_data(report, path, rates_path=None):
    """Write the per-method five-number summary and, alongside it, the raw
    per-fold rates in long format (``<stem>_rates.csv`` by default)."""
    if not report.rates:
        raise ValueError("report holds no methods")
    path = Path(path)
    if rates_path is None:
        rates_path = path.with_name(path.stem + "_rates.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "min", "q1", "median", "q3", "max"])
        for method, s in report.summary().items():
            w.writerow([method] + [_fmt(s[k]) for k in ("min", "q1", "median", "q3", "max")])
    with open(rates_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "fold", "rate"])
        for method, rates in report.rates.items():
            for fold, rate in enumerate(rates):
                w.writerow([method, fold, _fmt(rate)])
    return path, Path(rates_path)
