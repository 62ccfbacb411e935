"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run under pytest, or directly with ``python3 tests/test_acceptance.py``.
"""

import json
import sys
import tempfile
import time
from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from supcfa.classify import Prediction, classification_rate
from supcfa.cli import main as cli_main
from supcfa.dataset import sign_labels
from supcfa.harness import builtin_config, run_cv
from supcfa.model import (
    coupling_trace,
    fit_supervised,
    fit_unsupervised_cfa,
    update_omegas,
)
from supcfa.qp import brute_force_qp, build_qp, solve_qp
from supcfa.tensor import random_orthonormal, svd


@lru_cache(maxsize=None)
def benchmark_run():
    """100 outer iterations on the benchmark data with early stopping off."""
    config = builtin_config("benchmark")
    data = config.load_data()
    hp = replace(config.hyperparams, max_iters=100, outer_tol=0.0)
    start = time.perf_counter()
    result = fit_supervised(data, hp, init=config.init, seed=config.seed, keep_omegas=True)
    return result, time.perf_counter() - start


def _random_qp(rng, n_max=3, m_max=4, d_max=3):
    n, m, d = (int(rng.integers(1, k + 1)) for k in (n_max, m_max, d_max))
    m = max(m, 2)
    y = sign_labels(rng.integers(0, m, n), m)
    c1 = float(rng.uniform(0.1, 3.0))
    return build_qp(rng.standard_normal((n, d)), rng.standard_normal((n, d)), y, 1.0, c1)


def qp_oracle():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        p = _random_qp(np.random.default_rng(seed))
        worst = max(worst, abs(solve_qp(p).objective - p.objective(brute_force_qp(p))))
    elapsed = time.perf_counter() - start
    return worst <= 1e-6 and elapsed < 5.0, f"max gap {worst:.2e}, {elapsed:.2f} s"


def psd_invariant():
    worst = np.inf
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        p = _random_qp(rng, n_max=40, m_max=6, d_max=6)
        m = p.hessian
        worst = min(worst, np.linalg.eigvalsh(m).min() / max(np.linalg.norm(m, 2), 1e-300))
    return worst >= -1e-8, f"min eigenvalue / norm {worst:.2e}"


def procrustes_optimality():
    margin = np.inf
    for k in range(10):
        rng = np.random.default_rng(2000 + k)
        rows, cols = int(rng.integers(2, 10)), int(rng.integers(2, 10))
        d = int(rng.integers(1, min(rows, cols) + 1))
        z = rng.standard_normal((rows, cols))
        oi, ot = update_omegas(z, d)
        best = np.trace(oi.T @ z @ ot)
        for j in range(100):
            ri = random_orthonormal(rows, d, 10_000 * k + 2 * j)
            rt = random_orthonormal(cols, d, 10_000 * k + 2 * j + 1)
            margin = min(margin, best - np.trace(ri.T @ z @ rt))
    return margin >= -1e-9, f"min margin {margin:.3e}"


def orthonormality():
    result, _ = benchmark_run()
    worst = 0.0
    for oi, ot in result.omega_history[1:]:
        for om in (oi, ot):
            worst = max(worst, np.abs(om.T @ om - np.eye(om.shape[1])).max())
    n = len(result.omega_history) - 1
    return worst <= 1e-8, f"{n} iterations, max deviation {worst:.2e}"


def unsupervised_reduction():
    config = builtin_config("benchmark")
    data = config.load_data()
    hp = replace(config.hyperparams, c1=1e-12, max_iters=20)
    params, _ = fit_supervised(data, hp, init="random", seed=config.seed)
    oi, ot = fit_unsupervised_cfa(data, hp.shared_dim)
    ref = coupling_trace(data, oi, ot)
    gap = abs(coupling_trace(data, params.omega_image, params.omega_text) - ref)
    return gap <= 1e-6, f"trace gap {gap:.2e} (reference {ref:.6g})"


def svd_contract():
    shapes = [(200, 200), (200, 60), (60, 200), (150, 149), (97, 33), (8, 8), (5, 1), (1, 7)]
    start = time.perf_counter()
    worst = 0.0
    for k, shape in enumerate(shapes):
        a = np.random.default_rng(3000 + k).standard_normal(shape)
        res = svd(a)
        worst = max(worst, np.linalg.norm(res.reconstruct() - a) / np.linalg.norm(a))
    elapsed = time.perf_counter() - start
    return worst <= 1e-10 and elapsed < 10.0, f"max relative error {worst:.2e}, {elapsed:.2f} s"


def convergence():
    result, elapsed = benchmark_run()
    f = np.array(result.trace.primal)
    tail = f[-10:]
    change = (tail.max() - tail.min()) / abs(tail[-1])
    ok = len(f) == 100 and change < 1e-3 and elapsed < 60.0
    return ok, f"{len(f)} iterations, tail relative change {change:.2e}, {elapsed:.2f} s"


def cv_comparison():
    start = time.perf_counter()
    bench = run_cv(builtin_config("benchmark"))
    clean = run_cv(builtin_config("noiseless"))
    elapsed = time.perf_counter() - start
    sup, base = bench.median("supcfa"), bench.median("cfa_baseline")
    clean_mean = clean.mean("supcfa")
    ok = sup >= base and clean_mean >= 0.95 and elapsed < 600.0
    return ok, (
        f"benchmark median supcfa {sup:.4f} vs baseline {base:.4f}; "
        f"noiseless supcfa mean {clean_mean:.4f}; {elapsed:.1f} s"
    )


def rate_metric():
    truth = [0, 1, 2, 1]
    cases = [([0, 1, 2, 1], 1.0), ([0, 0, 2, 0], 0.5), ([0, 1, 0, 1], 0.75),
             ([2, 0, 0, 2], 0.0), ([1, 1, 1, 1], 0.5)]
    ok = True
    for predicted, expected in cases:
        preds = [Prediction(np.zeros(3), c) for c in predicted]
        ok &= classification_rate(preds, truth) == expected
        ok &= classification_rate(predicted, truth) == expected
    return bool(ok), f"{len(cases)} toy lists"


def _run_commands(root):
    root = Path(root)
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n": 60, "d_image": 8, "d_text": 6, "num_classes": 3,
                                "shared_dim": 3, "noise_sigma": 0.2, "seed": 7}))
    hyper = root / "hp.json"
    hyper.write_text(json.dumps({"shared_dim": 3, "max_iters": 15}))
    commands = [
        ["synth", "--spec", spec, "--out", root / "data.jsonl"],
        ["synth", "--spec", spec, "--out", root / "pair", "--format", "csv-pair"],
        ["train", "--data", root / "data.jsonl", "--hyper", hyper, "--init", "random",
         "--seed", "7", "--model-out", root / "model.json", "--trace-out", root / "trace.csv"],
        ["train", "--data", root / "pair", "--format", "csv-pair", "--hyper", hyper,
         "--standardize", "--model-out", root / "model_std.json"],
        ["predict", "--model", root / "model.json", "--modality", "image",
         "--input", root / "data.jsonl", "--out", root / "pred.csv"],
        ["cv", "--config", "benchmark", "--out-dir", root / "cv"],
        ["convergence", "--config", "benchmark", "--out", root / "curve.csv",
         "--no-early-stop"],
    ]
    for argv in commands:
        code = cli_main([str(a) for a in argv])
        if code != 0:
            raise RuntimeError(f"command {argv[0]} exited with {code}")
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


def determinism():
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        first, second = _run_commands(a), _run_commands(b)
    differing = [k for k in first if first[k] != second.get(k)]
    ok = not differing and first.keys() == second.keys()
    return ok, f"{len(first)} output files compared, {len(differing)} differ"


CRITERIA = {
    "qp_oracle_equivalence": qp_oracle,
    "psd_invariant": psd_invariant,
    "procrustes_optimality": procrustes_optimality,
    "orthonormality": orthonormality,
    "unsupervised_reduction": unsupervised_reduction,
    "svd_contract": svd_contract,
    "convergence": convergence,
    "cv_comparison": cv_comparison,
    "rate_metric": rate_metric,
    "determinism": determinism,
}


def check(name):
    ok, detail = CRITERIA[name]()
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    return ok, line


@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name):
    from conftest import ACCEPTANCE_LINES

    ok, line = check(name)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


if __name__ == "__main__":
    results = [check(name)[0] for name in CRITERIA]
    sys.exit(0 if all(results) else 1)
