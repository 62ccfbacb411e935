"""Cross-modal factor analysis, unsupervised and supervised.

The supervised trainer alternates two exact steps:

1. with the projections fixed, solve the box QP over the hinge
   multipliers (alpha for images, gamma for texts);
2. with the multipliers fixed, update both projections from the SVD of

       Z = 2 C2 sum_i I_i' T_i + sum_ij alpha_i gamma_j (y_i.y_j) I_i' T_j,

   which maximises tr(Omega_I' Z Omega_T) over orthonormal pairs.

The predictor is recovered from the multipliers as
``W = sum_i alpha_i u_i' y_i + sum_i gamma_i v_i' y_i``.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .qp import DualState, build_qp, solve_qp
from .tensor import as_matrix, random_orthonormal, svd

__all__ = [
    "Hyperparams",
    "ModelParams",
    "IterationRecord",
    "TrainTrace",
    "FitResult",
    "MODEL_FORMAT_VERSION",
    "project",
    "coupling_matrix",
    "coupling_trace",
    "cfa_distance",
    "fit_unsupervised_cfa",
    "compute_z",
    "update_omegas",
    "recover_w",
    "primal_objective",
    "fit_supervised",
    "fit_predictor",
    "save_model",
    "load_model",
]

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    c1: float = 1.0
    c2: float = 1.0
    h: float = 1.0
    shared_dim: int = 2
    max_iters: int = 100
    qp_tol: float = 1e-8
    outer_tol: float = 1e-4
    qp_max_sweeps: Optional[int] = None

    def __post_init__(self):
        if not self.c1 > 0 or not self.c2 > 0 or not self.h > 0:
            raise ValueError("c1, c2 and h must be positive")
        if self.shared_dim < 1:
            raise ValueError("shared_dim must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not self.qp_tol > 0 or self.outer_tol < 0:
            raise ValueError("qp_tol must be positive and outer_tol non-negative")

    def check_dims(self, d_image, d_text):
        if self.shared_dim > min(d_image, d_text):
            raise ValueError(
                f"shared_dim {self.shared_dim} exceeds min(d_image, d_text) = "
                f"{min(d_image, d_text)}"
            )

    @classmethod
    def from_dict(cls, raw):
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ModelParams:
    omega_image: np.ndarray
    omega_text: np.ndarray
    w: np.ndarray

    @property
    def shared_dim(self):
        return self.omega_image.shape[1]

    @property
    def num_classes(self):
        return self.w.shape[1]

    def check(self, atol=1e-8):
        """Raise ValueError unless the shape and orthonormality invariants hold."""
        oi = as_matrix(self.omega_image, "omega_image")
        ot = as_matrix(self.omega_text, "omega_text")
        w = as_matrix(self.w, "w")
        d = oi.shape[1]
        if ot.shape[1] != d or w.shape[0] != d:
            raise ValueError(
                f"inconsistent shapes: omega_image {oi.shape}, omega_text {ot.shape}, w {w.shape}"
            )
        for name, om in (("omega_image", oi), ("omega_text", ot)):
            dev = np.abs(om.T @ om - np.eye(d)).max()
            if dev > atol:
                raise ValueError(f"{name} is not orthonormal (max deviation {dev:.3e})")
        return self


@dataclass
class IterationRecord:
    iteration: int
    primal_objective: float
    qp_dual_objective: float
    qp_converged: bool
    qp_sweeps: int
    elapsed: float


@dataclass
class TrainTrace:
    records: List[IterationRecord] = field(default_factory=list)
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    @property
    def primal(self):
        return np.array([r.primal_objective for r in self.records])

    @property
    def dual(self):
        return np.array([r.qp_dual_objective for r in self.records])

    @property
    def all_qp_converged(self):
        return all(r.qp_converged for r in self.records)


@dataclass
class FitResult:
    params: ModelParams
    trace: TrainTrace
    duals: DualState
    omega_history: list = field(default_factory=list)

    def __iter__(self):
        # allows ``params, trace = fit_supervised(...)``
        return iter((self.params, self.trace))


def project(features, omega):
    """Map row-vector features into the shared space (``features @ omega``)."""
    x = np.asarray(features, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if x.shape[-1] != omega.shape[0]:
        raise ValueError(
            f"feature length {x.shape[-1]} does not match projection rows {omega.shape[0]}"
        )
    return x @ omega


def coupling_matrix(dataset):
    """``C = sum_i I_i' T_i``, the cross-modal covariance of the dataset."""
    return dataset.images.T @ dataset.texts


def coupling_trace(dataset, omega_image, omega_text):
    return float(np.trace(omega_image.T @ coupling_matrix(dataset) @ omega_text))


def cfa_distance(dataset, omega_image, omega_text):
    """Sum of squared distances between paired projections."""
    diff = dataset.images @ omega_image - dataset.texts @ omega_text
    return float(np.sum(diff * diff))


def update_omegas(z, d):
    """Orthonormal pair maximising ``tr(Omega_I' z Omega_T)``.

    The maximiser is the top-``d`` left and right singular vectors of ``z``
    and the attained value is the sum of the top ``d`` singular values.
    """
    z = as_matrix(z, "z")
    if d < 1 or d > min(z.shape):
        raise ValueError(f"d = {d} must lie in [1, {min(z.shape)}]")
    res = svd(z)
    return res.u[:, :d].copy(), res.vt[:d].T.copy()


def fit_unsupervised_cfa(dataset, d):
    """Unsupervised CFA projections.

    Minimising the paired projection distance under orthonormality is the
    same as maximising ``tr(Omega_I' C Omega_T)`` with ``C = sum_i I_i' T_i``,
    so the answer is the leading singular pairs of ``C``.
    """
    if d > min(dataset.d_image, dataset.d_text):
        raise ValueError("d must not exceed min(d_image, d_text)")
    return update_omegas(coupling_matrix(dataset), d)


def compute_z(dataset, duals, c2):
    alpha = np.asarray(duals.alpha, dtype=np.float64)
    gamma = np.asarray(duals.gamma, dtype=np.float64)
    if alpha.shape[0] != dataset.n or gamma.shape[0] != dataset.n:
        raise ValueError("dual vectors do not match the dataset size")
    y = dataset.labels
    # sum_ij a_i g_j (y_i.y_j) I_i' T_j factors through the label space
    left = dataset.images.T @ (alpha[:, None] * y)
    right = (gamma[:, None] * y).T @ dataset.texts
    return 2.0 * c2 * coupling_matrix(dataset) + left @ right


def recover_w(dataset, duals, omega_image, omega_text):
    y = dataset.labels
    u = project(dataset.images, omega_image)
    v = project(dataset.texts, omega_text)
    return u.T @ (duals.alpha[:, None] * y) + v.T @ (duals.gamma[:, None] * y)


def primal_objective(dataset, params, hp):
    """Regularised two-modality hinge objective with the CFA coupling term.

    Slacks are taken at their smallest feasible values,
    ``max(0, h - (x Omega) W y')`` per modality.
    """
    y = dataset.labels
    u = project(dataset.images, params.omega_image)
    v = project(dataset.texts, params.omega_text)
    w = params.w
    xi = np.maximum(0.0, hp.h - np.sum((u @ w) * y, axis=1))
    eps = np.maximum(0.0, hp.h - np.sum((v @ w) * y, axis=1))
    dist = u - v
    return float(
        0.5 * np.sum(w * w)
        + hp.c1 * (xi.sum() + eps.sum())
        + hp.c2 * np.sum(dist * dist)
    )


def _solve_duals(dataset, omega_image, omega_text, hp, warm):
    problem = build_qp(
        project(dataset.images, omega_image),
        project(dataset.texts, omega_text),
        dataset.labels,
        hp.h,
        hp.c1,
    )
    return solve_qp(problem, warm_start=warm, tol=hp.qp_tol, max_sweeps=hp.qp_max_sweeps)


def fit_predictor(dataset, omega_image, omega_text, hp, warm=None):
    """Max-margin predictor at fixed projections: one QP solve, then W."""
    sol = _solve_duals(dataset, omega_image, omega_text, hp, warm)
    w = recover_w(dataset, sol.duals, omega_image, omega_text)
    return ModelParams(omega_image, omega_text, w), sol


def _check_dataset(dataset, hp):
    if dataset.n < 1:
        raise ValueError("empty dataset")
    hp.check_dims(dataset.d_image, dataset.d_text)


def fit_supervised(dataset, hp, init="unsupervised", seed=0, keep_omegas=False):
    """Alternating training of projections and predictor.

    Parameters
    ----------
    dataset : Dataset
    hp : Hyperparams
    init : {"unsupervised", "random"}
        Start from the unsupervised CFA solution or from seeded random
        orthonormal matrices.
    seed : int
        Used by ``init="random"`` only.
    keep_omegas : bool
        Store the projections produced by every iteration on the result.

    Returns
    -------
    FitResult
        Unpacks as ``(params, trace)``. Iteration ``t`` of the trace holds
        the primal objective of the projections entering that iteration
        together with the predictor recovered from its QP solution, and the
        QP's dual value. Training stops after ``hp.max_iters`` iterations or
        once the relative change of the primal objective falls below
        ``hp.outer_tol`` (0 disables early stopping). The returned predictor
        comes from a final QP solve at the final projections.
    """
    _check_dataset(dataset, hp)
    d = hp.shared_dim
    if init == "unsupervised":
        omega_i, omega_t = fit_unsupervised_cfa(dataset, d)
    elif init == "random":
        omega_i = random_orthonormal(dataset.d_image, d, seed)
        omega_t = random_orthonormal(dataset.d_text, d, seed + 1)
    else:
        raise ValueError(f"unknown init {init!r}")

    trace = TrainTrace()
    history = [(omega_i, omega_t)] if keep_omegas else []
    duals = None
    start = time.perf_counter()
    prev = None
    for t in range(1, hp.max_iters + 1):
        params, sol = fit_predictor(dataset, omega_i, omega_t, hp, warm=duals)
        duals = sol.duals
        if not sol.converged:
            logger.warning(
                "QP at iteration %d stopped after %d sweeps (violation %.3e)",
                t, sol.sweeps, sol.violation,
            )
        value = primal_objective(dataset, params, hp)
        trace.records.append(
            IterationRecord(
                iteration=t,
                primal_objective=value,
                qp_dual_objective=sol.objective,
                qp_converged=sol.converged,
                qp_sweeps=sol.sweeps,
                elapsed=time.perf_counter() - start,
            )
        )
        omega_i, omega_t = update_omegas(compute_z(dataset, duals, hp.c2), d)
        if keep_omegas:
            history.append((omega_i, omega_t))
        if hp.outer_tol > 0 and prev is not None and abs(value - prev) <= hp.outer_tol * abs(prev):
            trace.stopped_early = t < hp.max_iters
            break
        prev = value

    params, sol = fit_predictor(dataset, omega_i, omega_t, hp, warm=duals)
    return FitResult(params.check(), trace, sol.duals, history)


def _rows(a):
    return [[float(x) for x in row] for row in np.asarray(a)]


def save_model(params, path, hp=None, extra=None):
    """Write the model as JSON; floats use the shortest exact repr."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "d_image": int(params.omega_image.shape[0]),
        "d_text": int(params.omega_text.shape[0]),
        "shared_dim": int(params.shared_dim),
        "num_classes": int(params.num_classes),
        "hyperparams": hp.to_dict() if hp is not None else None,
        "omega_image": _rows(params.omega_image),
        "omega_text": _rows(params.omega_text),
        "w": _rows(params.w),
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path, return_document=False):
    """Read a model file and check its invariants.

    With ``return_document`` the parsed JSON is returned as well, for
    callers that need the stored hyperparameters or preprocessing.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    params = ModelParams(
        np.array(doc["omega_image"], dtype=np.float64).reshape(doc["d_image"], doc["shared_dim"]),
        np.array(doc["omega_text"], dtype=np.float64).reshape(doc["d_text"], doc["shared_dim"]),
        np.array(doc["w"], dtype=np.float64).reshape(doc["shared_dim"], doc["num_classes"]),
    )
    params.check()
    return (params, doc) if return_document else params
