"""Box-constrained concave QP over the image/text hinge multipliers.

The problem is

    maximize   -1/2 a'Aa - a'Bg - 1/2 g'Gg + h * sum(a + g)
    subject to 0 <= a_i, g_i <= C1

with ``A_ij = (y_i.y_j)(u_i.u_j)``, ``B_ij = (y_i.y_j)(u_i.v_j)`` and
``G_ij = (y_i.y_j)(v_i.v_j)``, where ``u_i``/``v_i`` are the projected image
and text features of document i and ``y_i`` its sign label vector. Stacking
``x = [a; g]`` gives ``-1/2 x'Mx + h 1'x`` with ``M = [[A, B], [B', G]]``,
the Gram matrix of the vectors ``y_i (x) u_i`` and ``y_i (x) v_i``. The
quadratic part equals ``-1/2 ||W||_F^2`` for the predictor
``W = sum_i a_i u_i' y_i + g_i v_i' y_i``, so this is the Lagrange dual of
the two-modality hinge problem at fixed projections.
"""

import itertools
from dataclasses import dataclass
import numpy as np

from ._sweep import coordinate_sweep

__all__ = [
    "QpProblem",
    "DualState",
    "QpSolution",
    "build_qp",
    "solve_qp",
    "brute_force_qp",
    "kkt_violation",
]


@dataclass(frozen=True)
class QpProblem:
    gram_ii: np.ndarray
    gram_it: np.ndarray
    gram_tt: np.ndarray
    margin_h: float
    box_c1: float

    @property
    def n(self):
        return self.gram_ii.shape[0]

    @property
    def hessian(self):
        """The stacked ``2n x 2n`` matrix M (negated Hessian of the objective)."""
        a, b, g = self.gram_ii, self.gram_it, self.gram_tt
        return np.block([[a, b], [b.T, g]])

    def objective(self, duals):
        x = duals.stacked()
        return float(-0.5 * x @ self.hessian @ x + self.margin_h * x.sum())

    def gradient(self, duals):
        x = duals.stacked()
        return self.margin_h - self.hessian @ x


@dataclass(frozen=True)
class DualState:
    alpha: np.ndarray
    gamma: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_stacked(cls, x):
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0] // 2
        return cls(x[:n].copy(), x[n:].copy())

    def stacked(self):
        return np.concatenate([self.alpha, self.gamma])

    def is_feasible(self, c1, atol=0.0):
        x = self.stacked()
        return bool(np.all(x >= -atol) and np.all(x <= c1 + atol))

    def scaled(self, factor):
        return DualState(self.alpha * factor, self.gamma * factor)


@dataclass(frozen=True)
class QpSolution:
    duals: DualState
    objective: float
    converged: bool
    sweeps: int
    violation: float
    history: tuple = ()


def build_qp(projected_images, projected_texts, labels, h, c1):
    u = np.asarray(projected_images, dtype=np.float64)
    v = np.asarray(projected_texts, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if u.ndim != 2 or v.ndim != 2 or y.ndim != 2:
        raise ValueError("projected features and labels must be 2-D")
    if not (u.shape[0] == v.shape[0] == y.shape[0]):
        raise ValueError(
            f"inconsistent document counts: {u.shape[0]}, {v.shape[0]}, {y.shape[0]}"
        )
    if u.shape[1] != v.shape[1]:
        raise ValueError(f"projection widths differ: {u.shape[1]} vs {v.shape[1]}")
    if c1 <= 0:
        raise ValueError("c1 must be positive")
    yy = y @ y.T
    a = yy * (u @ u.T)
    g = yy * (v @ v.T)
    # exact symmetry; the products above agree only to rounding
    a = 0.5 * (a + a.T)
    g = 0.5 * (g + g.T)
    b = yy * (u @ v.T)
    return QpProblem(a, b, g, float(h), float(c1))


def kkt_violation(x, grad, c1):
    """Largest projected-gradient magnitude of a box-constrained maximisation."""
    at_lower = x <= 0.0
    at_upper = x >= c1
    viol = np.abs(grad)
    viol = np.where(at_lower, np.maximum(grad, 0.0), viol)
    viol = np.where(at_upper, np.maximum(-grad, 0.0), viol)
    return float(viol.max()) if viol.size else 0.0


_DENSE_LIMIT = 1000


def _cg(a, b, iters, rtol=1e-12):
    """Conjugate gradients for PSD ``a x = b`` from zero."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    stop = rtol * rr
    for _ in range(iters):
        ap = a @ p
        pap = p @ ap
        if pap <= 0 or rr <= stop:
            break
        step = rr / pap
        x += step * p
        r -= step * ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def _split_gradient(sub, g, rcond=1e-10):
    """Newton direction of ``sub`` on its numerical range, and the part of
    ``g`` in its numerical null space."""
    if sub.shape[0] > _DENSE_LIMIT:
        d = _cg(sub, g, 50)
        return d, g - sub @ d
    w, v = np.linalg.eigh(sub)
    keep = w > rcond * max(w[-1], 0.0)
    if not keep.any():
        return np.zeros_like(g), g
    coef = v.T @ g
    vk = v[:, keep]
    d = vk @ (coef[keep] / w[keep])
    resid = g - vk @ coef[keep]
    return d, resid


def _projected_search(m, x, grad, idx, d, c1):
    """Best point of the projected path ``clip(x + t d)`` over a few trial
    step lengths, applied in place. Returns True if ``x`` moved.

    Trials are the unconstrained maximiser along ``d`` (halved a few times)
    and a spread of the breakpoints where coordinates reach the box. A
    trial is only taken when it raises the objective.
    """
    xi = x[idx]
    g = grad[idx]
    slope = g @ d
    if not slope > 0:
        return False
    sub = m[np.ix_(idx, idx)]
    curv = d @ sub @ d
    trials = []
    if curv > 0:
        t_star = slope / curv
        trials.extend(t_star * 0.5 ** np.arange(8))
    with np.errstate(divide="ignore", invalid="ignore"):
        breaks = np.where(d > 0, (c1 - xi) / d, np.where(d < 0, -xi / d, np.inf))
    breaks = np.unique(breaks[np.isfinite(breaks) & (breaks > 0)])
    if breaks.size > 16:
        breaks = breaks[np.unique(np.linspace(0, breaks.size - 1, 16).round().astype(int))]
    trials.extend(breaks)

    best_gain, best_delta = 0.0, None
    for t in trials:
        delta = np.clip(xi + t * d, 0.0, c1) - xi
        gain = g @ delta - 0.5 * delta @ sub @ delta
        if gain > best_gain:
            best_gain, best_delta = gain, delta
    if best_delta is None:
        return False
    x[idx] = np.clip(xi + best_delta, 0.0, c1)
    grad -= m[:, idx] @ (x[idx] - xi)
    return True


def _subspace_step(m, x, grad, c1, rounds=3):
    """Ascent steps on the strictly interior coordinates, in place.

    The free block of M is often singular. The part of the gradient in its
    null space makes the objective linear along that direction, so it is
    followed first; once it vanishes, the Newton direction of the free
    block is used. Steps follow the projected path so several coordinates
    can reach the box at once. No step lowers the objective.
    """
    for _ in range(rounds):
        free = np.flatnonzero((x > 0.0) & (x < c1))
        if free.size == 0:
            return
        g = grad[free]
        d, resid = _split_gradient(m[np.ix_(free, free)], g)
        if resid @ resid > 1e-18 * (g @ g):
            moved = _projected_search(m, x, grad, free, resid, c1)
        else:
            moved = _projected_search(m, x, grad, free, d, c1)
        if not moved:
            return


def solve_qp(
    problem, warm_start=None, tol=1e-8, max_sweeps=None, record_history=False,
    subspace_steps=True,
):
    """Projected exact coordinate ascent.

    Each coordinate (alpha_1..alpha_n, then gamma_1..gamma_n) is moved to
    the maximiser of its scalar concave quadratic, clipped to ``[0, C1]``.
    Sweeps stop once the projected gradient is at most ``tol`` everywhere.
    With ``subspace_steps`` every sweep is followed by a line-maximised
    step along the Newton direction of the interior coordinates, which
    removes the slow zig-zag of plain coordinate ascent on near-singular
    problems.

    Returns a :class:`QpSolution`; when ``max_sweeps`` runs out its
    ``converged`` flag is False and the duals are the last iterate, which
    is also the best one since the ascent is monotone.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = problem.n
    c1 = problem.box_c1
    if max_sweeps is None:
        max_sweeps = max(10 * n, 1000)
    m = np.ascontiguousarray(problem.hessian)
    h = problem.margin_h
    if warm_start is None:
        x = np.zeros(2 * n)
    else:
        x = np.clip(warm_start.stacked().astype(np.float64), 0.0, c1)
        if x.shape[0] != 2 * n:
            raise ValueError("warm start has the wrong length")

    history = []
    grad = h - m @ x
    violation = kkt_violation(x, grad, c1)
    sweeps = 0
    while violation > tol and sweeps < max_sweeps:
        coordinate_sweep(m, x, grad, c1)
        sweeps += 1
        # refresh to stop drift from the incremental updates
        grad = h - m @ x
        if subspace_steps:
            _subspace_step(m, x, grad, c1)
            grad = h - m @ x
        violation = kkt_violation(x, grad, c1)
        if record_history:
            history.append(float(-0.5 * x @ m @ x + h * x.sum()))

    duals = DualState.from_stacked(x)
    return QpSolution(
        duals=duals,
        objective=float(-0.5 * x @ m @ x + h * x.sum()),
        converged=violation <= tol,
        sweeps=sweeps,
        violation=violation,
        history=tuple(history),
    )


def _face_candidates(m, h, c1):
    """Stationary points of every face of the box ``[0, c1]^k``.

    Each coordinate is pinned to 0, pinned to c1, or free; the free block
    solves its stationarity equations by least squares. Faces whose
    equations are inconsistent, or whose solution leaves the box, are
    skipped.
    """
    k = m.shape[0]
    for pattern in itertools.product((0, 1, 2), repeat=k):
        pattern = np.array(pattern)
        free = pattern == 2
        x = np.where(pattern == 1, c1, 0.0)
        if free.any():
            fixed = ~free
            rhs = h - m[np.ix_(free, fixed)] @ x[fixed]
            sub = m[np.ix_(free, free)]
            sol, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
            if np.abs(sub @ sol - rhs).max() > 1e-9 * max(1.0, np.abs(rhs).max()):
                continue
            if sol.min() < -1e-12 or sol.max() > c1 + 1e-12:
                continue
            x[free] = np.clip(sol, 0.0, c1)
        yield x


def brute_force_qp(problem, grid_steps=8):
    """Exhaustive reference solver for tiny instances (2n <= 6).

    Evaluates the objective on the grid ``{0, C1/g, ..., C1}^(2n)`` and at
    the stationary point of every face of the box, keeps the best point,
    then applies one pass of exact per-coordinate line maximisation. The
    face enumeration makes the result exact up to rounding; the grid is an
    independent lower bound on the optimum.
    """
    n = problem.n
    if 2 * n > 6:
        raise ValueError(f"brute force limited to 2n <= 6 variables, got {2 * n}")
    if grid_steps < 1:
        raise ValueError("grid_steps must be positive")
    m = problem.hessian
    h, c1 = problem.margin_h, problem.box_c1

    def value(x):
        return -0.5 * np.einsum("...i,ij,...j->...", x, m, x) + h * x.sum(axis=-1)

    levels = np.linspace(0.0, c1, grid_steps + 1)
    grid = np.stack(np.meshgrid(*([levels] * (2 * n)), indexing="ij"), axis=-1)
    grid = grid.reshape(-1, 2 * n)
    scores = value(grid)
    best = grid[int(np.argmax(scores))].copy()
    best_val = float(scores.max())

    for cand in _face_candidates(m, h, c1):
        val = float(value(cand))
        if val > best_val:
            best, best_val = cand.copy(), val

    for i in range(2 * n):
        g = h - m[i] @ best
        curv = m[i, i]
        if curv > 0:
            best[i] = min(max(best[i] + g / curv, 0.0), c1)
        elif g > 0:
            best[i] = c1
        elif g < 0:
            best[i] = 0.0
    return DualState.from_stacked(best)
