"""Dense matrix helpers: checked products, one-sided Jacobi SVD and seeded
orthonormal bases.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.
"""

from typing import NamedTuple

import numpy as np

__all__ = [
    "SvdResult",
    "SvdConvergenceError",
    "as_matrix",
    "matmul",
    "svd",
    "random_orthonormal",
    "fix_signs",
]

_EPS = np.finfo(np.float64).eps


class SvdConvergenceError(RuntimeError):
    pass


class SvdResult(NamedTuple):
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.vt


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array, raising ValueError otherwise."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def matmul(a, b):
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _round_robin(n):
    """Pairings for a round-robin tournament on ``n`` (even) players.

    Each round is a pair of index arrays ``(p, q)`` covering every column
    exactly once; across ``n - 1`` rounds every unordered pair meets once.
    """
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((p, q))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_basis(u, keep):
    """Replace the columns of ``u`` not flagged in ``keep`` by an
    orthonormal completion of the kept ones (modified Gram-Schmidt over
    the standard basis)."""
    m, k = u.shape
    out = u.copy()
    basis = [out[:, j] for j in range(k) if keep[j]]
    candidates = iter(np.eye(m))
    for j in range(k):
        if keep[j]:
            continue
        while True:
            v = next(candidates).copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 0.5:
                break
        v /= nv
        out[:, j] = v
        basis.append(v)
    return out


def _jacobi_tall(a, max_sweeps):
    m, n = a.shape
    work = a.copy()
    v = np.eye(n)
    if n % 2:
        # pad with a zero column so every round pairs all columns
        work = np.hstack([work, np.zeros((m, 1))])
        v = np.pad(v, ((0, 1), (0, 1)))
        v[n, n] = 1.0
    ncol = work.shape[1]
    rounds = _round_robin(ncol) if ncol > 1 else []
    tol = _EPS * max(m, 4)

    off = 0.0
    for sweep in range(max_sweeps):
        off = 0.0
        for p, q in rounds:
            wp, wq = work[:, p], work[:, q]
            alpha = np.einsum("ij,ij->j", wp, wp)
            beta = np.einsum("ij,ij->j", wq, wq)
            gamma = np.einsum("ij,ij->j", wp, wq)
            scale = np.sqrt(alpha * beta)
            active = np.abs(gamma) > tol * scale
            active &= scale > 0
            if not active.any():
                continue
            off = max(off, float(np.max(np.abs(gamma[active]) / scale[active])))
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t[zeta == 0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for mat in (work, v):
                xp, xq = mat[:, p], mat[:, q]
                mat[:, p] = c * xp - s * xq
                mat[:, q] = s * xp + c * xq
        if off <= tol:
            break
    else:
        raise SvdConvergenceError(
            f"one-sided Jacobi did not converge within {max_sweeps} sweeps "
            f"(residual off-diagonal cosine {off:.3e})"
        )

    work, v = work[:, :n], v[:n, :n]
    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, work, v = sigma[order], work[:, order], v[:, order]

    cutoff = sigma[0] * _EPS * max(m, n) if n else 0.0
    keep = sigma > cutoff
    u = np.zeros((m, n))
    u[:, keep] = work[:, keep] / sigma[keep]
    sigma = np.where(keep, sigma, 0.0)
    if not keep.all():
        u = _complete_basis(u, keep)
    return u, sigma, v.T


def svd(a, max_sweeps=60):
    """Thin singular value decomposition by one-sided Jacobi rotations.

    Parameters
    ----------
    a : (M, N) array_like
        Finite, nonempty real matrix.
    max_sweeps : int
        Cap on full rotation sweeps before giving up.

    Returns
    -------
    SvdResult
        ``u`` is (M, K), ``singular_values`` has length K (descending) and
        ``vt`` is (K, N) with K = min(M, N). Each left singular vector is
        signed so its largest-magnitude entry is positive; the paired right
        vector follows.

    Raises
    ------
    SvdConvergenceError
        If rotations have not orthogonalised the columns after
        ``max_sweeps`` sweeps.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ValueError("svd of an empty matrix")
    m, n = a.shape
    if m >= n:
        u, s, vt = _jacobi_tall(a, max_sweeps)
    else:
        v, s, ut = _jacobi_tall(a.T, max_sweeps)
        u, vt = ut.T, v.T
    u, vt = fix_signs(u, vt)
    return SvdResult(u, s, vt)


def fix_signs(u, vt):
    """Flip singular vector pairs so each column of ``u`` has its
    largest-magnitude entry positive."""
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def random_orthonormal(rows, cols, seed):
    """Seeded matrix with orthonormal columns.

    Draws a standard normal ``rows x cols`` matrix and orthonormalises it
    with modified Gram-Schmidt (two passes).
    """
    if cols > rows:
        raise ValueError(f"cannot build {cols} orthonormal columns in R^{rows}")
    if rows < 1 or cols < 0:
        raise ValueError(f"invalid shape ({rows}, {cols})")
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((rows, cols))
    for j in range(cols):
        for _ in range(2):
            for k in range(j):
                q[:, j] -= (q[:, k] @ q[:, j]) * q[:, k]
        norm = np.linalg.norm(q[:, j])
        if norm < 1e-12:
            raise ValueError("degenerate draw while orthonormalising")
        q[:, j] /= norm
    return q
