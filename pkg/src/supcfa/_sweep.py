"""Inner loop of the coordinate-ascent QP solver, compiled with numba."""

import numba
import numpy as np


@numba.njit(cache=True)
def coordinate_sweep(m, x, grad, c1):
    """One in-order pass of exact coordinate maximisation, in place.

    ``m`` must be symmetric and ``grad`` equal to ``h - m @ x`` on entry;
    ``grad`` is kept consistent with ``x``.
    A coordinate with zero curvature moves to the bound its gradient points
    at, and stays put when the gradient is zero too.
    """
    k = x.shape[0]
    for i in range(k):
        g = grad[i]
        curv = m[i, i]
        old = x[i]
        if curv > 0.0:
            new = old + g / curv
            if new < 0.0:
                new = 0.0
            elif new > c1:
                new = c1
        elif g > 0.0:
            new = c1
        elif g < 0.0:
            new = 0.0
        else:
            new = old
        delta = new - old
        if delta != 0.0:
            x[i] = new
            for j in range(k):
                grad[j] -= m[i, j] * delta
    return x


def warmup():
    m = np.eye(2)
    coordinate_sweep(m, np.zeros(2), np.ones(2), 1.0)
