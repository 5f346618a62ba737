"""Pure NumPy walk kernels (fallback backend).

One function per model; each advances a single coupled trajectory on the
step grid ``s_grid`` using the pre-drawn ball increments ``lam`` (one row
per step) and records positions, the tracked cost, and antipodal hits.
The compiled backend mirrors this arithmetic, operation for operation.
"""

from __future__ import annotations

import math

import numpy as np

_FRAME_TOL = 1e-6
_ANTIPODAL_COS = -1.0 + 1e-12


def _angle(x, y):
    """Standard angle between unit vectors via chord lengths; accurate at
    both ends where acos of the dot product is not."""
    return 2.0 * math.atan2(
        math.sqrt(float(np.dot(x - y, x - y))),
        math.sqrt(float(np.dot(x + y, x + y))),
    )


def torus_path(L, t1p, t1pp, eps, s_grid, x0, y0, lam):
    d = x0.size
    n = s_grid.size - 1
    X = np.empty((n + 1, d))
    Y = np.empty((n + 1, d))
    Lam = np.empty(n + 1)
    mult = np.zeros(n + 1, dtype=np.int64)
    dtw = t1pp - t1p
    coef = math.sqrt(2.0 * (d + 2))
    x = np.mod(x0, L)
    y = np.mod(y0, L)

    def record(k):
        X[k] = x
        Y[k] = y
        delta = np.mod(y - x + 0.5 * L, L) - 0.5 * L
        Lam[k] = np.dot(delta, delta) / (2.0 * dtw)
        if np.any(np.abs(np.abs(delta) - 0.5 * L) <= 1e-9 * L):
            mult[k] = 1

    record(0)
    for k in range(n):
        h = s_grid[k + 1] - s_grid[k]
        step = (coef * h / eps) * lam[k]
        x = np.mod(x + step, L)
        y = np.mod(y + step, L)
        record(k + 1)
    return X, Y, Lam, mult


def _frame_std(x):
    """Gram-Schmidt of the ambient basis projected to the tangent space,
    in fixed index order; rows are std-orthonormal."""
    nc = x.size
    d = nc - 1
    rows = np.empty((d, nc))
    filled = 0
    for k in range(nc):
        cand = -x[k] * x
        cand[k] += 1.0
        for i in range(filled):
            cand -= np.dot(cand, rows[i]) * rows[i]
        nn = math.sqrt(np.dot(cand, cand))
        if nn < _FRAME_TOL:
            continue
        rows[filled] = cand / nn
        filled += 1
        if filled == d:
            break
    return rows


def sphere_path(d, t1p, t1pp, eps, s_grid, x0, y0, lam):
    nc = d + 1
    n = s_grid.size - 1
    X = np.empty((n + 1, nc))
    Y = np.empty((n + 1, nc))
    Lam = np.empty(n + 1)
    mult = np.zeros(n + 1, dtype=np.int64)
    two_dm1 = 2.0 * (d - 1)
    half_rdim = 0.5 * d * (d - 1)
    coef = math.sqrt(2.0 * (d + 2))
    x = x0 / np.linalg.norm(x0)
    y = y0 / np.linalg.norm(y0)

    def record(k, s):
        X[k] = x
        Y[k] = y
        a1 = 1.0 - two_dm1 * (t1p - s)
        a2 = 1.0 - two_dm1 * (t1pp - s)
        big_a = math.log(a1 / a2) / two_dm1
        cl = min(1.0, max(-1.0, float(np.dot(x, y))))
        ell = _angle(x, y)
        Lam[k] = ell * ell / (2.0 * big_a) + half_rdim * big_a
        if cl <= _ANTIPODAL_COS:
            mult[k] = 1

    record(0, s_grid[0])
    for k in range(n):
        s = s_grid[k]
        h = s_grid[k + 1] - s
        a1 = 1.0 - two_dm1 * (t1p - s)
        a2 = 1.0 - two_dm1 * (t1pp - s)
        frame = _frame_std(x)
        # g-norm of the step is coef * (h/eps) * |lam|
        w = ((coef * h / eps) / math.sqrt(a1)) * (lam[k] @ frame)
        kappa = math.sqrt(a1 / a2)
        cl = min(1.0, max(-1.0, float(np.dot(x, y))))
        ell = _angle(x, y)
        sl = math.sin(ell)
        if cl <= _ANTIPODAL_COS:
            mult[k + 1] = 1
            e1 = frame[0]
            alpha = float(np.dot(w, e1))
            v = kappa * (alpha * (-sl * x + cl * e1) + (w - alpha * e1))
        elif sl < 1e-14:
            v = kappa * w
        else:
            e1 = (y - cl * x) / sl
            alpha = float(np.dot(w, e1))
            v = kappa * (alpha * (-sl * x + cl * e1) + (w - alpha * e1))
        tx = math.sqrt(float(np.dot(w, w)))
        if tx > 0.0:
            x = math.cos(tx) * x + (math.sin(tx) / tx) * w
            x = x / np.linalg.norm(x)
        ty = math.sqrt(float(np.dot(v, v)))
        if ty > 0.0:
            y = math.cos(ty) * y + (math.sin(ty) / ty) * v
            y = y / np.linalg.norm(y)
        record(k + 1, s_grid[k + 1])
    return X, Y, Lam, mult
