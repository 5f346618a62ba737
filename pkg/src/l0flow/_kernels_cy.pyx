# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled walk kernels.

Operation-for-operation mirror of ``_kernels_py``; the two backends must
stay interchangeable, so any arithmetic change there lands here too.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, fabs, fmod, log, sin, sqrt

cnp.import_array()

cdef double _FRAME_TOL = 1e-6
cdef double _ANTIPODAL_COS = -1.0 + 1e-12


cdef inline double _angle(double[::1] x, double[::1] y) nogil:
    # standard angle between unit vectors via chord lengths; accurate at
    # both ends where acos of the dot product is not
    cdef Py_ssize_t j
    cdef double dm = 0.0, dp = 0.0, t
    for j in range(x.shape[0]):
        t = x[j] - y[j]
        dm += t * t
        t = x[j] + y[j]
        dp += t * t
    return 2.0 * atan2(sqrt(dm), sqrt(dp))


cdef inline double _pymod(double a, double b) nogil:
    # sign-of-divisor remainder, matching np.mod on doubles
    cdef double r = fmod(a, b)
    if r != 0.0 and ((r < 0.0) != (b < 0.0)):
        r += b
    return r


cdef inline double _clip1(double c) nogil:
    if c > 1.0:
        return 1.0
    if c < -1.0:
        return -1.0
    return c


def torus_path(double L, double t1p, double t1pp, double eps,
               double[::1] s_grid, double[::1] x0, double[::1] y0,
               double[:, ::1] lam):
    cdef Py_ssize_t d = x0.shape[0]
    cdef Py_ssize_t n = s_grid.shape[0] - 1
    X_arr = np.empty((n + 1, d))
    Y_arr = np.empty((n + 1, d))
    Lam_arr = np.empty(n + 1)
    mult_arr = np.zeros(n + 1, dtype=np.int64)
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] Y = Y_arr
    cdef double[::1] Lam = Lam_arr
    cdef long long[::1] mult = mult_arr
    cdef double dtw = t1pp - t1p
    cdef double coef = sqrt(2.0 * (d + 2))
    cdef double[::1] x = np.empty(d)
    cdef double[::1] y = np.empty(d)
    cdef Py_ssize_t i, k
    cdef double h, step, delta, acc
    cdef bint hit

    for i in range(d):
        x[i] = _pymod(x0[i], L)
        y[i] = _pymod(y0[i], L)

    with nogil:
        for k in range(n + 1):
            acc = 0.0
            hit = False
            for i in range(d):
                X[k, i] = x[i]
                Y[k, i] = y[i]
                delta = _pymod(y[i] - x[i] + 0.5 * L, L) - 0.5 * L
                acc += delta * delta
                if fabs(fabs(delta) - 0.5 * L) <= 1e-9 * L:
                    hit = True
            Lam[k] = acc / (2.0 * dtw)
            if hit:
                mult[k] = 1
            if k == n:
                break
            h = s_grid[k + 1] - s_grid[k]
            for i in range(d):
                step = (coef * h / eps) * lam[k, i]
                x[i] = _pymod(x[i] + step, L)
                y[i] = _pymod(y[i] + step, L)

    return X_arr, Y_arr, Lam_arr, mult_arr


cdef Py_ssize_t _frame_std(double[::1] x, double[:, ::1] rows) nogil:
    # Gram-Schmidt of ambient basis vectors projected off x, fixed order
    cdef Py_ssize_t nc = x.shape[0]
    cdef Py_ssize_t d = nc - 1
    cdef Py_ssize_t filled = 0
    cdef Py_ssize_t k, i, j
    cdef double dp, nn

    for k in range(nc):
        for j in range(nc):
            rows[filled, j] = -x[k] * x[j]
        rows[filled, k] += 1.0
        for i in range(filled):
            dp = 0.0
            for j in range(nc):
                dp += rows[filled, j] * rows[i, j]
            for j in range(nc):
                rows[filled, j] -= dp * rows[i, j]
        nn = 0.0
        for j in range(nc):
            nn += rows[filled, j] * rows[filled, j]
        nn = sqrt(nn)
        if nn < _FRAME_TOL:
            continue
        for j in range(nc):
            rows[filled, j] /= nn
        filled += 1
        if filled == d:
            break
    return filled


def sphere_path(Py_ssize_t d, double t1p, double t1pp, double eps,
                double[::1] s_grid, double[::1] x0, double[::1] y0,
                double[:, ::1] lam):
    cdef Py_ssize_t nc = d + 1
    cdef Py_ssize_t n = s_grid.shape[0] - 1
    X_arr = np.empty((n + 1, nc))
    Y_arr = np.empty((n + 1, nc))
    Lam_arr = np.empty(n + 1)
    mult_arr = np.zeros(n + 1, dtype=np.int64)
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] Y = Y_arr
    cdef double[::1] Lam = Lam_arr
    cdef long long[::1] mult = mult_arr
    cdef double two_dm1 = 2.0 * (d - 1)
    cdef double half_rdim = 0.5 * d * (d - 1)
    cdef double coef = sqrt(2.0 * (d + 2))
    cdef double[::1] x = np.empty(nc)
    cdef double[::1] y = np.empty(nc)
    cdef double[::1] w = np.empty(nc)
    cdef double[::1] v = np.empty(nc)
    cdef double[::1] e1 = np.empty(nc)
    cdef double[:, ::1] frame = np.empty((d, nc))
    cdef Py_ssize_t i, j, k
    cdef double s, h, a1, a2, big_a, cl, ell, sl, kappa
    cdef double nn, scale, alpha, tx, ty, rad

    nn = 0.0
    for j in range(nc):
        nn += x0[j] * x0[j]
    nn = sqrt(nn)
    for j in range(nc):
        x[j] = x0[j] / nn
    nn = 0.0
    for j in range(nc):
        nn += y0[j] * y0[j]
    nn = sqrt(nn)
    for j in range(nc):
        y[j] = y0[j] / nn

    with nogil:
        for k in range(n + 1):
            s = s_grid[k]
            for j in range(nc):
                X[k, j] = x[j]
                Y[k, j] = y[j]
            a1 = 1.0 - two_dm1 * (t1p - s)
            a2 = 1.0 - two_dm1 * (t1pp - s)
            big_a = log(a1 / a2) / two_dm1
            cl = 0.0
            for j in range(nc):
                cl += x[j] * y[j]
            cl = _clip1(cl)
            ell = _angle(x, y)
            Lam[k] = ell * ell / (2.0 * big_a) + half_rdim * big_a
            if cl <= _ANTIPODAL_COS:
                mult[k] = 1
            if k == n:
                break

            h = s_grid[k + 1] - s
            # a1, a2 already hold the step-start values
            _frame_std(x, frame)
            scale = (coef * h / eps) / sqrt(a1)
            for j in range(nc):
                w[j] = 0.0
                for i in range(d):
                    w[j] += lam[k, i] * frame[i, j]
                w[j] *= scale
            kappa = sqrt(a1 / a2)
            sl = sin(ell)
            if cl <= _ANTIPODAL_COS:
                mult[k + 1] = 1
                alpha = 0.0
                for j in range(nc):
                    e1[j] = frame[0, j]
                    alpha += w[j] * e1[j]
                for j in range(nc):
                    v[j] = kappa * (alpha * (-sl * x[j] + cl * e1[j])
                                    + (w[j] - alpha * e1[j]))
            elif sl < 1e-14:
                for j in range(nc):
                    v[j] = kappa * w[j]
            else:
                alpha = 0.0
                for j in range(nc):
                    e1[j] = (y[j] - cl * x[j]) / sl
                    alpha += w[j] * e1[j]
                for j in range(nc):
                    v[j] = kappa * (alpha * (-sl * x[j] + cl * e1[j])
                                    + (w[j] - alpha * e1[j]))
            tx = 0.0
            for j in range(nc):
                tx += w[j] * w[j]
            tx = sqrt(tx)
            if tx > 0.0:
                for j in range(nc):
                    x[j] = cos(tx) * x[j] + (sin(tx) / tx) * w[j]
                nn = 0.0
                for j in range(nc):
                    nn += x[j] * x[j]
                nn = sqrt(nn)
                for j in range(nc):
                    x[j] /= nn
            ty = 0.0
            for j in range(nc):
                ty += v[j] * v[j]
            ty = sqrt(ty)
            if ty > 0.0:
                for j in range(nc):
                    y[j] = cos(ty) * y[j] + (sin(ty) / ty) * v[j]
                nn = 0.0
                for j in range(nc):
                    nn += y[j] * y[j]
                nn = sqrt(nn)
                for j in range(nc):
                    y[j] /= nn

    return X_arr, Y_arr, Lam_arr, mult_arr
