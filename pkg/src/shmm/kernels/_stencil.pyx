# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels. Signatures and results match ``_stencil_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport malloc, free

cnp.import_array()


def flux_divergence(
    const double[:, ::1] u,
    const double[:, ::1] a11, const double[:, ::1] a12,
    const double[:, ::1] a21, const double[:, ::1] a22,
    double h1, double h2, double g1, double g2, bint per1, bint per2,
):
    cdef Py_ssize_t n1 = u.shape[0], n2 = u.shape[1]
    out_arr = np.zeros((n1, n2))
    cdef double[:, ::1] out = out_arr
    with nogil:
        _divergence(u, a11, a12, a21, a22, h1, h2, g1, g2, per1, per2, out)
    return out_arr


cdef void _divergence(
    const double[:, ::1] u,
    const double[:, ::1] a11, const double[:, ::1] a12,
    const double[:, ::1] a21, const double[:, ::1] a22,
    double h1, double h2, double g1, double g2, bint per1, bint per2,
    double[:, ::1] out,
) noexcept nogil:
    # Each face flux is evaluated once: x1-face fluxes of the previous row are
    # kept in ``fw``, the south x2-face flux is carried along the row in ``fs``.
    cdef Py_ssize_t n1 = u.shape[0], n2 = u.shape[1]
    cdef Py_ssize_t i, j, ip, im, jp, jm, i0, i1, j0, j1
    cdef double r1 = 1.0 / h1, r2 = 1.0 / h2
    cdef double q1 = 0.25 / h1, q2 = 0.25 / h2
    cdef double fe, fn, fs
    cdef double* fw = <double*> malloc(n2 * sizeof(double))
    cdef double* fcur = <double*> malloc(n2 * sizeof(double))
    cdef double* tmp
    i0 = 0 if per1 else 1
    i1 = n1 if per1 else n1 - 1
    j0 = 0 if per2 else 1
    j1 = n2 if per2 else n2 - 1
    # x1-face fluxes at i0 - 1/2
    i = i0 - 1 if i0 > 0 else n1 - 1
    ip = i + 1 if i + 1 < n1 else 0
    for j in range(n2):
        jp = j + 1 if j + 1 < n2 else 0
        jm = j - 1 if j > 0 else n2 - 1
        fw[j] = a11[i, j] * (g1 + (u[ip, j] - u[i, j]) * r1) + a12[i, j] * (
            g2 + (u[i, jp] + u[ip, jp] - u[i, jm] - u[ip, jm]) * q2)
    for i in range(i0, i1):
        ip = i + 1 if i + 1 < n1 else 0
        im = i - 1 if i > 0 else n1 - 1
        for j in range(n2):
            jp = j + 1 if j + 1 < n2 else 0
            jm = j - 1 if j > 0 else n2 - 1
            fcur[j] = a11[i, j] * (g1 + (u[ip, j] - u[i, j]) * r1) + a12[i, j] * (
                g2 + (u[i, jp] + u[ip, jp] - u[i, jm] - u[ip, jm]) * q2)
        j = j0 - 1 if j0 > 0 else n2 - 1
        jp = j + 1 if j + 1 < n2 else 0
        fs = a21[i, j] * (g1 + (u[ip, j] + u[ip, jp] - u[im, j] - u[im, jp]) * q1) + a22[i, j] * (
            g2 + (u[i, jp] - u[i, j]) * r2)
        for j in range(j0, j1):
            jp = j + 1 if j + 1 < n2 else 0
            fn = a21[i, j] * (g1 + (u[ip, j] + u[ip, jp] - u[im, j] - u[im, jp]) * q1) + a22[i, j] * (
                g2 + (u[i, jp] - u[i, j]) * r2)
            out[i, j] = (fcur[j] - fw[j]) * r1 + (fn - fs) * r2
            fs = fn
        tmp = fw
        fw = fcur
        fcur = tmp
    free(fw)
    free(fcur)


def flux_average(
    const double[:, ::1] u,
    const double[:, ::1] a11, const double[:, ::1] a12,
    const double[:, ::1] a21, const double[:, ::1] a22,
    double h1, double h2, double g1, double g2,
):
    cdef Py_ssize_t n1 = u.shape[0], n2 = u.shape[1]
    cdef Py_ssize_t i, j, ip, im, jp, jm
    cdef double r1 = 1.0 / h1, r2 = 1.0 / h2
    cdef double q1 = 0.25 / h1, q2 = 0.25 / h2
    cdef double s1 = 0.0, s2 = 0.0
    with nogil:
        for i in range(n1):
            ip = i + 1 if i + 1 < n1 else 0
            im = i - 1 if i > 0 else n1 - 1
            for j in range(n2):
                jp = j + 1 if j + 1 < n2 else 0
                jm = j - 1 if j > 0 else n2 - 1
                s1 += a11[i, j] * (g1 + (u[ip, j] - u[i, j]) * r1) + a12[i, j] * (
                    g2 + (u[i, jp] + u[ip, jp] - u[i, jm] - u[ip, jm]) * q2)
                s2 += a21[i, j] * (g1 + (u[ip, j] + u[ip, jp] - u[im, j] - u[im, jp]) * q1) + a22[i, j] * (
                    g2 + (u[i, jp] - u[i, j]) * r2)
    return s1 / (n1 * n2), s2 / (n1 * n2)


def micro_relax(
    double[:, ::1] w,
    const double[:, ::1] a11, const double[:, ::1] a12,
    const double[:, ::1] a21, const double[:, ::1] a22,
    double h1, double h2, double g1, double g2,
    double dt, double tol, long max_steps,
):
    cdef Py_ssize_t n1 = w.shape[0], n2 = w.shape[1]
    cdef Py_ssize_t i, j
    cdef long step = 0
    cdef double res = 1e300, r
    rate_arr = np.zeros((n1, n2))
    cdef double[:, ::1] rate = rate_arr
    with nogil:
        while step < max_steps:
            step += 1
            _divergence(w, a11, a12, a21, a22, h1, h2, g1, g2, True, True, rate)
            res = 0.0
            for i in range(n1):
                for j in range(n2):
                    r = rate[i, j]
                    w[i, j] += dt * r
                    if fabs(r) > res:
                        res = fabs(r)
            if res < tol:
                break
    return step, res


def advdiff_rhs(
    const double[:, ::1] u,
    const double[:, ::1] U, const double[:, ::1] V,
    double kappa, double h1, double h2, bint per1, bint per2,
):
    cdef Py_ssize_t n1 = u.shape[0], n2 = u.shape[1]
    cdef Py_ssize_t i, j, ip, im, jp, jm, i0, i1, j0, j1
    cdef double c1 = kappa / (h1 * h1), c2 = kappa / (h2 * h2)
    cdef double r1 = 0.5 / h1, r2 = 0.5 / h2
    cdef double uc, adv
    out_arr = np.zeros((n1, n2))
    cdef double[:, ::1] out = out_arr
    i0 = 0 if per1 else 1
    i1 = n1 if per1 else n1 - 1
    j0 = 0 if per2 else 1
    j1 = n2 if per2 else n2 - 1
    with nogil:
        for i in range(i0, i1):
            ip = i + 1 if i + 1 < n1 else 0
            im = i - 1 if i > 0 else n1 - 1
            for j in range(j0, j1):
                jp = j + 1 if j + 1 < n2 else 0
                jm = j - 1 if j > 0 else n2 - 1
                uc = u[i, j]
                adv = (U[i, j] * (uc + u[ip, j]) - U[im, j] * (u[im, j] + uc)) * r1 + (
                    V[i, j] * (uc + u[i, jp]) - V[i, jm] * (u[i, jm] + uc)) * r2
                out[i, j] = c1 * (u[ip, j] - 2.0 * uc + u[im, j]) + c2 * (u[i, jp] - 2.0 * uc + u[i, jm]) - adv
    return out_arr
