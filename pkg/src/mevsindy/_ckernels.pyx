# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. See ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs

cnp.import_array()

cdef double BLOWUP = 1e12


cdef inline double ipow(double x, long e) nogil:
    cdef double r = 1.0
    while e > 0:
        if e & 1:
            r *= x
        x *= x
        e >>= 1
    return r


cdef void _rhs(double[::1] y, double t, Py_ssize_t k, double[::1] omega_sq,
               long[::1] term_channel, long[:, ::1] term_exps, double[::1] term_coef,
               double[::1] fc, double[::1] fs, double beta, double omega,
               double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, m
    cdef Py_ssize_t nt = term_coef.shape[0]
    cdef double mono, c = cos(omega * t), s = sin(omega * t)
    for i in range(k):
        out[i] = y[k + i]
        out[k + i] = -omega_sq[i] * y[i] + beta * (fc[i] * c + fs[i] * s)
    for m in range(nt):
        mono = term_coef[m]
        for j in range(2 * k):
            if term_exps[m, j] != 0:
                mono *= ipow(y[j], term_exps[m, j])
        out[k + term_channel[m]] -= mono


def rk4_poly(y0, double t0, double dt, long nsteps, long stride, double[::1] omega_sq,
             long[::1] term_channel, long[:, ::1] term_exps, double[::1] term_coef,
             double[::1] fc, double[::1] fs, double beta, double omega):
    cdef Py_ssize_t k = omega_sq.shape[0]
    cdef Py_ssize_t d = 2 * k
    cdef double[::1] y = np.array(y0, dtype=np.float64)
    cdef double[::1] tmp = np.empty(d)
    cdef double[::1] k1 = np.empty(d)
    cdef double[::1] k2 = np.empty(d)
    cdef double[::1] k3 = np.empty(d)
    cdef double[::1] k4 = np.empty(d)
    cdef long nrec = nsteps // stride + 1
    out_arr = np.empty((nrec, d))
    cdef double[:, ::1] out = out_arr
    cdef long step, rec = 1
    cdef Py_ssize_t j
    cdef double t, h2 = 0.5 * dt, w = dt / 6.0
    cdef bint blown
    for j in range(d):
        out[0, j] = y[j]
    with nogil:
        for step in range(nsteps):
            t = t0 + step * dt
            _rhs(y, t, k, omega_sq, term_channel, term_exps, term_coef, fc, fs, beta, omega, k1)
            for j in range(d):
                tmp[j] = y[j] + h2 * k1[j]
            _rhs(tmp, t + h2, k, omega_sq, term_channel, term_exps, term_coef, fc, fs, beta, omega, k2)
            for j in range(d):
                tmp[j] = y[j] + h2 * k2[j]
            _rhs(tmp, t + h2, k, omega_sq, term_channel, term_exps, term_coef, fc, fs, beta, omega, k3)
            for j in range(d):
                tmp[j] = y[j] + dt * k3[j]
            _rhs(tmp, t + dt, k, omega_sq, term_channel, term_exps, term_coef, fc, fs, beta, omega, k4)
            blown = False
            for j in range(d):
                y[j] = y[j] + w * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not fabs(y[j]) < BLOWUP:
                    blown = True
            if blown:
                with gil:
                    return out_arr[:rec], step + 1
            if (step + 1) % stride == 0:
                for j in range(d):
                    out[rec, j] = y[j]
                rec += 1
    return out_arr[:rec], nsteps


def sliding_trapezoid(g_in, long h):
    cdef double[::1] g = np.ascontiguousarray(g_in, dtype=np.float64)
    cdef Py_ssize_t n = g.shape[0] - 2 * h
    if n <= 0:
        return np.empty(0)
    res_arr = np.empty(n)
    cdef double[::1] res = res_arr
    cdef Py_ssize_t i, j
    cdef double s = 0.0, comp = 0.0, yv, tv
    with nogil:
        # compensated running sum over the 2h+1 window
        for j in range(2 * h + 1):
            yv = g[j] - comp
            tv = s + yv
            comp = (tv - s) - yv
            s = tv
        res[0] = s - 0.5 * (g[0] + g[2 * h])
        for i in range(1, n):
            yv = (g[i + 2 * h] - g[i - 1]) - comp
            tv = s + yv
            comp = (tv - s) - yv
            s = tv
            res[i] = s - 0.5 * (g[i] + g[i + 2 * h])
    return res_arr


def chamfer_directed(p_in, q_in):
    cdef double[:, ::1] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef double[:, ::1] q = np.ascontiguousarray(q_in, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], m = q.shape[0], dim = p.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double best, d2, diff, total = 0.0
    with nogil:
        for i in range(n):
            best = 1e308
            for j in range(m):
                d2 = 0.0
                for c in range(dim):
                    diff = p[i, c] - q[j, c]
                    d2 += diff * diff
                if d2 < best:
                    best = d2
            total += sqrt(best)
    return total / n


def rk4_linear_propagate(a_in, double dt):
    cdef double[:, :, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef Py_ssize_t d = a.shape[1]
    cdef long nsteps = (a.shape[0] - 1) // 2
    phi_arr = np.eye(d)
    cdef double[:, ::1] phi = phi_arr
    cdef double[:, ::1] k1 = np.empty((d, d))
    cdef double[:, ::1] k2 = np.empty((d, d))
    cdef double[:, ::1] k3 = np.empty((d, d))
    cdef double[:, ::1] k4 = np.empty((d, d))
    cdef double[:, ::1] tmp = np.empty((d, d))
    cdef long s
    cdef Py_ssize_t i, j, l
    cdef double acc, h2 = 0.5 * dt, w = dt / 6.0
    with nogil:
        for s in range(nsteps):
            # k1 = A0 phi
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += a[2 * s, i, l] * phi[l, j]
                    k1[i, j] = acc
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = phi[i, j] + h2 * k1[i, j]
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += a[2 * s + 1, i, l] * tmp[l, j]
                    k2[i, j] = acc
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = phi[i, j] + h2 * k2[i, j]
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += a[2 * s + 1, i, l] * tmp[l, j]
                    k3[i, j] = acc
            for i in range(d):
                for j in range(d):
                    tmp[i, j] = phi[i, j] + dt * k3[i, j]
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += a[2 * s + 2, i, l] * tmp[l, j]
                    k4[i, j] = acc
            for i in range(d):
                for j in range(d):
                    phi[i, j] += w * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
    return phi_arr
