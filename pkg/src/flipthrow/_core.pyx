# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled integration kernel. Mirrors _kernel_py exactly; see that module
for the packed state/input/parameter layouts and the model equations."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef void _deriv(double* x, double* u, double* par, double* dx) noexcept nogil:
    cdef double Mq = par[0]
    cdef double Mp = par[1]
    cdef double l = par[2]
    cdef double g = par[3]
    cdef int attached = par[4] != 0.0
    cdef double f = u[0]
    cdef double uf0, uf1, uf2, s, wsq, mt, c
    cdef double p0, p1, p2, w0, w1, w2
    cdef double Om0 = x[15], Om1 = x[16], Om2 = x[17]
    cdef double h0, h1, h2
    cdef int i

    # thrust vector f * R e3 (third column of row-major R)
    uf0 = f * x[8]
    uf1 = f * x[11]
    uf2 = f * x[14]

    dx[0] = x[3]
    dx[1] = x[4]
    dx[2] = x[5]

    if attached and Mp > 0.0:
        mt = Mq + Mp
        p0 = x[18]; p1 = x[19]; p2 = x[20]
        w0 = x[21]; w1 = x[22]; w2 = x[23]
        s = p0 * uf0 + p1 * uf1 + p2 * uf2
        wsq = w0 * w0 + w1 * w1 + w2 * w2
        c = s / mt - s / Mq + Mp * l * wsq / mt
        dx[3] = c * p0 + uf0 / Mq
        dx[4] = c * p1 + uf1 / Mq
        dx[5] = c * p2 + uf2 / Mq - g
        # pdot = w x p
        dx[18] = w1 * p2 - w2 * p1
        dx[19] = w2 * p0 - w0 * p2
        dx[20] = w0 * p1 - w1 * p0
        # wdot = -(p x uf)/(Mq l)
        c = -1.0 / (Mq * l)
        dx[21] = c * (p1 * uf2 - p2 * uf1)
        dx[22] = c * (p2 * uf0 - p0 * uf2)
        dx[23] = c * (p0 * uf1 - p1 * uf0)
    else:
        dx[3] = uf0 / Mq
        dx[4] = uf1 / Mq
        dx[5] = uf2 / Mq - g
        for i in range(18, 24):
            dx[i] = 0.0

    # Rdot = R hat(Om), row-major rows
    for i in range(3):
        h0 = x[6 + 3 * i]
        h1 = x[7 + 3 * i]
        h2 = x[8 + 3 * i]
        dx[6 + 3 * i] = h1 * Om2 - h2 * Om1
        dx[7 + 3 * i] = h2 * Om0 - h0 * Om2
        dx[8 + 3 * i] = h0 * Om1 - h1 * Om0

    # Omdot = Iinv (M - Om x I Om)
    h0 = par[5] * Om0 + par[6] * Om1 + par[7] * Om2
    h1 = par[8] * Om0 + par[9] * Om1 + par[10] * Om2
    h2 = par[11] * Om0 + par[12] * Om1 + par[13] * Om2
    cdef double m0 = u[1] - (Om1 * h2 - Om2 * h1)
    cdef double m1 = u[2] - (Om2 * h0 - Om0 * h2)
    cdef double m2 = u[3] - (Om0 * h1 - Om1 * h0)
    dx[15] = par[14] * m0 + par[15] * m1 + par[16] * m2
    dx[16] = par[17] * m0 + par[18] * m1 + par[19] * m2
    dx[17] = par[20] * m0 + par[21] * m1 + par[22] * m2


cdef void _project(double* x) noexcept nogil:
    cdef double A[9]
    cdef double G[9]
    cdef int it, i, j, k
    cdef double acc, n
    # two Newton polar steps: R <- R (3I - R^T R)/2
    for it in range(2):
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for k in range(3):
                    acc += x[6 + 3 * k + i] * x[6 + 3 * k + j]
                G[3 * i + j] = -0.5 * acc
            G[4 * i] += 1.5
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for k in range(3):
                    acc += x[6 + 3 * i + k] * G[3 * k + j]
                A[3 * i + j] = acc
        for i in range(9):
            x[6 + i] = A[i]

    n = sqrt(x[18] * x[18] + x[19] * x[19] + x[20] * x[20])
    if n > 0.0:
        x[18] /= n
        x[19] /= n
        x[20] /= n
    acc = x[21] * x[18] + x[22] * x[19] + x[23] * x[20]
    x[21] -= acc * x[18]
    x[22] -= acc * x[19]
    x[23] -= acc * x[20]


cdef void _step(double* x, double* u, double* par, double dt, double* out) noexcept nogil:
    cdef double k1[24]
    cdef double k2[24]
    cdef double k3[24]
    cdef double k4[24]
    cdef double tmp[24]
    cdef int i
    _deriv(x, u, par, k1)
    for i in range(24):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _deriv(tmp, u, par, k2)
    for i in range(24):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _deriv(tmp, u, par, k3)
    for i in range(24):
        tmp[i] = x[i] + dt * k3[i]
    _deriv(tmp, u, par, k4)
    for i in range(24):
        out[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    _project(out)


def deriv(double[::1] x, double[::1] u, double[::1] par, out=None):
    """Time derivative of the packed state. Returns a 24-vector."""
    if out is None:
        out = np.empty(24)
    cdef double[::1] o = out
    _deriv(&x[0], &u[0], &par[0], &o[0])
    return out


def project(double[::1] x):
    """In-place manifold projection; returns the same array."""
    _project(&x[0])
    return np.asarray(x)


def step(double[::1] x, double[::1] u, double[::1] par, double dt):
    """Classical RK4 advance followed by manifold projection."""
    out = np.empty(24)
    cdef double[::1] o = out
    _step(&x[0], &u[0], &par[0], dt, &o[0])
    return out


def step_n(double[::1] x, double[::1] u, double[::1] par, double dt, n):
    """n repeated fixed-input RK4 steps."""
    cdef long count = n
    cdef long i
    cdef int j
    out = np.array(x, dtype=float)
    buf = np.empty(24)
    cdef double[::1] a = out
    cdef double[::1] b = buf
    with nogil:
        for i in range(count):
            _step(&a[0], &u[0], &par[0], dt, &b[0])
            for j in range(24):
                a[j] = b[j]
    return out
