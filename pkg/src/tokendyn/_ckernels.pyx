# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Same signatures, same results up to floating-point summation order.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs, isfinite

cnp.import_array()

cdef enum:
    _COMPLETED = 0
    _BLOWUP = 1

STATUS_COMPLETED = _COMPLETED
STATUS_BLOWUP = _BLOWUP


cdef inline double _softplus(double u) nogil:
    if u > 0:
        return u + log1p(exp(-u))
    return log1p(exp(u))


cdef void _rhs(const double[:, ::1] x, const double[:, ::1] M,
               const double[:, ::1] sdelta, const double[::1] a,
               double[:, ::1] y, double[:, ::1] mx, double[:, ::1] gram,
               double[:, ::1] step, double[:, ::1] abar,
               double[:, :, ::1] P, bint want_P) noexcept nogil:
    cdef Py_ssize_t D = x.shape[0], L = x.shape[1]
    cdef Py_ssize_t d, e, l, j
    cdef double s, w, term

    for e in range(D):
        for j in range(L):
            s = 0.0
            for d in range(D):
                s = s + M[e, d] * x[d, j]
            mx[e, j] = s
    for l in range(L):
        for j in range(l + 1):
            s = 0.0
            for e in range(D):
                s = s + x[e, l] * mx[e, j]
            gram[l, j] = s
    for d in range(D):
        for l in range(L):
            s = 0.0
            for e in range(D):
                s = s + sdelta[d, e] * x[e, l]
            step[d, l] = _softplus(s)
            abar[d, l] = exp(-a[d] * step[d, l])

    for d in range(D):
        for l in range(L):
            s = 0.0
            w = 1.0
            j = l
            while j >= 0:
                term = gram[l, j] * step[d, j] * w
                if want_P:
                    P[d, l, j] = term
                s = s + term * x[d, j]
                w = w * abar[d, j]
                j -= 1
            y[d, l] = s


def attention_rhs(x, M, sdelta, a, want_P):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t D = xv.shape[0], L = xv.shape[1]
    y = np.empty((D, L))
    P = np.zeros((D, L, L)) if want_P else np.zeros((1, 1, 1))
    _rhs(xv, np.ascontiguousarray(M, dtype=np.float64),
         np.ascontiguousarray(sdelta, dtype=np.float64),
         np.ascontiguousarray(a, dtype=np.float64),
         y, np.empty((D, L)), np.empty((L, L)), np.empty((D, L)),
         np.empty((D, L)), P, want_P)
    return y, (P if want_P else None)


def recurrent_scan(abar, bbar, c, x):
    cdef const double[:, ::1] ab = np.ascontiguousarray(abar, dtype=np.float64)
    cdef const double[:, :, ::1] bb = np.ascontiguousarray(bbar, dtype=np.float64)
    cdef const double[:, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t D = xv.shape[0], L = xv.shape[1], N = cv.shape[1]
    cdef Py_ssize_t d, l, n
    cdef double s
    y = np.empty((D, L))
    cdef double[:, ::1] yv = y
    cdef double[::1] h = np.empty(N)
    with nogil:
        for d in range(D):
            for n in range(N):
                h[n] = 0.0
            for l in range(L):
                s = 0.0
                for n in range(N):
                    h[n] = ab[d, l] * h[n] + bb[d, l, n] * xv[d, l]
                    s = s + cv[l, n] * h[n]
                yv[d, l] = s
    return y


def rk4_run(x0, M, sdelta, a, double h, Py_ssize_t n_steps, record_steps, double threshold):
    cdef const double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(sdelta, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    x_arr = np.array(x0, dtype=np.float64, order="C")
    cdef double[:, ::1] x = x_arr
    cdef Py_ssize_t D = x.shape[0], L = x.shape[1]
    cdef const cnp.int64_t[::1] rec = np.ascontiguousarray(record_steps, dtype=np.int64)
    cdef Py_ssize_t n_total = rec.shape[0]

    out = np.empty((n_total, D, L))
    steps = np.empty(n_total, dtype=np.int64)
    cdef double[:, :, ::1] ov = out
    cdef cnp.int64_t[::1] sv_steps = steps

    cdef double[:, ::1] k1 = np.empty((D, L)), k2 = np.empty((D, L))
    cdef double[:, ::1] k3 = np.empty((D, L)), k4 = np.empty((D, L))
    cdef double[:, ::1] tmp = np.empty((D, L)), nxt = np.empty((D, L))
    cdef double[:, ::1] mx = np.empty((D, L)), gram = np.empty((L, L))
    cdef double[:, ::1] step = np.empty((D, L)), abar = np.empty((D, L))
    cdef double[:, :, ::1] Pdummy = np.zeros((1, 1, 1))

    cdef Py_ssize_t n_rec = 0, k, d, l, last = 0
    cdef int status = _COMPLETED
    cdef double v, hh = 0.5 * h, h6 = h / 6.0
    cdef bint bad

    with nogil:
        if n_total > 0 and rec[0] == 0:
            ov[0, :, :] = x
            sv_steps[0] = 0
            n_rec = 1
        for k in range(1, n_steps + 1):
            _rhs(x, Mv, sv, av, k1, mx, gram, step, abar, Pdummy, False)
            for d in range(D):
                for l in range(L):
                    tmp[d, l] = x[d, l] + hh * k1[d, l]
            _rhs(tmp, Mv, sv, av, k2, mx, gram, step, abar, Pdummy, False)
            for d in range(D):
                for l in range(L):
                    tmp[d, l] = x[d, l] + hh * k2[d, l]
            _rhs(tmp, Mv, sv, av, k3, mx, gram, step, abar, Pdummy, False)
            for d in range(D):
                for l in range(L):
                    tmp[d, l] = x[d, l] + h * k3[d, l]
            _rhs(tmp, Mv, sv, av, k4, mx, gram, step, abar, Pdummy, False)
            bad = False
            for d in range(D):
                for l in range(L):
                    v = x[d, l] + h6 * (k1[d, l] + 2.0 * k2[d, l] + 2.0 * k3[d, l] + k4[d, l])
                    if not isfinite(v) or fabs(v) > threshold:
                        bad = True
                    nxt[d, l] = v
            if bad:
                status = _BLOWUP
                break
            x[:, :] = nxt
            last = k
            while n_rec < n_total and rec[n_rec] == k:
                ov[n_rec, :, :] = x
                sv_steps[n_rec] = k
                n_rec += 1
        if status == _BLOWUP and (n_rec == 0 or sv_steps[n_rec - 1] != last):
            ov[n_rec, :, :] = x
            sv_steps[n_rec] = last
            n_rec += 1
    return out[:n_rec], steps[:n_rec], status, last
