# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: rate-equation right-hand side and the Dormand-Prince loop.

Mirrors ``_pykernels`` expression for expression (see the layout notes
there).  Build with ``-ffp-contract=off`` so no FMA contraction changes
rounding relative to the NumPy backend.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs, sqrt, pow, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"

cdef int STATUS_OK = 0
cdef int STATUS_UNDERFLOW = 1
cdef int STATUS_NONFINITE = 2
cdef int STATUS_MAX_STEPS = 3

cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0
cdef double A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0
cdef double A42 = -56.0 / 15.0
cdef double A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0
cdef double A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0
cdef double A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0
cdef double A62 = -355.0 / 33.0
cdef double A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0
cdef double A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0
cdef double B3 = 500.0 / 1113.0
cdef double B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0
cdef double B6 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0
cdef double E3 = -71.0 / 16695.0
cdef double E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0
cdef double E6 = 22.0 / 525.0
cdef double E7 = -1.0 / 40.0
cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 5.0


cdef double _tree_sum(const double* x, Py_ssize_t n, double* buf) noexcept nogil:
    cdef Py_ssize_t m = 1, i
    if n == 0:
        return 0.0
    while m < n:
        m *= 2
    for i in range(n):
        buf[i] = x[i]
    for i in range(n, m):
        buf[i] = 0.0
    while m > 1:
        m //= 2
        for i in range(m):
            buf[i] = buf[i] + buf[i + m]
    return buf[0]


def pairwise_sum(const double[::1] x):
    cdef Py_ssize_t n = x.shape[0], m = 1
    while m < n:
        m *= 2
    cdef double* buf = <double*> malloc(max(m, 1) * sizeof(double))
    cdef double s
    try:
        s = _tree_sum(&x[0] if n > 0 else NULL, n, buf)
    finally:
        free(buf)
    return s


cdef struct Work:
    Py_ssize_t J
    const double* mu2
    const double* mu4
    const double* wmu2
    const double* wmu4
    const double* w
    double g2, g4, od, oc, rogue, conserve
    double* t3
    double* t4
    double* tl
    double* buf
    int nthreads


cdef void _rhs(const double* y, double* out, Work* wk) noexcept nogil:
    cdef Py_ssize_t J = wk.J, j
    cdef double g2 = wk.g2, g4 = wk.g4, od = wk.od, oc = wk.oc
    cdef double n1 = y[0], n2 = y[1], rr = y[2], ri = y[3]
    cdef const double* n3 = y + 4
    cdef const double* n4 = y + 4 + J
    cdef const double* qr = y + 4 + 2 * J
    cdef const double* qi = y + 4 + 3 * J
    cdef double s3, s4, sl, d, dn1
    cdef double half_oc = 0.5 * oc

    if wk.nthreads > 1:
        for j in prange(J, num_threads=wk.nthreads, schedule="static"):
            wk.t3[j] = wk.wmu2[j] * (n3[j] + 1.0)
            wk.t4[j] = wk.wmu4[j] * n4[j]
            wk.tl[j] = wk.w[j] * n4[j]
    else:
        for j in range(J):
            wk.t3[j] = wk.wmu2[j] * (n3[j] + 1.0)
            wk.t4[j] = wk.wmu4[j] * n4[j]
            wk.tl[j] = wk.w[j] * n4[j]
    s3 = _tree_sum(wk.t3, J, wk.buf)
    s4 = _tree_sum(wk.t4, J, wk.buf)
    sl = _tree_sum(wk.tl, J, wk.buf)

    d = g4 * s4 - g2 * s3
    dn1 = -od * ri + g4 * s4 * (n1 + 1.0)
    if wk.conserve != 0.0:
        dn1 = dn1 + g4 * (sl - s4)
    else:
        dn1 = dn1 - wk.rogue * n1
    out[0] = dn1
    out[1] = od * ri - g2 * n2 * s3
    out[2] = 0.5 * rr * d
    out[3] = 0.5 * od * (n1 - n2) + 0.5 * ri * d

    if wk.nthreads > 1:
        for j in prange(J, num_threads=wk.nthreads, schedule="static"):
            _ring(j, J, g2, g4, oc, half_oc, n1, n2, n3, n4, qr, qi, wk.mu2, wk.mu4, out)
    else:
        for j in range(J):
            _ring(j, J, g2, g4, oc, half_oc, n1, n2, n3, n4, qr, qi, wk.mu2, wk.mu4, out)

    if wk.conserve != 0.0:
        out[4 + 4 * J] = 0.0
        out[5 + 4 * J] = 0.0
    else:
        out[4 + 4 * J] = g4 * s4 * (n1 + 1.0)
        out[5 + 4 * J] = g4 * sl + wk.rogue * n1


cdef inline void _ring(Py_ssize_t j, Py_ssize_t J, double g2, double g4, double oc, double half_oc,
                       double n1, double n2, const double* n3, const double* n4,
                       const double* qr, const double* qi, const double* mu2, const double* mu4,
                       double* out) noexcept nogil:
    cdef double a = g2 * mu2[j] * n2
    cdef double b = g4 * (mu4[j] * n1 + 1.0)
    cdef double e = a - b
    out[4 + j] = -oc * qi[j] + a * (n3[j] + 1.0)
    out[4 + J + j] = oc * qi[j] - b * n4[j]
    out[4 + 2 * J + j] = 0.5 * qr[j] * e
    out[4 + 3 * J + j] = half_oc * (n3[j] - n4[j]) + 0.5 * qi[j] * e


cdef Work _make_work(const double[::1] p, const double[::1] mu2, const double[::1] mu4,
                     const double[::1] wmu2, const double[::1] wmu4, const double[::1] w,
                     int nthreads):
    cdef Work wk
    cdef Py_ssize_t J = mu2.shape[0], m = 1
    while m < J:
        m *= 2
    wk.J = J
    wk.mu2 = &mu2[0]
    wk.mu4 = &mu4[0]
    wk.wmu2 = &wmu2[0]
    wk.wmu4 = &wmu4[0]
    wk.w = &w[0]
    wk.g2 = p[0]
    wk.g4 = p[1]
    wk.od = p[2]
    wk.oc = p[3]
    wk.rogue = p[4]
    wk.conserve = p[5]
    wk.t3 = <double*> malloc(J * sizeof(double))
    wk.t4 = <double*> malloc(J * sizeof(double))
    wk.tl = <double*> malloc(J * sizeof(double))
    wk.buf = <double*> malloc(m * sizeof(double))
    wk.nthreads = nthreads
    if wk.t3 == NULL or wk.t4 == NULL or wk.tl == NULL or wk.buf == NULL:
        _free_work(&wk)
        raise MemoryError()
    return wk


cdef void _free_work(Work* wk) noexcept:
    free(wk.t3)
    free(wk.t4)
    free(wk.tl)
    free(wk.buf)
    wk.t3 = NULL
    wk.t4 = NULL
    wk.tl = NULL
    wk.buf = NULL


def rhs(const double[::1] y, const double[::1] p, const double[::1] mu2, const double[::1] mu4,
        const double[::1] wmu2, const double[::1] wmu4, const double[::1] w, double[::1] out,
        int nthreads=1):
    if y.shape[0] != 6 + 4 * mu2.shape[0] or out.shape[0] != y.shape[0]:
        raise ValueError("state length does not match ring count")
    cdef Work wk = _make_work(p, mu2, mu4, wmu2, wmu4, w, nthreads)
    try:
        with nogil:
            _rhs(&y[0], &out[0], &wk)
    finally:
        _free_work(&wk)
    return np.asarray(out)


def integrate(const double[::1] y0, const double[::1] p, const double[::1] mu2,
              const double[::1] mu4, const double[::1] wmu2, const double[::1] wmu4,
              const double[::1] w, const double[::1] sample_times, double rtol, double atol,
              double max_step, double first_step, long max_steps, int nthreads=1):
    cdef Py_ssize_t dim = y0.shape[0], ns = sample_times.shape[0], i, idx = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=2] samples_arr = np.zeros((ns, dim))
    cdef double[:, ::1] samples = samples_arr
    cdef double[::1] y = np.array(y0, dtype=np.float64)
    cdef double[::1] ynew = np.empty(dim)
    cdef double[::1] ytmp = np.empty(dim)
    cdef double[::1] errv = np.empty(dim)
    cdef double[:, ::1] K = np.empty((7, dim))
    cdef double* k1 = &K[0, 0]
    cdef double* k2 = &K[1, 0]
    cdef double* k3 = &K[2, 0]
    cdef double* k4 = &K[3, 0]
    cdef double* k5 = &K[4, 0]
    cdef double* k6 = &K[5, 0]
    cdef double* k7 = &K[6, 0]
    cdef double* swap
    cdef double t = 0.0, t_target, h, hs, h_new, factor, err_norm, sc, r, inv_dim = 1.0 / dim
    cdef double ay, an
    cdef bint landing
    cdef long n_acc = 0, n_rej = 0, nfev = 1
    cdef int status = STATUS_OK
    cdef double* ebuf
    cdef Py_ssize_t m = 1

    while m < dim:
        m *= 2
    ebuf = <double*> malloc(m * sizeof(double))
    if ebuf == NULL:
        raise MemoryError()
    cdef Work wk = _make_work(p, mu2, mu4, wmu2, wmu4, w, nthreads)

    try:
        while idx < ns and sample_times[idx] <= 0.0:
            for i in range(dim):
                samples[idx, i] = y[i]
            idx += 1
        with nogil:
            _rhs(&y[0], k1, &wk)
            h = first_step if first_step < max_step else max_step
            while idx < ns:
                if n_acc + n_rej >= max_steps:
                    status = STATUS_MAX_STEPS
                    break
                t_target = sample_times[idx]
                landing = t + h >= t_target
                if landing:
                    hs = t_target - t
                elif t + 1.1 * h > t_target:
                    hs = 0.5 * (t_target - t)
                else:
                    hs = h
                if hs < 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0):
                    status = STATUS_UNDERFLOW
                    break

                for i in range(dim):
                    ytmp[i] = y[i] + hs * (A21 * k1[i])
                _rhs(&ytmp[0], k2, &wk)
                for i in range(dim):
                    ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
                _rhs(&ytmp[0], k3, &wk)
                for i in range(dim):
                    ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                _rhs(&ytmp[0], k4, &wk)
                for i in range(dim):
                    ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                _rhs(&ytmp[0], k5, &wk)
                for i in range(dim):
                    ytmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                                           + A65 * k5[i])
                _rhs(&ytmp[0], k6, &wk)
                for i in range(dim):
                    ynew[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i]
                                           + B6 * k6[i])
                _rhs(&ynew[0], k7, &wk)
                nfev += 6

                for i in range(dim):
                    r = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                              + E7 * k7[i])
                    ay = fabs(y[i])
                    an = fabs(ynew[i])
                    sc = atol + rtol * (ay if ay >= an else an)
                    r = r / sc
                    errv[i] = r * r
                err_norm = sqrt(_tree_sum(&errv[0], dim, ebuf) * inv_dim)
                if not isfinite(err_norm):
                    status = STATUS_NONFINITE
                    break

                if err_norm <= 1.0:
                    if err_norm == 0.0:
                        factor = MAX_FACTOR
                    else:
                        factor = SAFETY * pow(err_norm, -0.2)
                        if factor < MIN_FACTOR:
                            factor = MIN_FACTOR
                        if factor > MAX_FACTOR:
                            factor = MAX_FACTOR
                    h_new = hs * factor
                    if h_new > max_step:
                        h_new = max_step
                    if landing:
                        t = t_target
                        if h > h_new:
                            h_new = h
                        if h_new > max_step:
                            h_new = max_step
                    else:
                        t = t + hs
                    for i in range(dim):
                        y[i] = ynew[i]
                    swap = k1
                    k1 = k7
                    k7 = swap
                    n_acc += 1
                    h = h_new
                    if landing:
                        for i in range(dim):
                            samples[idx, i] = y[i]
                        idx += 1
                else:
                    factor = SAFETY * pow(err_norm, -0.2)
                    if factor < MIN_FACTOR:
                        factor = MIN_FACTOR
                    h = hs * factor
                    n_rej += 1
    finally:
        _free_work(&wk)
        free(ebuf)
    return status, t, samples_arr, n_acc, n_rej, nfev
