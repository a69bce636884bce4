"""NumPy reference kernels.

Every arithmetic expression here is mirrored operation-for-operation in
``_ckernels.pyx`` so the two backends agree bit for bit.  Keep them in
lockstep when editing either one.

State vector layout (rings = J)::

    [N1, N2, Re rho21, Im rho21, N3[J], N4[J], Re rho43[J], Im rho43[J], Npair, Nloss]

Parameter vector: ``[gamma2, gamma4, omega_d, omega_c, rogue_rate, conserve]``.
"""
import math

import numpy as np

BACKEND = "python"

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAX_STEPS = 3

# Dormand-Prince 5(4)
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0
)
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


def pairwise_sum(x):
    """Sum by a fixed binary tree over the zero-padded power-of-two length.

    The tree shape depends only on ``len(x)``, never on thread count.
    """
    n = x.shape[0]
    if n == 0:
        return 0.0
    m = 1
    while m < n:
        m *= 2
    buf = np.zeros(m)
    buf[:n] = x
    while m > 1:
        m //= 2
        buf = buf[:m] + buf[m : 2 * m]
    return float(buf[0])


def rhs(y, p, mu2, mu4, wmu2, wmu4, w, out, nthreads=1):
    J = mu2.shape[0]
    g2, g4, od, oc, rogue, conserve = p[0], p[1], p[2], p[3], p[4], p[5]
    n1, n2, rr, ri = y[0], y[1], y[2], y[3]
    n3 = y[4 : 4 + J]
    n4 = y[4 + J : 4 + 2 * J]
    qr = y[4 + 2 * J : 4 + 3 * J]
    qi = y[4 + 3 * J : 4 + 4 * J]

    s3 = pairwise_sum(wmu2 * (n3 + 1.0))
    s4 = pairwise_sum(wmu4 * n4)
    sl = pairwise_sum(w * n4)

    d = g4 * s4 - g2 * s3
    dn1 = -od * ri + g4 * s4 * (n1 + 1.0)
    if conserve != 0.0:
        dn1 = dn1 + g4 * (sl - s4)
    else:
        dn1 = dn1 - rogue * n1
    out[0] = dn1
    out[1] = od * ri - g2 * n2 * s3
    out[2] = 0.5 * rr * d
    out[3] = 0.5 * od * (n1 - n2) + 0.5 * ri * d

    a = g2 * mu2 * n2
    b = g4 * (mu4 * n1 + 1.0)
    e = a - b
    out[4 : 4 + J] = -oc * qi + a * (n3 + 1.0)
    out[4 + J : 4 + 2 * J] = oc * qi - b * n4
    out[4 + 2 * J : 4 + 3 * J] = 0.5 * qr * e
    out[4 + 3 * J : 4 + 4 * J] = (0.5 * oc) * (n3 - n4) + 0.5 * qi * e

    if conserve != 0.0:
        out[4 + 4 * J] = 0.0
        out[5 + 4 * J] = 0.0
    else:
        out[4 + 4 * J] = g4 * s4 * (n1 + 1.0)
        out[5 + 4 * J] = g4 * sl + rogue * n1
    return out


def integrate(y0, p, mu2, mu4, wmu2, wmu4, w, sample_times, rtol, atol, max_step, first_step,
              max_steps, nthreads=1):
    """Adaptive Dormand-Prince 5(4) integration landing exactly on ``sample_times``.

    Returns ``(status, t_fail, samples, n_accepted, n_rejected, n_fev)``.
    """
    dim = y0.shape[0]
    ns = sample_times.shape[0]
    samples = np.zeros((ns, dim))
    y = y0.copy()
    t = 0.0
    idx = 0
    while idx < ns and sample_times[idx] <= 0.0:
        samples[idx] = y
        idx += 1

    k1 = np.empty(dim); k2 = np.empty(dim); k3 = np.empty(dim); k4 = np.empty(dim)
    k5 = np.empty(dim); k6 = np.empty(dim); k7 = np.empty(dim)
    rhs(y, p, mu2, mu4, wmu2, wmu4, w, k1, nthreads)
    nfev = 1
    h = min(first_step, max_step)
    n_acc = 0
    n_rej = 0
    inv_dim = 1.0 / dim

    while idx < ns:
        if n_acc + n_rej >= max_steps:
            return STATUS_MAX_STEPS, t, samples, n_acc, n_rej, nfev
        t_target = sample_times[idx]
        landing = t + h >= t_target
        if landing:
            hs = t_target - t
        elif t + 1.1 * h > t_target:
            # split the remainder instead of leaving a sliver before the sample
            hs = 0.5 * (t_target - t)
        else:
            hs = h
        if hs < 1e-14 * max(1.0, abs(t)):
            return STATUS_UNDERFLOW, t, samples, n_acc, n_rej, nfev

        rhs(y + hs * (A21 * k1), p, mu2, mu4, wmu2, wmu4, w, k2, nthreads)
        rhs(y + hs * (A31 * k1 + A32 * k2), p, mu2, mu4, wmu2, wmu4, w, k3, nthreads)
        rhs(y + hs * (A41 * k1 + A42 * k2 + A43 * k3), p, mu2, mu4, wmu2, wmu4, w, k4, nthreads)
        rhs(y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), p, mu2, mu4, wmu2, wmu4, w, k5,
            nthreads)
        rhs(y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), p, mu2, mu4, wmu2,
            wmu4, w, k6, nthreads)
        ynew = y + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        rhs(ynew, p, mu2, mu4, wmu2, wmu4, w, k7, nthreads)
        nfev += 6

        err = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        ratio = err / scale
        err_norm = math.sqrt(pairwise_sum(ratio * ratio) * inv_dim)
        if not math.isfinite(err_norm):
            return STATUS_NONFINITE, t, samples, n_acc, n_rej, nfev

        if err_norm <= 1.0:
            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err_norm ** -0.2))
            h_new = min(hs * factor, max_step)
            if landing:
                t = t_target
                h_new = min(max(h_new, h), max_step)
            else:
                t = t + hs
            y = ynew
            k1, k7 = k7, k1
            n_acc += 1
            h = h_new
            if landing:
                samples[idx] = y
                idx += 1
        else:
            factor = max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
            h = hs * factor
            n_rej += 1
    return STATUS_OK, t, samples, n_acc, n_rej, nfev
