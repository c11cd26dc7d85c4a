# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: three-term recurrence with compensated sums, and
the phase unwinding sweep.

Every arithmetic step mirrors ``_pykernels`` operation for operation, so the
two backends produce bit-identical output (the extension is built with
``-ffp-contract=off``).
"""
import numpy as np

from libc.math cimport atan2, cos, fabs, fmod, isfinite, sin, sqrt

cdef double TWO_PI = 6.283185307179586


cdef inline void _neumaier(double* s, double* c, double x) noexcept nogil:
    cdef double t = s[0] + x
    if fabs(s[0]) >= fabs(x):
        c[0] += (s[0] - t) + x
    else:
        c[0] += (x - t) + s[0]
    s[0] = t


def three_term(const double[::1] gamma, const double[::1] shift, double omega,
               Py_ssize_t n_max, Py_ssize_t stride, bint keep):
    cdef Py_ssize_t n, k = 0
    cdef bint shifted = shift.shape[0] > 0
    cdef double pm = 0.0, pc = 1.0, pn, gm = 1.0, x
    cdef double s2 = 0.0, c2 = 0.0, si = 0.0, ci = 0.0
    cdef Py_ssize_t n_rows = n_max // stride + 2
    cdef Py_ssize_t bad = -1

    rows_arr = np.empty((n_rows, 5), dtype=np.float64)
    cdef double[:, ::1] rows = rows_arr
    cdef double[::1] p, cum2, cumi
    if keep:
        p_arr = np.empty(n_max + 2, dtype=np.float64)
        cum2_arr = np.empty(n_max + 1, dtype=np.float64)
        cumi_arr = np.empty(n_max + 1, dtype=np.float64)
        p = p_arr
        cum2 = cum2_arr
        cumi = cumi_arr
        p[0] = 1.0
    else:
        p_arr = cum2_arr = cumi_arr = None

    with nogil:
        for n in range(n_max + 1):
            x = omega + shift[n] if shifted else omega
            pn = (x * pc - gm * pm) / gamma[n]
            if not isfinite(pn):
                bad = n + 1
                break
            _neumaier(&s2, &c2, pc * pc)
            _neumaier(&si, &ci, 1.0 / gamma[n])
            if keep:
                p[n + 1] = pn
                cum2[n] = s2 + c2
                cumi[n] = si + ci
            if n % stride == 0 or n == n_max:
                rows[k, 0] = n
                rows[k, 1] = pc
                rows[k, 2] = pn
                rows[k, 3] = s2 + c2
                rows[k, 4] = si + ci
                k += 1
            pm = pc
            pc = pn
            gm = gamma[n]
    return rows_arr[:k], p_arr, cum2_arr, cumi_arr, bad


cdef inline double _lift(double prev, double target) noexcept nogil:
    cdef double d = fmod(target - prev, TWO_PI)
    if d <= 0.0:
        d += TWO_PI
    return d


def unwind(const double[::1] are, const double[::1] aim, const double[::1] bre,
           const double[::1] bim, const double[::1] arg_e):
    # the phase is carried as whole turns plus a fraction in [0, 2pi), so the
    # trigonometric calls never see a large argument
    cdef Py_ssize_t m = arg_e.shape[0], n
    phi_arr = np.empty(m, dtype=np.float64)
    delta_arr = np.empty(m, dtype=np.float64)
    mu_arr = np.empty(m, dtype=np.float64)
    regime_arr = np.zeros(m, dtype=np.uint8)
    miss_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] phi = phi_arr, delta = delta_arr, mu = mu_arr, miss = miss_arr
    cdef unsigned char[::1] regime = regime_arr
    cdef double turns = 0.0, frac, th, c, s, zr, zi, d, w

    with nogil:
        d = _lift(0.0, arg_e[0])
        frac = d
        if frac >= TWO_PI:
            frac -= TWO_PI
            turns += 1.0
        phi[0] = turns * TWO_PI + frac
        delta[0] = d
        mu[0] = 0.0
        for n in range(1, m):
            th = 2.0 * frac
            c = cos(th)
            s = sin(th)
            zr = are[n] + bre[n] * c + bim[n] * s
            zi = aim[n] + bim[n] * c - bre[n] * s
            mu[n] = sqrt(zr * zr + zi * zi)
            if aim[n] > 0.0 and aim[n] * aim[n] > bre[n] * bre[n] + bim[n] * bim[n]:
                regime[n] = 1
                d = atan2(zi, zr)
            else:
                d = _lift(frac, arg_e[n])
            frac += d
            if frac >= TWO_PI:
                frac -= TWO_PI
                turns += 1.0
            phi[n] = turns * TWO_PI + frac
            delta[n] = d
            w = fmod(frac - arg_e[n], TWO_PI)
            if w > 0.5 * TWO_PI:
                w -= TWO_PI
            elif w < -0.5 * TWO_PI:
                w += TWO_PI
            miss[n] = fabs(w)
    return phi_arr, delta_arr, mu_arr, regime_arr, miss_arr


def neumaier_cumsum(const double[::1] values):
    cdef Py_ssize_t n, m = values.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double s = 0.0, c = 0.0
    with nogil:
        for n in range(m):
            _neumaier(&s, &c, values[n])
            out[n] = s + c
    return out_arr
