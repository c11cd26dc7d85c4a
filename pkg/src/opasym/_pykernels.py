"""Pure-Python twin of ``_ckernels``.

Same operations in the same order, so results match the compiled backend
bit for bit. Used when the extension is not built or when
``OPASYM_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np

TWO_PI = 6.283185307179586


def _neumaier(s, c, x):
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


def three_term(gamma, shift, omega, n_max, stride, keep):
    gamma = np.asarray(gamma, dtype=np.float64).tolist()
    shifted = len(shift) > 0
    shift = np.asarray(shift, dtype=np.float64).tolist()
    omega = float(omega)
    pm, pc, gm = 0.0, 1.0, 1.0
    s2 = c2 = si = ci = 0.0
    rows = []
    p, cum2, cumi = ([1.0], [], []) if keep else (None, None, None)
    bad = -1
    for n in range(n_max + 1):
        x = omega + shift[n] if shifted else omega
        pn = (x * pc - gm * pm) / gamma[n]
        if not math.isfinite(pn):
            bad = n + 1
            break
        s2, c2 = _neumaier(s2, c2, pc * pc)
        si, ci = _neumaier(si, ci, 1.0 / gamma[n])
        if keep:
            p.append(pn)
            cum2.append(s2 + c2)
            cumi.append(si + ci)
        if n % stride == 0 or n == n_max:
            rows.append((float(n), pc, pn, s2 + c2, si + ci))
        pm, pc, gm = pc, pn, gamma[n]
    rows = np.array(rows, dtype=np.float64).reshape(-1, 5)
    if keep:
        p = np.array(p)
        cum2 = np.array(cum2)
        cumi = np.array(cumi)
        if bad < 0:
            return rows, p, cum2, cumi, bad
        # mirror the compiled kernel: the arrays are allocated full length
        full_p = np.empty(n_max + 2)
        full_p[: len(p)] = p
        full_2 = np.empty(n_max + 1)
        full_2[: len(cum2)] = cum2
        full_i = np.empty(n_max + 1)
        full_i[: len(cumi)] = cumi
        return rows, full_p, full_2, full_i, bad
    return rows, None, None, None, bad


def _lift(prev, target):
    d = math.fmod(target - prev, TWO_PI)
    if d <= 0.0:
        d += TWO_PI
    return d


def unwind(are, aim, bre, bim, arg_e):
    are, aim, bre, bim, arg_e = (np.asarray(v, dtype=np.float64).tolist()
                                 for v in (are, aim, bre, bim, arg_e))
    m = len(arg_e)
    phi = [0.0] * m
    delta = [0.0] * m
    mu = [0.0] * m
    regime = [0] * m
    miss = [0.0] * m
    turns = 0.0
    d = _lift(0.0, arg_e[0])
    frac = d
    if frac >= TWO_PI:
        frac -= TWO_PI
        turns += 1.0
    phi[0] = turns * TWO_PI + frac
    delta[0] = d
    for n in range(1, m):
        th = 2.0 * frac
        c = math.cos(th)
        s = math.sin(th)
        zr = are[n] + bre[n] * c + bim[n] * s
        zi = aim[n] + bim[n] * c - bre[n] * s
        mu[n] = math.sqrt(zr * zr + zi * zi)
        if aim[n] > 0.0 and aim[n] * aim[n] > bre[n] * bre[n] + bim[n] * bim[n]:
            regime[n] = 1
            d = math.atan2(zi, zr)
        else:
            d = _lift(frac, arg_e[n])
        frac += d
        if frac >= TWO_PI:
            frac -= TWO_PI
            turns += 1.0
        phi[n] = turns * TWO_PI + frac
        delta[n] = d
        w = math.fmod(frac - arg_e[n], TWO_PI)
        if w > 0.5 * TWO_PI:
            w -= TWO_PI
        elif w < -0.5 * TWO_PI:
            w += TWO_PI
        miss[n] = abs(w)
    return (np.array(phi), np.array(delta), np.array(mu),
            np.array(regime, dtype=np.uint8), np.array(miss))


def neumaier_cumsum(values):
    s = c = 0.0
    out = []
    for x in np.asarray(values, dtype=np.float64).tolist():
        s, c = _neumaier(s, c, x)
        out.append(s + c)
    return np.array(out, dtype=np.float64)
