"""Compiled inner loops: CSR products and dense double-double LU.

All kernels are compiled without fastmath so every float operation rounds
exactly once in IEEE order; the two_sum / two_prod transforms below rely
on that. They mirror the scalar definitions in doubledouble.py.
"""

import numpy as np
from numba import njit

_SPLITTER = 134217729.0


@njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    t = s - a
    e = (a - (s - t)) + (b - t)
    return s, e


@njit(cache=True, inline="always")
def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


@njit(cache=True, inline="always")
def _two_prod(a, b):
    p = a * b
    t = _SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


@njit(cache=True, inline="always")
def _dd_add(ah, al, bh, bl):
    sh, se = _two_sum(ah, bh)
    tl, te = _two_sum(al, bl)
    se += tl
    sh, se = _quick_two_sum(sh, se)
    se += te
    return _quick_two_sum(sh, se)


@njit(cache=True, inline="always")
def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e += ah * bl + al * bh
    return _quick_two_sum(p, e)


@njit(cache=True, inline="always")
def _dd_div(ah, al, bh, bl):
    q1 = ah / bh
    th, tl = _dd_mul(bh, bl, q1, 0.0)
    rh, rl = _dd_add(ah, al, -th, -tl)
    q2 = rh / bh
    th, tl = _dd_mul(bh, bl, q2, 0.0)
    rh, rl = _dd_add(rh, rl, -th, -tl)
    q3 = rh / bh
    s, e = _quick_two_sum(q1, q2)
    return _quick_two_sum(s, e + q3)


@njit(cache=True)
def csr_matvec(row_ptr, col_idx, vals, x, out):
    """Sequential CSR product, one multiply and one add per entry."""
    for i in range(out.shape[0]):
        s = out[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            s = s + vals[k] * x[col_idx[k]]
        out[i] = s


@njit(cache=True)
def dd_csr_matvec(row_ptr, col_idx, vals, x, out_hi, out_lo):
    """CSR product accumulated in double-double; vals and x are doubles."""
    for i in range(out_hi.shape[0]):
        sh = 0.0
        sl = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            p, e = _two_prod(vals[k], x[col_idx[k]])
            sh, sl = _dd_add(sh, sl, p, e)
        out_hi[i] = sh
        out_lo[i] = sl


@njit(cache=True)
def dd_csr_matvec_ddx(row_ptr, col_idx, vals, xh, xl, out_hi, out_lo):
    """CSR product with a double-double input vector."""
    for i in range(out_hi.shape[0]):
        sh = 0.0
        sl = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[k]
            ph, pl = _dd_mul(xh[j], xl[j], vals[k], 0.0)
            sh, sl = _dd_add(sh, sl, ph, pl)
        out_hi[i] = sh
        out_lo[i] = sl


@njit(cache=True)
def dd_lu_factor(hi, lo, piv):
    """In-place LU with partial pivoting on a double-double matrix.

    Multipliers land in the strict lower triangle. Returns -1 on success
    or the column index of a zero pivot.
    """
    n = hi.shape[0]
    for k in range(n):
        p = k
        best = abs(hi[k, k])
        for i in range(k + 1, n):
            a = abs(hi[i, k])
            if a > best:
                best = a
                p = i
        if hi[p, k] == 0.0:
            return k
        piv[k] = p
        if p != k:
            for j in range(n):
                hi[k, j], hi[p, j] = hi[p, j], hi[k, j]
                lo[k, j], lo[p, j] = lo[p, j], lo[k, j]
        dh = hi[k, k]
        dl = lo[k, k]
        for i in range(k + 1, n):
            mh, ml = _dd_div(hi[i, k], lo[i, k], dh, dl)
            hi[i, k] = mh
            lo[i, k] = ml
            for j in range(k + 1, n):
                th, tl = _dd_mul(mh, ml, hi[k, j], lo[k, j])
                hi[i, j], lo[i, j] = _dd_add(hi[i, j], lo[i, j], -th, -tl)
    return -1


@njit(cache=True)
def dd_lu_solve(hi, lo, piv, bh, bl, xh, xl):
    """Solve with a dd_lu_factor output; b given and x returned as dd pairs."""
    n = hi.shape[0]
    for i in range(n):
        xh[i] = bh[i]
        xl[i] = bl[i]
    for k in range(n):
        p = piv[k]
        if p != k:
            xh[k], xh[p] = xh[p], xh[k]
            xl[k], xl[p] = xl[p], xl[k]
        for i in range(k + 1, n):
            th, tl = _dd_mul(hi[i, k], lo[i, k], xh[k], xl[k])
            xh[i], xl[i] = _dd_add(xh[i], xl[i], -th, -tl)
    for i in range(n - 1, -1, -1):
        sh = xh[i]
        sl = xl[i]
        for j in range(i + 1, n):
            th, tl = _dd_mul(hi[i, j], lo[i, j], xh[j], xl[j])
            sh, sl = _dd_add(sh, sl, -th, -tl)
        xh[i], xl[i] = _dd_div(sh, sl, hi[i, i], lo[i, i])
