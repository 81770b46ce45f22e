"""Jitted loss-sampling kernels.

Scalar twins of the generator in ``_rng`` (same splitmix64 constants, same
AS 241 coefficients) fused with the draw/loss loops, so a posterior sample is
never materialized: each draw streams through the coordinates accumulating
the squared error and the per-level maxima.  nogil lets the harness thread
over replicates.  fastmath stays off; contraction would break agreement with
the numpy path.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .._rng import (
    GOLDEN,
    _MIX1,
    _MIX2,
    NDTRI_A,
    NDTRI_B,
    NDTRI_C,
    NDTRI_D,
    NDTRI_E,
    NDTRI_F,
)

_GOLD = np.uint64(GOLDEN)
_M1 = np.uint64(_MIX1)
_M2 = np.uint64(_MIX2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)

_QLO = 2.0**-54
_QHI = 1.0 - 2.0**-53

_A0, _A1, _A2, _A3, _A4, _A5, _A6, _A7 = NDTRI_A
_B0, _B1, _B2, _B3, _B4, _B5, _B6 = NDTRI_B
_C0, _C1, _C2, _C3, _C4, _C5, _C6, _C7 = NDTRI_C
_D0, _D1, _D2, _D3, _D4, _D5, _D6 = NDTRI_D
_E0, _E1, _E2, _E3, _E4, _E5, _E6, _E7 = NDTRI_E
_F0, _F1, _F2, _F3, _F4, _F5, _F6 = NDTRI_F


@njit(cache=True, nogil=True)
def _u01(key, ctr):
    z = key + (ctr + _ONE) * _GOLD
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    z = z ^ (z >> _S31)
    return (z >> _S11) * 2.0**-53 + 2.0**-54


@njit(cache=True, nogil=True)
def _ndtri(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = ((((((_A7 * r + _A6) * r + _A5) * r + _A4) * r + _A3) * r + _A2) * r + _A1) * r + _A0
        den = ((((((_B6 * r + _B5) * r + _B4) * r + _B3) * r + _B2) * r + _B1) * r + _B0) * r + 1.0
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = ((((((_C7 * r + _C6) * r + _C5) * r + _C4) * r + _C3) * r + _C2) * r + _C1) * r + _C0
        den = ((((((_D6 * r + _D5) * r + _D4) * r + _D3) * r + _D2) * r + _D1) * r + _D0) * r + 1.0
    else:
        r = r - 5.0
        num = ((((((_E7 * r + _E6) * r + _E5) * r + _E4) * r + _E3) * r + _E2) * r + _E1) * r + _E0
        den = ((((((_F6 * r + _F5) * r + _F4) * r + _F3) * r + _F2) * r + _F1) * r + _F0) * r + 1.0
    z = num / den
    if q < 0.0:
        return -z
    return z


@njit(cache=True, nogil=True)
def _tilted_value(i, u2, mu, sd, clo, cw, lo, hi):
    q = clo[i] + u2 * cw[i]
    if q < _QLO:
        q = _QLO
    elif q > _QHI:
        q = _QHI
    v = mu[i] + sd[i] * _ndtri(q)
    if v < lo[i]:
        v = lo[i]
    elif v > hi[i]:
        v = hi[i]
    return v


@njit(cache=True, nogil=True)
def product_losses(p, mu, sd, clo, cw, lo, hi, center, levelw, key, draws):
    n_coeff = p.shape[0]
    n_levels = levelw.shape[0]
    l2 = np.empty(draws)
    linf = np.empty(draws)
    for d in range(draws):
        ctr = np.uint64(2 * d * n_coeff)
        l2sq = 0.0
        acc = 0.0
        i = 0
        for j in range(n_levels):
            lmax = 0.0
            for _ in range(1 << j):
                u1 = _u01(key, ctr)
                if u1 < p[i]:
                    u2 = _u01(key, ctr + _ONE)
                    dev = _tilted_value(i, u2, mu, sd, clo, cw, lo, hi) - center[i]
                else:
                    dev = -center[i]
                l2sq += dev * dev
                a = abs(dev)
                if a > lmax:
                    lmax = a
                ctr += _TWO
                i += 1
            acc += levelw[j] * lmax
        l2[d] = np.sqrt(l2sq)
        linf[d] = acc
    return l2, linf


@njit(cache=True, nogil=True)
def block_losses(p_act, mu, sd, clo, cw, lo, hi, center, levelw, key, draws):
    n_coeff = mu.shape[0]
    n_levels = levelw.shape[0]
    stride = n_levels + n_coeff
    l2 = np.empty(draws)
    linf = np.empty(draws)
    for d in range(draws):
        base = np.uint64(d * stride)
        cc = base + np.uint64(n_levels)  # coordinate counters follow the level block
        l2sq = 0.0
        acc = 0.0
        i = 0
        for j in range(n_levels):
            active = _u01(key, base + np.uint64(j)) < p_act[j]
            lmax = 0.0
            for _ in range(1 << j):
                if active:
                    u2 = _u01(key, cc)
                    dev = _tilted_value(i, u2, mu, sd, clo, cw, lo, hi) - center[i]
                else:
                    dev = -center[i]
                l2sq += dev * dev
                a = abs(dev)
                if a > lmax:
                    lmax = a
                cc += _ONE
                i += 1
            acc += levelw[j] * lmax
        l2[d] = np.sqrt(l2sq)
        linf[d] = acc
    return l2, linf
