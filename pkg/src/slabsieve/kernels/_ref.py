"""Pure-numpy reference implementations of the hot kernels.

Same counter discipline and same per-coordinate arithmetic as the jitted
versions in ``_numba``; only the accumulation order differs (vector reductions
here, sequential loops there), so results agree to float roundoff and the
uniform streams agree exactly.  This path is selected with
``SLABSIEVE_BACKEND=numpy`` and is what the benchmark compares against.
"""

from __future__ import annotations

import numpy as np

from .._rng import GOLDEN, _mix_vec, ndtri

_QLO = 2.0**-54
_QHI = 1.0 - 2.0**-53


def _uniforms_at(key: int, counters: np.ndarray) -> np.ndarray:
    z = np.uint64(key) + (counters + np.uint64(1)) * np.uint64(GOLDEN)
    z = _mix_vec(z)
    return (z >> np.uint64(11)) * 2.0**-53 + 2.0**-54


def _tilted_values(idx, u2, mu, sd, clo, cw, lo, hi):
    q = clo[idx] + u2 * cw[idx]
    q = np.clip(q, _QLO, _QHI)
    v = mu[idx] + sd[idx] * ndtri(q)
    return np.clip(v, lo[idx], hi[idx])


def product_losses(p, mu, sd, clo, cw, lo, hi, center, levelw, key, draws):
    """Losses of posterior draws to a fixed center, coordinate-wise prior.

    Per draw and coordinate i: Bernoulli(p[i]) selects the tilted-slab value
    (inverse CDF through the precomputed truncation CDF window [clo, clo+cw]),
    else the coordinate is 0.  Returns (l2[draws], linf[draws]) where linf is
    the level-weighted sum of per-level maxima with weights levelw[j].
    """
    n_coeff = p.size
    n_levels = levelw.size
    offsets = (1 << np.arange(n_levels)) - 1  # start of each level in the flat layout
    abs_center = np.abs(center)
    base_sq = float(center @ center)
    csq = center * center

    l2 = np.empty(draws)
    linf = np.empty(draws)
    coeff_ctr = 2 * np.arange(n_coeff, dtype=np.uint64)
    for d in range(draws):
        ctr0 = np.uint64(2 * d * n_coeff) + coeff_ctr
        u1 = _uniforms_at(key, ctr0)
        idx = np.nonzero(u1 < p)[0]
        u2 = _uniforms_at(key, ctr0[idx] + np.uint64(1))
        v = _tilted_values(idx, u2, mu, sd, clo, cw, lo, hi)
        dev = v - center[idx]
        l2[d] = np.sqrt(max(base_sq + np.sum(dev * dev - csq[idx]), 0.0))
        work = abs_center.copy()
        work[idx] = np.abs(dev)
        linf[d] = levelw @ np.maximum.reduceat(work, offsets)
    return l2, linf


def block_losses(p_act, mu, sd, clo, cw, lo, hi, center, levelw, key, draws):
    """Level-wise variant: one Bernoulli per level, all-or-nothing blocks."""
    n_coeff = mu.size
    n_levels = levelw.size
    offsets = (1 << np.arange(n_levels)) - 1
    sizes = 1 << np.arange(n_levels)
    level_of = np.repeat(np.arange(n_levels), sizes)
    abs_center = np.abs(center)
    base_sq = float(center @ center)
    csq = center * center
    stride = n_levels + n_coeff

    l2 = np.empty(draws)
    linf = np.empty(draws)
    lvl_ctr = np.arange(n_levels, dtype=np.uint64)
    coeff_ctr = np.uint64(n_levels) + np.arange(n_coeff, dtype=np.uint64)
    for d in range(draws):
        base = np.uint64(d * stride)
        ua = _uniforms_at(key, base + lvl_ctr)
        active = ua < p_act
        idx = np.nonzero(active[level_of])[0]
        u2 = _uniforms_at(key, base + coeff_ctr[idx])
        v = _tilted_values(idx, u2, mu, sd, clo, cw, lo, hi)
        dev = v - center[idx]
        l2[d] = np.sqrt(max(base_sq + np.sum(dev * dev - csq[idx]), 0.0))
        work = abs_center.copy()
        work[idx] = np.abs(dev)
        linf[d] = levelw @ np.maximum.reduceat(work, offsets)
    return l2, linf
