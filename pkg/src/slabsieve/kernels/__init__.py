"""Hot loss-sampling kernels with a selectable backend.

Two interchangeable implementations live here: jitted scalar loops
(``_numba``) and vectorized numpy (``_ref``).  The backend is picked once,
lazily: the ``SLABSIEVE_BACKEND`` environment variable ("numba" or "numpy")
wins, otherwise numba is used when importable.  ``set_backend`` overrides at
runtime, mainly for tests and the benchmark.

Uniform integer streams agree bit-for-bit between backends; float outputs
agree to roundoff (the log in the inverse CDF tail can differ by an ulp
between libm and numpy).  Determinism holds within a backend: same inputs,
same key, same bytes out, regardless of thread count.
"""

from __future__ import annotations

import os

import numpy as np

_BACKEND: str | None = None
_VALID = ("numba", "numpy")


def _resolve_default() -> str:
    name = os.environ.get("SLABSIEVE_BACKEND", "").strip().lower()
    if name:
        if name not in _VALID:
            raise ValueError(f"E:kernels:backend: SLABSIEVE_BACKEND must be one of {_VALID}, got {name!r}")
        if name == "numba" and not _numba_available():
            raise ValueError("E:kernels:backend: SLABSIEVE_BACKEND=numba but numba is not importable")
        return name
    return "numba" if _numba_available() else "numpy"


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def active_backend() -> str:
    """The backend in effect (resolving the default on first call)."""
    global _BACKEND
    if _BACKEND is None:
        _BACKEND = _resolve_default()
    return _BACKEND


def set_backend(name: str | None) -> None:
    """Force a backend; None reverts to environment/default resolution."""
    global _BACKEND
    if name is None:
        _BACKEND = None
        return
    if name not in _VALID:
        raise ValueError(f"E:kernels:backend: expected one of {_VALID}, got {name!r}")
    if name == "numba" and not _numba_available():
        raise ValueError("E:kernels:backend: numba backend requested but numba is not importable")
    _BACKEND = name


def _impl():
    if active_backend() == "numba":
        from . import _numba as mod
    else:
        from . import _ref as mod
    return mod


def _as_f64(name: str, x, size: int | None = None) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"E:kernels:shape: {name} must be 1-d")
    if size is not None and a.size != size:
        raise ValueError(f"E:kernels:shape: {name} has length {a.size}, expected {size}")
    return a


def _check_common(mu, sd, clo, cw, lo, hi, center, levelw, key, draws):
    mu = _as_f64("mu", mu)
    n = mu.size
    n_levels = _as_f64("levelw", levelw).size
    if n != (1 << n_levels) - 1:
        raise ValueError(
            f"E:kernels:shape: {n} coefficients do not fill {n_levels} dyadic levels"
        )
    out = (
        mu,
        _as_f64("sd", sd, n),
        _as_f64("clo", clo, n),
        _as_f64("cw", cw, n),
        _as_f64("lo", lo, n),
        _as_f64("hi", hi, n),
        _as_f64("center", center, n),
        _as_f64("levelw", levelw),
    )
    if draws < 1:
        raise ValueError(f"E:kernels:domain: draws must be >= 1, got {draws}")
    return out, np.uint64(int(key) & ((1 << 64) - 1)), int(draws)


def product_losses(p, mu, sd, clo, cw, lo, hi, center, levelw, key, draws):
    """Monte Carlo (l2, linf) losses of a coordinate-product posterior.

    p[i] is the probability coordinate i is nonzero; a nonzero value is drawn
    by inverse CDF through the window [clo[i], clo[i]+cw[i]] of a normal
    (mu[i], sd[i]) clipped to [lo[i], hi[i]].  Losses are measured to
    ``center``; linf is the levelw-weighted sum of per-level maxima.  Returns
    two float64 arrays of length ``draws``.
    """
    (mu, sd, clo, cw, lo, hi, center, levelw), k, d = _check_common(
        mu, sd, clo, cw, lo, hi, center, levelw, key, draws
    )
    p = _as_f64("p", p, mu.size)
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("E:kernels:domain: p outside [0, 1]")
    return _impl().product_losses(p, mu, sd, clo, cw, lo, hi, center, levelw, k, d)


def block_losses(p_act, mu, sd, clo, cw, lo, hi, center, levelw, key, draws):
    """Same, but selection is per level: p_act[j] activates level j whole."""
    (mu, sd, clo, cw, lo, hi, center, levelw), k, d = _check_common(
        mu, sd, clo, cw, lo, hi, center, levelw, key, draws
    )
    p_act = _as_f64("p_act", p_act, levelw.size)
    if np.any((p_act < 0.0) | (p_act > 1.0)):
        raise ValueError("E:kernels:domain: p_act outside [0, 1]")
    return _impl().block_losses(p_act, mu, sd, clo, cw, lo, hi, center, levelw, k, d)
