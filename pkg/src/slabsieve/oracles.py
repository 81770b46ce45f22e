"""Independent re-computations used to cross-check the fast paths.

Everything here is deliberately written the slow, obvious way and shares no
numerics with the modules it checks: marginals go through an adaptive
Simpson rule on the raw integrand, coordinate posteriors through a dense
trapezoid grid, losses through plain Python loops, and the sieve posterior
through per-point squared differences.  The self-check harness and the test
suite both call these.
"""

from __future__ import annotations

import math

import numpy as np

from .seqmodel import SequenceParam, loss_l2, loss_linf  # noqa: F401  (re-export targets)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-12,
                     max_depth: int = 40) -> float:
    """Recursive Simpson with the usual 15-fold error heuristic.

    ``tol`` is relative to the integral's magnitude; each subinterval also
    stops once its own error estimate reaches double precision, so the
    recursion cannot chase unreachable tolerances.
    """
    eps = 2.22e-16
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, fa, m, fm, b, fb, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = abs(left + right - whole)
        if depth <= 0 or err <= 15.0 * max(tol, eps * abs(whole)):
            return left + right + (left + right - whole) / 15.0
        return (rec(a, fa, lm, flm, m, fm, left, tol / 2.0, depth - 1)
                + rec(m, fm, rm, frm, b, fb, right, tol / 2.0, depth - 1))

    return rec(a, fa, m, fm, b, fb, whole, tol * abs(whole) + 1e-300, max_depth)


def _window(Y: float, n: int, g) -> tuple[float, float, float]:
    """(lo, hi, t_peak) for ∫ e^{-n(Y-t)²/2} g(t) dt."""
    slo, shi = g.support()
    w = 16.0 / math.sqrt(n)
    t_peak = min(max(Y, slo), shi)
    lo = max(slo, min(Y, t_peak) - w)
    hi = min(shi, max(Y, t_peak) + w)
    if g.kind == "gaussian":
        # product of two Gaussians: center and width known exactly
        v = g.sigma * g.sigma
        m = Y * v * n / (v * n + 1.0)
        s = g.sigma / math.sqrt(v * n + 1.0)
        lo, hi = min(lo, m - 14.0 * s), max(hi, m + 14.0 * s)
    return lo, hi, t_peak


def log_marginal_oracle(Y: float, n: int, g) -> float:
    """log ∫ e^{-n(Y-t)²/2} g(t) dt by peak-shifted adaptive Simpson."""
    lo, hi, t_peak = _window(Y, n, g)
    shift = 0.5 * n * (Y - t_peak) ** 2  # log of the factored-out peak value

    def f(t: float) -> float:
        return math.exp(-0.5 * n * (Y - t) ** 2 + shift) * g.pdf(t)

    val = adaptive_simpson(f, lo, hi, tol=1e-13)
    if val <= 0.0:
        return -math.inf
    return math.log(val) - shift


def p_nonzero_oracle(Y: float, n: int, w: float, g, nodes: int = 2**15 + 1) -> float:
    """P(θ ≠ 0 | Y) by dense-grid quadrature of the slab evidence.

    Honest for n up to ~1e5; beyond that the fixed grid starts to undersample
    the likelihood peak relative to the 1e-6 comparison tolerance.
    """
    if not 0.0 < w < 1.0:
        raise ValueError("oracle needs w strictly inside (0, 1)")
    lo, hi, t_peak = _window(Y, n, g)
    shift = 0.5 * n * (Y - t_peak) ** 2
    t = np.linspace(lo, hi, nodes)
    dens = np.array([g.pdf(x) for x in t])
    vals = np.exp(-0.5 * n * (Y - t) ** 2 + shift) * dens
    log_evidence = math.log(np.trapezoid(vals, t)) - shift
    # odds against the point mass at zero, whose likelihood is e^{-nY²/2}
    log_odds = math.log(w / (1.0 - w)) + log_evidence + 0.5 * n * Y * Y
    if log_odds > 0:
        return 1.0 / (1.0 + math.exp(-log_odds))
    e = math.exp(log_odds)
    return e / (1.0 + e)


def loss_l2_bruteforce(a: SequenceParam, b: SequenceParam) -> float:
    fa, fb = list(a.flat), list(b.flat)
    size = max(len(fa), len(fb))
    fa += [0.0] * (size - len(fa))
    fb += [0.0] * (size - len(fb))
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(fa, fb)))


def loss_linf_bruteforce(a: SequenceParam, b: SequenceParam) -> float:
    j_max = max(a.j_max, b.j_max)
    total = 0.0
    for j in range(j_max + 1):
        best = 0.0
        for k in range(1 << j):
            va = a.level(j)[k] if j <= a.j_max else 0.0
            vb = b.level(j)[k] if j <= b.j_max else 0.0
            best = max(best, abs(va - vb))
        total += 2.0 ** (j / 2.0) * best
    return total


def truncnorm_mv_oracle(a: float, b: float) -> tuple[float, float]:
    """Mean and variance of a standard normal conditioned on [a, b], by
    shifted Simpson on the three raw moments."""
    peak = min(max(0.0, a), b)
    shift = 0.5 * peak * peak

    def mk(p):
        return lambda t: (t ** p) * math.exp(-0.5 * t * t + shift)

    m0 = adaptive_simpson(mk(0), a, b, tol=1e-14)
    m1 = adaptive_simpson(mk(1), a, b, tol=1e-14)
    m2 = adaptive_simpson(mk(2), a, b, tol=1e-14)
    mean = m1 / m0
    return mean, m2 / m0 - mean * mean


def sieve_posterior_oracle(sieve, y: np.ndarray) -> np.ndarray:
    """Exact enumerated posterior the straightforward way: per-point squared
    distance to the data, then a softmax in plain Python floats."""
    logs = []
    for i in range(sieve.n_points):
        s = 0.0
        for k in range(sieve.n_coeff):
            d = y[k] - sieve.a[i, k] * sieve.phi_n
            s += d * d
        logs.append(-0.5 * sieve.n * s)
    m = max(logs)
    raw = [math.exp(v - m) for v in logs]
    tot = sum(raw)
    return np.array([v / tot for v in raw])
