"""Rate functions, moduli of continuity, and the concentration lower envelope.

The modulus Ω(ε, ·) at radius function ε is the smallest d-distance between
two parameters whose loss separation exceeds the sum of their radii.  On
Hölder balls an explicit one-coordinate witness at a tuned level J realizes
the upper bound; tiny grids get an exact brute-force version as oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seqmodel import HoelderBall, SequenceParam, flat_size, loss_linf

_FLAVORS = ("linf", "l2")


@dataclass(frozen=True)
class RateFunction:
    """ε_n = M(n/log n)^{-β/(2β+1)} ("linf") or M·n^{-β/(2β+1)} ("l2")."""

    flavor: str
    M: float
    beta: float

    def __post_init__(self):
        if self.flavor not in _FLAVORS:
            raise ValueError(f"E:modulus:domain: flavor must be in {_FLAVORS}, got {self.flavor!r}")
        if not (self.M > 0 and self.beta > 0):
            raise ValueError("E:modulus:domain: M and beta must be > 0")

    def __call__(self, n: int) -> float:
        return rate(self.flavor, self.M, self.beta, n)


def rate(flavor: str, M: float, beta: float, n: int) -> float:
    if n < 3:
        raise ValueError(f"E:modulus:domain: n must be >= 3, got {n}")
    e = -beta / (2.0 * beta + 1.0)
    if flavor == "linf":
        return M * (n / math.log(n)) ** e
    if flavor == "l2":
        return M * float(n) ** e
    raise ValueError(f"E:modulus:domain: flavor must be in {_FLAVORS}, got {flavor!r}")


@dataclass(frozen=True)
class ModulusResult:
    omega: float  # d-distance of the witness pair (d = l2)
    theta: SequenceParam
    theta_prime: SequenceParam
    level: int  # the tuned level J


def omega_holder_upper(ball: HoelderBall, rate_fn: RateFunction, n: int) -> ModulusResult:
    """Witness pair showing Ω ≤ L·2^{-J(β+1/2)} with 2^J in the tuned bracket.

    J is the largest integer with 2^J ≤ x, x = (L/2M)^{1/β}·(n/log n)^{1/(2β+1)};
    then 2^J > x/2 automatically, so the bracket [x/2, x] is hit whenever
    x ≥ 1.  The pair differs in a single coordinate at level J, and its loss
    separation is checked against 2·rate(n) before returning.
    """
    beta, L, M = ball.beta, ball.L, rate_fn.M
    if n < 3:
        raise ValueError(f"E:modulus:domain: n must be >= 3, got {n}")
    logx = (1.0 / beta) * math.log(L / (2.0 * M)) \
        + (1.0 / (2.0 * beta + 1.0)) * math.log(n / math.log(n))
    J = math.floor(logx / math.log(2.0))
    if J < 0:
        raise ValueError(
            f"E:modulus:toosmall: no integer level fits the bracket at n={n} "
            f"(need (L/2M)^(1/beta)·(n/log n)^(1/(2beta+1)) >= 1)"
        )
    # separation check, done in log domain to dodge the boundary-rounding case
    lhs = math.log(L) - J * beta * math.log(2.0)  # log linf separation
    rhs = math.log(2.0 * M) + (-beta / (2.0 * beta + 1.0)) * math.log(n / math.log(n))
    if lhs < rhs - 1e-12:
        raise ValueError("E:modulus:construction: witness separation fell below 2·rate")
    omega = L * 2.0 ** (-J * (beta + 0.5))
    theta = SequenceParam.zeros(J)
    flat = np.zeros(flat_size(J))
    flat[(1 << J) - 1] = omega  # first coordinate of level J
    theta_prime = SequenceParam(flat, J)
    return ModulusResult(omega, theta, theta_prime, J)


def omega_continuous(ball: HoelderBall, rate_fn: RateFunction, n: int) -> float:
    """Separation solution L·x^{-(β+1/2)} without the dyadic level rounding.

    Smooth in n (n·ω² grows like log n), which makes it the right abscissa
    for regression; the rounded witness from omega_holder_upper is a step
    function in n and only brackets this value within a factor 2^{β+1/2}.
    """
    if n < 3:
        raise ValueError(f"E:modulus:domain: n must be >= 3, got {n}")
    beta, L, M = ball.beta, ball.L, rate_fn.M
    logx = (1.0 / beta) * math.log(L / (2.0 * M)) \
        + (1.0 / (2.0 * beta + 1.0)) * math.log(n / math.log(n))
    return L * math.exp(-(beta + 0.5) * logx)


def omega_bruteforce(grid, d, loss, eps) -> float:
    """Exact Ω on a finite set: min d over pairs with loss ≥ eps_i + eps_j.

    Returns math.inf when no pair qualifies.  d and loss are callables on
    parameter pairs; eps aligns with grid.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("E:modulus:domain: grid must be nonempty")
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != (len(grid),):
        raise ValueError("E:modulus:shape: eps must align with grid")
    best = math.inf
    for i, ti in enumerate(grid):
        for jj in range(i + 1, len(grid)):
            if loss(ti, grid[jj]) >= eps[i] + eps[jj]:
                best = min(best, d(ti, grid[jj]))
    return best


def lower_bound_envelope(K: float, n: int, omega: float, as_log: bool = False) -> float:
    """exp(-3K·n·ω²), the concentration floor scale; as_log returns the exponent."""
    if K <= 0:
        raise ValueError(f"E:modulus:domain: K must be > 0, got {K}")
    if omega < 0:
        raise ValueError(f"E:modulus:domain: omega must be >= 0, got {omega}")
    lv = -3.0 * K * n * omega * omega
    return lv if as_log else math.exp(lv)


def modulus_sweep(balls, M: float, n_values, K: float = 1.0) -> list[dict]:
    """Rows (n, beta, L, M, J_beta, omega, envelope_log) across a grid."""
    rows = []
    for ball in balls:
        rf = RateFunction("linf", M, ball.beta)
        for n in n_values:
            res = omega_holder_upper(ball, rf, int(n))
            rows.append({
                "n": int(n), "beta": ball.beta, "L": ball.L, "M": M,
                "J_beta": res.level, "omega": res.omega,
                "envelope_log": lower_bound_envelope(K, int(n), res.omega, as_log=True),
            })
    return rows


def witness_separation(res: ModulusResult) -> float:
    """ℓ∞ distance of the witness pair (= L·2^{-Jβ} by construction)."""
    return loss_linf(res.theta, res.theta_prime)
