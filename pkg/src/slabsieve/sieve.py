"""Lattice sieve prior, exact enumerated posterior, and admissible partitions.

Tiny by design: the sieve is a verification device, not an estimator.  Every
parameter is a_{j,k}·φ_n with integer a in a box, so distances, class labels,
and the u_r ladder are exact integer arithmetic scaled by φ_n²; only the
final log-posterior touches floats, and those never leave the log domain.

The partition machinery follows the rounding construction: coordinates where
θ0 sits within φ_n/4 of the lattice (the set U) get snapped to the nearest
lattice point θ*; at the remaining coordinates θ0 is straddled by two lattice
values, and class members are free exactly on the straddle pair.  The class
map ψ keeps the pair values, snaps U to θ*, and sends any other value to the
straddle point on the far side of θ0 (the near side can sit a single lattice
step away, which destroys the n/16 likelihood margin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_key, ndtri, uniform01, TAG_NOISE
from .modulus import rate
from .seqmodel import (
    HoelderBall,
    Observations,
    SequenceParam,
    flat_size,
    level_weights,
    level_offsets,
)

_MAX_COEFF = 12
_MAX_POINTS = 10**7


@dataclass(frozen=True)
class LatticeSieve:
    phi0: float
    n: int
    levels: int  # max dyadic level enumerated
    L: float
    phi_n: float
    amax: int
    a: np.ndarray  # (n_points, n_coeff) int8, lexicographic rows

    @property
    def n_coeff(self) -> int:
        return self.a.shape[1]

    @property
    def n_points(self) -> int:
        return self.a.shape[0]

    def point(self, i: int) -> SequenceParam:
        return SequenceParam(self.a[i].astype(np.float64) * self.phi_n, self.levels)

    def index_of(self, a_vec: np.ndarray) -> int:
        """Lexicographic rank of an integer coefficient vector."""
        base = 2 * self.amax + 1
        idx = 0
        for v in a_vec:
            iv = int(v)
            if abs(iv) > self.amax:
                raise ValueError(f"E:sieve:domain: coefficient {iv} outside the box")
            idx = idx * base + (iv + self.amax)
        return idx


def build_sieve(phi0: float, n: int, levels: int, L: float) -> LatticeSieve:
    """Enumerate {a·φ_n: a ∈ ℤ^d ∩ box} over dyadic levels 0..levels."""
    if phi0 <= 0 or L <= 0:
        raise ValueError("E:sieve:domain: phi0 and L must be > 0")
    if n < 3:
        raise ValueError(f"E:sieve:domain: n must be >= 3, got {n}")
    if levels < 0:
        raise ValueError(f"E:sieve:domain: levels must be >= 0, got {levels}")
    n_coeff = flat_size(levels)
    if n_coeff > _MAX_COEFF:
        raise ValueError(
            f"E:sieve:toolarge: {n_coeff} coefficients exceed the enumeration "
            f"guard of {_MAX_COEFF}"
        )
    amax = math.floor(L + 1.0)
    base = 2 * amax + 1
    if base**n_coeff > _MAX_POINTS:
        raise ValueError(
            f"E:sieve:toolarge: {base}^{n_coeff} points exceed the guard of {_MAX_POINTS}"
        )
    vals = np.arange(-amax, amax + 1, dtype=np.int8)
    grids = np.meshgrid(*([vals] * n_coeff), indexing="ij")
    a = np.stack(grids, axis=-1).reshape(-1, n_coeff)
    phi_n = phi0 * math.sqrt(math.log(n) / n)
    return LatticeSieve(phi0, int(n), levels, float(L), phi_n, amax, a)


def _log_unnorm(sieve: LatticeSieve, y: np.ndarray) -> np.ndarray:
    """Per-point log-likelihood up to a point-free constant, cancellation-free:
    n·φ·(a@y) − (n·φ²/2)·Σa², with Σa² in exact integers."""
    af = sieve.a.astype(np.float64)
    p2 = np.sum(af * af, axis=1)
    nphi = sieve.n * sieve.phi_n
    return nphi * (af @ y) - 0.5 * nphi * sieve.phi_n * p2


def exact_sieve_posterior(sieve: LatticeSieve, obs: Observations) -> np.ndarray:
    """Exact posterior weights over the enumerated points."""
    if obs.n != sieve.n:
        raise ValueError(f"E:sieve:domain: obs.n={obs.n} differs from sieve n={sieve.n}")
    if obs.y.j_max < sieve.levels:
        raise ValueError("E:sieve:domain: observations do not cover the sieve levels")
    y = obs.y.flat[: sieve.n_coeff]
    logp = _log_unnorm(sieve, y)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("E:sieve:normalization: posterior failed to normalize")
    return p


@dataclass
class AdmissiblePartition:
    sieve: LatticeSieve
    theta0: np.ndarray  # flat, sieve coordinates
    A: float
    radius: float  # A · ε_n(θ0)
    U: np.ndarray  # bool mask: coordinates snapped to the lattice
    theta_star: np.ndarray  # int, nearest lattice point
    j0: np.ndarray  # point indices of the A·ε_n ball
    members: list = field(default_factory=list)  # per class r>=1: point indices
    images: list = field(default_factory=list)  # per class: ψ-image indices
    delta: list = field(default_factory=list)  # per class: θ−ψ(θ) in lattice units
    dp2: list = field(default_factory=list)  # per class: Σa² − Σ(ψa)², exact int
    u_int: list = field(default_factory=list)  # per class: ‖θ−ψθ‖²/φ², exact int

    @property
    def n_classes(self) -> int:
        return len(self.members)


def build_admissible_partition(sieve: LatticeSieve, theta0: SequenceParam,
                               ball: HoelderBall, A: float,
                               M: float = 1.0) -> AdmissiblePartition:
    """Group the sieve into the ball 𝒥_0 and classes 𝒥_r with maps into 𝒥_0.

    Everything the construction promises is machine-checked here: partition,
    |𝒥_r| ≤ |𝒥_0|, injectivity, images inside the ball, u_r ≥ φ_n, and the
    lattice counting bound on {r: u_r² = m·φ_n²}.
    """
    n_coeff = sieve.n_coeff
    phi = sieve.phi_n
    th0 = (theta0.padded(sieve.levels) if theta0.j_max <= sieve.levels
           else theta0.flat[:n_coeff]).copy()
    t = th0 / phi
    if np.max(np.abs(t)) > sieve.amax:
        raise ValueError("E:sieve:domain: theta0 leaves the sieve box")
    star = np.clip(np.round(t), -sieve.amax, sieve.amax).astype(np.int64)
    U = np.abs(t - np.round(t)) <= 0.25
    f = np.floor(t).astype(np.int64)
    c = np.ceil(t).astype(np.int64)

    a = sieve.a.astype(np.int64)
    # class key: exact values everywhere, except the straddle pair outside U
    key = a.copy()
    pair_mask = (~U)[None, :] & ((a == f[None, :]) | (a == c[None, :]))
    key[pair_mask] = 127
    _, class_id = np.unique(key, axis=0, return_inverse=True)

    # ball membership in the sup-type loss
    offs = level_offsets(sieve.levels)
    w = level_weights(sieve.levels)
    diff = np.abs(a * phi - th0[None, :])
    linf = np.zeros(sieve.n_points)
    for j in range(sieve.levels + 1):
        sl = slice(offs[j], offs[j] + (1 << j))
        linf += w[j] * diff[:, sl].max(axis=1)
    radius = A * rate("linf", M, ball.beta, sieve.n)
    inball = linf <= radius
    j0 = np.nonzero(inball)[0]
    if j0.size == 0:
        raise ValueError("E:sieve:partition: the A·ε_n ball misses the sieve entirely")

    part = AdmissiblePartition(sieve, th0, float(A), float(radius), U, star, j0)
    base = 2 * sieve.amax + 1
    powers = base ** np.arange(n_coeff - 1, -1, -1, dtype=np.int64)
    out_count = 0
    for cid in range(class_id.max() + 1):
        members = np.nonzero((class_id == cid) & ~inball)[0]
        if members.size == 0:
            continue
        rep = a[members[0]]
        img_tpl = rep.copy()
        img_tpl[U] = star[U]
        nonpair = ~U & ~((rep == f) | (rep == c))
        img_tpl[nonpair] = np.where(rep[nonpair] > c[nonpair], f[nonpair], c[nonpair])
        delta = rep - img_tpl  # identical for every member: they differ only on pairs
        u = int(np.sum(delta * delta))
        if u < 1:
            raise ValueError(
                "E:sieve:partition: a class at distance 0 has points outside the "
                "ball (θ*'s class must lie inside 𝒥_0; enlarge A)"
            )
        # per-member image: template with the member's straddle-pair values kept
        imgs = a[members].copy()
        keep = pair_mask[members[0]]
        imgs[:, ~keep] = img_tpl[~keep]
        img_idx = (imgs + sieve.amax) @ powers
        if np.unique(img_idx).size != img_idx.size:
            raise ValueError("E:sieve:partition: ψ is not injective on a class")
        if not np.all(inball[img_idx]):
            raise ValueError("E:sieve:partition: ψ image escaped the ball 𝒥_0")
        if members.size > j0.size:
            raise ValueError("E:sieve:partition: |𝒥_r| exceeds |𝒥_0|")
        dp2 = int(np.sum(a[members[0]] ** 2) - np.sum(imgs[0] ** 2))
        part.members.append(members)
        part.images.append(img_idx)
        part.delta.append(delta)
        part.dp2.append(dp2)
        part.u_int.append(u)
        out_count += members.size

    if out_count + j0.size != sieve.n_points:
        raise ValueError("E:sieve:partition: classes and ball do not partition the sieve")
    _check_counting_bound(part)
    return part


def _check_counting_bound(part: AdmissiblePartition) -> None:
    """|{r: u_r² = m·φ²}| ≤ Σ_{i=1}^{m} I^i with I = 2·(number of coordinates)."""
    I = 2 * part.sieve.n_coeff
    counts: dict[int, int] = {}
    for u in part.u_int:
        counts[u] = counts.get(u, 0) + 1
    for m, cnt in counts.items():
        bound = sum(I**i for i in range(1, m + 1))  # exact big-int arithmetic
        if cnt > bound:
            raise ValueError(
                f"E:sieve:counting: {cnt} classes at u²={m}φ² exceed the lattice bound {bound}"
            )


def _logsumexp(v: np.ndarray) -> float:
    if v.size == 0:
        return -math.inf
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + math.log(np.sum(np.exp(v - m))))


def verify_sieve_conditions(part: AdmissiblePartition, n: int, K0: float,
                            replicates: int = 500, seed: int = 0) -> dict:
    """Check the two sieve conditions and the posterior-mass chain by MC.

    Per replicate Y ~ N(θ0, 1/n) on the sieve coordinates:
      mass outside the ball  ≤  Σ_r e^{ΔL_r}  (pure algebra, asserted always)
      ΔL_r ≤ −(n/16)‖θ−ψθ‖²  on Ω_n = {√n·max|Y−θ0| ≤ 2√log n}  (margin)
      hence mass ≤ Σ_r e^{−K0·n·u_r²} on Ω_n when K0 ≤ 1/16  (asserted there).
    Off Ω_n nothing is promised; the failure frequency is reported against
    the 2/n bound on P(Ω_nᶜ).
    """
    sieve = part.sieve
    if n != sieve.n:
        raise ValueError(f"E:sieve:domain: n={n} does not match the sieve ({sieve.n})")
    if K0 <= 0:
        raise ValueError(f"E:sieve:domain: K0 must be > 0, got {K0}")
    if replicates < 1:
        raise ValueError("E:sieve:domain: replicates must be >= 1")
    phi = sieve.phi_n
    nphi = n * phi
    # n·u_r² = u_int·n·φ² = u_int·φ0²·log n, so cond2 stays in exponent range
    u_arr = np.array(part.u_int, dtype=np.float64)
    cond2_terms = -K0 * (sieve.phi0**2) * math.log(n) * u_arr
    sum_cond2_log = _logsumexp(cond2_terms)
    sum_cond2 = float(np.exp(np.clip(sum_cond2_log, -745.0, 50.0))) if part.n_classes else 0.0

    deltas = np.array(part.delta, dtype=np.float64) if part.n_classes else np.zeros((0, sieve.n_coeff))
    dp2 = np.array(part.dp2, dtype=np.float64) if part.n_classes else np.zeros(0)
    margin_rhs = -(n / 16.0) * phi * phi * u_arr
    out_idx = (np.concatenate(part.members) if part.n_classes else np.array([], dtype=np.int64))

    thr = 2.0 * math.sqrt(math.log(n))
    sqn = math.sqrt(n)
    mass_list: list[float] = []
    log_mass_list: list[float] = []
    omega_fail = 0
    margin_fail_on = 0  # margin violated while on Ω_n (counts toward cond1 failures)
    margin_fail_off = 0
    for r in range(replicates):
        key = derive_key(seed, TAG_NOISE, r)
        eps = ndtri(uniform01(key, np.arange(sieve.n_coeff, dtype=np.uint64)))
        y = part.theta0 + eps / sqn
        on_omega = bool(np.max(np.abs(eps)) <= thr)
        if not on_omega:
            omega_fail += 1
        logp = _log_unnorm(sieve, y)
        log_tot = _logsumexp(logp)
        log_out = _logsumexp(logp[out_idx])
        log_mass = log_out - log_tot
        mass_list.append(float(np.exp(min(log_mass, 0.0))))
        log_mass_list.append(float(log_mass))
        if part.n_classes == 0:
            continue
        dL = nphi * (deltas @ y) - 0.5 * nphi * phi * dp2  # class log-likelihood drops
        chain1 = _logsumexp(dL)
        tol = 1e-7 * (1.0 + abs(chain1))
        if log_mass > chain1 + tol:
            raise ValueError(
                f"E:sieve:chain: replicate {r}: mass {log_mass:.6g} exceeds "
                f"the injective-map bound {chain1:.6g}"
            )
        margin_ok = bool(np.all(dL <= margin_rhs + 1e-7 * (1.0 + np.abs(margin_rhs))))
        if not margin_ok:
            if on_omega:
                margin_fail_on += 1
            else:
                margin_fail_off += 1
        if on_omega and margin_ok and K0 <= 1.0 / 16.0:
            tol2 = 1e-7 * (1.0 + abs(sum_cond2_log))
            if chain1 > sum_cond2_log + tol2:
                raise ValueError(
                    f"E:sieve:chain: replicate {r}: class bound {chain1:.6g} exceeds "
                    f"Σ e^(-K0·n·u²) = {sum_cond2_log:.6g}"
                )

    fail_freq = (omega_fail + margin_fail_on) / replicates
    se = math.sqrt(max(fail_freq * (1 - fail_freq), 1.0 / replicates) / replicates)
    return {
        "n": n,
        "phi0": sieve.phi0,
        "K0": K0,
        "replicates": replicates,
        "seed": seed,
        "n_classes": part.n_classes,
        "ball_size": int(part.j0.size),
        "points": sieve.n_points,
        "radius": part.radius,
        "A": part.A,
        "sum_cond2": sum_cond2,
        "sum_cond2_log": sum_cond2_log,
        "cond1_fail_freq": fail_freq,
        "cond1_fail_bound": 2.0 / n + 3.0 * se,
        "omega_event_fail_freq": omega_fail / replicates,
        "margin_fail_off_omega": margin_fail_off,
        "mass_outside": mass_list,
        "mass_outside_log": log_mass_list,
        "u_int_values": [int(u) for u in part.u_int],
    }


def radius_constant(theta0: SequenceParam, ball: HoelderBall, phi0: float,
                    n: int, M: float = 1.0) -> tuple[float, int, float]:
    """(A, J, b0) with A = 4(3φ0√b0 + 1), b0 = 2^J/(n/log n)^{1/(2β+1)}.

    J is the smallest level whose tail is both uniformly below φ_n/4 and
    summable below ε_n in the weighted sup norm; finite support makes the
    search terminate at j_max at the latest.
    """
    phi_n = phi0 * math.sqrt(math.log(n) / n)
    eps_n = rate("linf", M, ball.beta, n)
    maxes = np.array([np.max(np.abs(theta0.level(j))) for j in range(theta0.j_max + 1)])
    wts = level_weights(theta0.j_max)
    for J in range(theta0.j_max + 1):
        tail = maxes[J + 1:]
        if tail.size == 0 or (np.max(tail) <= phi_n / 4.0
                              and float(wts[J + 1:] @ tail) <= eps_n):
            b0 = (1 << J) / (n / math.log(n)) ** (1.0 / (2.0 * ball.beta + 1.0))
            return 4.0 * (3.0 * phi0 * math.sqrt(b0) + 1.0), J, b0
    b0 = (1 << theta0.j_max) / (n / math.log(n)) ** (1.0 / (2.0 * ball.beta + 1.0))
    return 4.0 * (3.0 * phi0 * math.sqrt(b0) + 1.0), theta0.j_max, b0
