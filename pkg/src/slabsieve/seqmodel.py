"""Sequence-space parameters, Hölder balls, losses, and the noisy observation model.

Everything lives on dyadic levels j = 0..J_max with 2^j coefficients per
level, stored flat (level j occupies [2^j - 1, 2^{j+1} - 1)).  Coefficients
above J_max are implicitly zero, which is how parameters of different depth
are compared.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._rng import TAG_NOISE, derive_key, ndtri, uniform01


def flat_size(j_max: int) -> int:
    return (1 << (j_max + 1)) - 1


def level_slice(j: int) -> slice:
    """Location of level j inside the flat layout."""
    return slice((1 << j) - 1, (1 << (j + 1)) - 1)


def level_offsets(j_max: int) -> np.ndarray:
    return (1 << np.arange(j_max + 1)) - 1


def level_weights(j_max: int) -> np.ndarray:
    """The 2^{j/2} weights of the sup-type loss, levels 0..j_max."""
    return np.sqrt(2.0 ** np.arange(j_max + 1))


def level_index(j_max: int) -> np.ndarray:
    """Level number of every flat position."""
    return np.repeat(np.arange(j_max + 1), 1 << np.arange(j_max + 1))


def max_level(n: int) -> int:
    """J_n = floor(log2 n), so n/2 < 2^{J_n} <= n."""
    if n < 2:
        raise ValueError(f"E:seqmodel:domain: n must be >= 2, got {n}")
    return int(n).bit_length() - 1


class SequenceParam:
    """Finitely supported coefficient array on dyadic levels.

    Immutable by convention: the flat buffer is marked read-only.
    """

    __slots__ = ("flat", "j_max")

    def __init__(self, flat, j_max: int):
        a = np.ascontiguousarray(flat, dtype=np.float64)
        if j_max < 0:
            raise ValueError(f"E:seqmodel:domain: j_max must be >= 0, got {j_max}")
        if a.ndim != 1 or a.size != flat_size(j_max):
            raise ValueError(
                f"E:seqmodel:shape: flat length {a.size} does not match j_max={j_max} "
                f"(expected {flat_size(j_max)})"
            )
        if not np.all(np.isfinite(a)):
            raise ValueError("E:seqmodel:domain: coefficients must be finite")
        a = a.copy()
        a.flags.writeable = False
        self.flat = a
        self.j_max = int(j_max)

    @classmethod
    def zeros(cls, j_max: int) -> "SequenceParam":
        return cls(np.zeros(flat_size(j_max)), j_max)

    @classmethod
    def from_levels(cls, levels) -> "SequenceParam":
        levels = [np.asarray(lv, dtype=np.float64).ravel() for lv in levels]
        if not levels:
            raise ValueError("E:seqmodel:shape: need at least level 0")
        for j, lv in enumerate(levels):
            if lv.size != 1 << j:
                raise ValueError(
                    f"E:seqmodel:shape: level {j} holds {lv.size} entries, expected {1 << j}"
                )
        return cls(np.concatenate(levels), len(levels) - 1)

    def level(self, j: int) -> np.ndarray:
        if not 0 <= j <= self.j_max:
            raise ValueError(f"E:seqmodel:domain: no level {j} (j_max={self.j_max})")
        return self.flat[level_slice(j)]

    def levels(self) -> list[np.ndarray]:
        return [self.level(j) for j in range(self.j_max + 1)]

    def padded(self, j_max: int) -> np.ndarray:
        """Flat coefficients extended with zeros up to j_max."""
        if j_max < self.j_max:
            raise ValueError("E:seqmodel:domain: cannot pad to a shallower depth")
        out = np.zeros(flat_size(j_max))
        out[: self.flat.size] = self.flat
        return out

    def scaled(self, c: float) -> "SequenceParam":
        return SequenceParam(self.flat * c, self.j_max)

    def to_dict(self) -> dict:
        return {"J_max": self.j_max, "levels": [lv.tolist() for lv in self.levels()]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceParam":
        p = cls.from_levels(d["levels"])
        if p.j_max != int(d["J_max"]):
            raise ValueError("E:seqmodel:shape: J_max disagrees with levels")
        return p

    def __eq__(self, other):
        return (
            isinstance(other, SequenceParam)
            and self.j_max == other.j_max
            and np.array_equal(self.flat, other.flat)
        )

    def __repr__(self):
        return f"SequenceParam(j_max={self.j_max}, norm={np.linalg.norm(self.flat):.4g})"


@dataclass(frozen=True)
class HoelderBall:
    beta: float  # smoothness
    L: float  # radius

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError(f"E:seqmodel:domain: beta must be > 0, got {self.beta}")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"E:seqmodel:domain: L must be > 0, got {self.L}")

    def level_bound(self, j) -> float | np.ndarray:
        # single source for the envelope so membership at equality is bitwise
        return self.L * 2.0 ** (-np.asarray(j, dtype=np.float64) * (self.beta + 0.5))


def make_holder_extremal(ball: HoelderBall, j_max: int, signs="plus") -> SequenceParam:
    """Boundary element of the ball: |θ_{j,k}| equals the level envelope.

    signs: "plus", "alternating" (by position within each level), or
    ("random", seed).
    """
    if j_max < 0:
        raise ValueError(f"E:seqmodel:domain: j_max must be >= 0, got {j_max}")
    n = flat_size(j_max)
    mag = np.repeat(ball.level_bound(np.arange(j_max + 1)), 1 << np.arange(j_max + 1))
    if signs == "plus":
        s = np.ones(n)
    elif signs == "alternating":
        pos = np.arange(n) - np.repeat(level_offsets(j_max), 1 << np.arange(j_max + 1))
        s = np.where(pos % 2 == 0, 1.0, -1.0)
    elif isinstance(signs, tuple) and len(signs) == 2 and signs[0] == "random":
        key = derive_key(int(signs[1]), 0x5167)
        s = np.where(uniform01(key, np.arange(n, dtype=np.uint64)) < 0.5, -1.0, 1.0)
    else:
        raise ValueError(f"E:seqmodel:domain: unknown sign spec {signs!r}")
    return SequenceParam(s * mag, j_max)


def holder_membership(theta: SequenceParam, ball: HoelderBall) -> bool:
    bounds = ball.level_bound(level_index(theta.j_max))
    return bool(np.all(np.abs(theta.flat) <= bounds))


class Observations:
    """White-noise data Y_{j,k} = θ⁰_{j,k} + ε_{j,k}/√n on levels 0..J_n."""

    __slots__ = ("y", "n", "seed")

    def __init__(self, y: SequenceParam, n: int, seed: int):
        if max_level(n) != y.j_max:
            raise ValueError(
                f"E:seqmodel:shape: data depth {y.j_max} inconsistent with n={n} "
                f"(J_n={max_level(n)})"
            )
        self.y = y
        self.n = int(n)
        self.seed = int(seed)

    def to_dict(self) -> dict:
        d = self.y.to_dict()
        d["n"] = self.n
        d["seed"] = self.seed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Observations":
        return cls(SequenceParam.from_dict({"J_max": d["J_max"], "levels": d["levels"]}), d["n"], d["seed"])


def noise_array(n: int, seed: int) -> np.ndarray:
    """Flat ε array for levels 0..J_n; ε_{j,k} depends only on (seed, j, k)."""
    j_n = max_level(n)
    parts = []
    for j in range(j_n + 1):
        key = derive_key(seed, TAG_NOISE, j)
        parts.append(ndtri(uniform01(key, np.arange(1 << j, dtype=np.uint64))))
    return np.concatenate(parts)


def simulate(theta0: SequenceParam, n: int, seed: int) -> Observations:
    """Observe θ0 through the white noise model at sample size n."""
    j_n = max_level(n)
    if theta0.j_max <= j_n:
        signal = theta0.padded(j_n)
    else:
        signal = theta0.flat[: flat_size(j_n)]
    y = signal + noise_array(n, seed) / np.sqrt(n)
    return Observations(SequenceParam(y, j_n), n, seed)


def _common_flats(a: SequenceParam, b: SequenceParam):
    j = max(a.j_max, b.j_max)
    return a.padded(j), b.padded(j), j


def loss_l2(a: SequenceParam, b: SequenceParam) -> float:
    fa, fb, _ = _common_flats(a, b)
    return float(np.linalg.norm(fa - fb))


def loss_linf(a: SequenceParam, b: SequenceParam) -> float:
    """Σ_j 2^{j/2} max_k |difference at level j|."""
    fa, fb, j = _common_flats(a, b)
    diff = np.abs(fa - fb)
    levelmax = np.maximum.reduceat(diff, level_offsets(j))
    return float(level_weights(j) @ levelmax)
