"""Counter-based random numbers.

Every random quantity in this package is a pure function of a 64-bit key and
a 64-bit counter.  Keys are derived by folding integer tags into a seed, so a
coefficient's noise depends only on (seed, stream, level, position) and never
on evaluation order, thread count, or how much randomness was consumed before
it.  Parallel and serial runs therefore agree exactly.

The uniform generator is the splitmix64 output function applied to
``key + (counter+1) * GOLDEN``; normals go through an inverse CDF.  The same
arithmetic is duplicated in ``kernels._numba`` for the jitted hot loops; the
integer parts agree bit-for-bit across the two implementations (asserted in
tests), float transforms agree to a few ulp.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_SEED_SALT = 0x243F6A8885A308D3  # pi digits; separates seeds from raw keys

# Stream tags (arbitrary distinct small ints, fixed forever for reproducibility).
TAG_NOISE = 0x10
TAG_POSTERIOR = 0x20
TAG_PRIOR_DRAW = 0x30
TAG_ESTIMATOR = 0x40
TAG_EXPERIMENT = 0x50
TAG_SELFCHECK = 0x60


def mix64(z: int) -> int:
    """splitmix64 finalizer on python ints (mod 2^64)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def derive_key(seed: int, *tags: int) -> int:
    """Fold integer tags into a seed, producing a stream key.

    Distinct tag tuples give statistically independent streams.
    """
    k = mix64((int(seed) ^ _SEED_SALT) & _MASK)
    for t in tags:
        k = mix64(((k ^ (int(t) & _MASK)) + GOLDEN) & _MASK)
    return k


def _mix_vec(z: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap mod 2^64 silently; scalars would warn, so keep arrays.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def uniform01(key: int, counters: np.ndarray) -> np.ndarray:
    """U(0,1) variates for an array of counters (open interval, ndtri-safe)."""
    ctr = np.asarray(counters, dtype=np.uint64)
    z = np.uint64(key) + (ctr + np.uint64(1)) * np.uint64(GOLDEN)
    z = _mix_vec(z)
    return (z >> np.uint64(11)) * 2.0**-53 + 2.0**-54


def uniform01_scalar(key: int, counter: int) -> float:
    """Single variate; same arithmetic as uniform01, python-int domain."""
    z = (key + ((counter + 1) & _MASK) * GOLDEN) & _MASK
    z = mix64(z)
    return (z >> 11) * 2.0**-53 + 2.0**-54


def standard_normals(key: int, count: int, start: int = 0) -> np.ndarray:
    """count i.i.d. N(0,1) draws at counters start..start+count-1."""
    u = uniform01(key, np.arange(start, start + count, dtype=np.uint64))
    return ndtri(u)


# ---------------------------------------------------------------------------
# Inverse normal CDF, algorithm AS 241 (PPND16), |relative error| < 1e-15.
# Kept in-package so the jitted kernels can share the exact coefficients.
# scipy.special.ndtri is the oracle for this transcription in the test suite.

NDTRI_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
NDTRI_B = (
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
NDTRI_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
NDTRI_D = (
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
NDTRI_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
NDTRI_F = (
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly8(c, r):
    return ((((((c[7] * r + c[6]) * r + c[5]) * r + c[4]) * r + c[3]) * r + c[2]) * r + c[1]) * r + c[0]


def _poly7_monic(c, r):
    # denominator polynomials: constant term 1
    return ((((((c[6] * r + c[5]) * r + c[4]) * r + c[3]) * r + c[2]) * r + c[1]) * r + c[0]) * r + 1.0


def ndtri(p):
    """Inverse standard normal CDF on (0, 1), vectorized.

    Out-of-domain values produce nan/inf like the reference implementation;
    callers that feed generated uniforms never hit the endpoints.
    """
    p = np.asarray(p, dtype=np.float64)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    out = np.empty_like(p)

    q = p - 0.5
    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _poly8(NDTRI_A, r) / _poly7_monic(NDTRI_B, r)

    tail = ~central
    if np.any(tail):
        qt = q[tail]
        pt = p[tail]
        r = np.where(qt < 0.0, pt, 1.0 - pt)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sqrt(-np.log(r))
        z = np.empty_like(r)
        near = r <= 5.0
        if np.any(near):
            rn = r[near] - 1.6
            z[near] = _poly8(NDTRI_C, rn) / _poly7_monic(NDTRI_D, rn)
        far = ~near
        if np.any(far):
            rf = r[far] - 5.0
            z[far] = _poly8(NDTRI_E, rf) / _poly7_monic(NDTRI_F, rf)
        out[tail] = np.where(qt < 0.0, -z, z)

    return out[0] if scalar else out


class CounterStream:
    """Stateful convenience wrapper over the counter generator.

    Holds (key, position); deterministic given its construction path.  The
    "rng" argument of the sampling operations is one of these.  child()
    derives an independent stream, which is how per-replicate / per-thread
    streams are handed out.
    """

    __slots__ = ("key", "pos")

    def __init__(self, key: int, pos: int = 0):
        self.key = key & _MASK
        self.pos = pos

    @classmethod
    def from_seed(cls, seed: int, *tags: int) -> "CounterStream":
        return cls(derive_key(seed, *tags))

    def child(self, *tags: int) -> "CounterStream":
        return CounterStream(derive_key(self.key, *tags))

    def spawn(self) -> "CounterStream":
        """Fresh independent stream; advances this one's position by 1.

        Successive spawns from the same parent are mutually independent, so a
        loop can hand one to each task without coordinating counters.
        """
        k = derive_key(self.key, 0x5EED, self.pos)
        self.pos += 1
        return CounterStream(k)

    def uniforms(self, count: int) -> np.ndarray:
        out = uniform01(self.key, np.arange(self.pos, self.pos + count, dtype=np.uint64))
        self.pos += count
        return out

    def normals(self, count: int) -> np.ndarray:
        return ndtri(self.uniforms(count))
