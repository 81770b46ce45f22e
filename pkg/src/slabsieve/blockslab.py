"""Level-wise (block) spike-and-slab prior and posterior.

A whole level is either zeroed or drawn i.i.d. from the slab, with prior
activation odds  log ν_{j,n} = (|I_j|/2)·log n − c·|I_j|,  |I_j| = 2^j.  The
n^{|I_j|/2} factor exactly cancels the (2π/n)^{|I_j|/2} volume of the block
marginal, which is why the posterior stays balanced even though ν is
astronomically large; nothing here may leave the log domain.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from . import kernels
from ._rng import CounterStream, ndtri
from .seqmodel import (
    Observations,
    SequenceParam,
    level_index,
    level_slice,
    level_weights,
    max_level,
)
from .slab import SlabDensity, log_marginal_vec, tilted_kernel_params, tilted_mean_var_vec

_QLO = 2.0**-54
_QHI = 1.0 - 2.0**-53


def _auto_G(slab: SlabDensity) -> float:
    """Smallest G with e^{-G} <= inf g on the radius <= sup g <= e^{G} (floored at 1)."""
    if slab.kind == "uniform":
        sup = 1.0 / (2.0 * slab.L0)
    elif slab.kind == "gaussian":
        sup = 1.0 / (slab.sigma * math.sqrt(2.0 * math.pi))
    elif slab.kind == "laplace":
        sup = 1.0 / (2.0 * slab.b)
    else:
        sup = float(np.max(slab.ys))
    inf = slab._inf_on_radius()
    return max(1.0, abs(math.log(sup)), abs(math.log(inf)))


class BlockPrior:
    __slots__ = ("slab", "G", "c")

    def __init__(self, slab: SlabDensity, G: float | None = None, c: float | None = None):
        self.slab = slab
        self.G = _auto_G(slab) if G is None else float(G)
        if self.G <= 0:
            raise ValueError(f"E:blockslab:domain: G must be > 0, got {self.G}")
        self.c = 4.0 + self.G if c is None else float(c)
        if self.c < 4.0 + self.G:
            raise ValueError(
                f"E:blockslab:domain: need c >= 4 + G = {4.0 + self.G}, got {self.c}"
            )

    def log_nu(self, j: int, n: int) -> float:
        m = float(1 << j)
        return 0.5 * m * math.log(n) - self.c * m

    def to_config(self) -> dict:
        return {"type": "block_spike_slab", "G": self.G, "c": self.c,
                "slab": self.slab.to_config()}

    @classmethod
    def from_config(cls, d: dict) -> "BlockPrior":
        return cls(SlabDensity.from_config(d["slab"]), G=d.get("G"), c=d.get("c"))


def block_active_logodds(y_level, j: int, n: int, prior: BlockPrior) -> float:
    """Log posterior odds that level j is active."""
    y = np.asarray(y_level, dtype=np.float64)
    if y.shape != (1 << j,):
        raise ValueError(
            f"E:blockslab:shape: level {j} needs {1 << j} entries, got {y.shape}"
        )
    lm = log_marginal_vec(y, n, prior.slab)
    return float(prior.log_nu(j, n) + np.sum(lm) + 0.5 * n * np.sum(y * y))


class _SlabOnly:
    """Minimal prior stand-in when only the slab matters."""

    __slots__ = ("slab",)

    def __init__(self, slab: SlabDensity):
        self.slab = slab


class BlockPosterior:
    """Independent Bernoulli(p_active) per level; tilted slabs inside."""

    __slots__ = ("y", "n", "prior", "log_odds", "p_active", "_kparams")

    def __init__(self, y: SequenceParam, n: int, prior: BlockPrior,
                 log_odds: np.ndarray, p_active: np.ndarray):
        self.y = y
        self.n = n
        self.prior = prior
        self.log_odds = log_odds
        self.p_active = p_active
        self._kparams = None

    @property
    def j_max(self) -> int:
        return self.y.j_max

    def kernel_params(self):
        if self._kparams is None:
            self._kparams = tilted_kernel_params(self.y.flat, self.n, self.prior.slab)
        return self._kparams

    def mean(self) -> SequenceParam:
        tm, _ = tilted_mean_var_vec(self.y.flat, self.n, self.prior.slab)
        return SequenceParam(self.p_active[level_index(self.j_max)] * tm, self.j_max)

    def coordinate_quantiles(self, q: float) -> np.ndarray:
        """Per-coordinate q-quantile of the (level-activity × tilt) mixture."""
        from .spikeslab import ProductPosterior

        proxy = ProductPosterior(self.y, self.n, _SlabOnly(self.prior.slab),
                                 self.log_odds[level_index(self.j_max)],
                                 self.p_active[level_index(self.j_max)])
        return proxy.coordinate_quantiles(q)

    def loss_samples(self, center: SequenceParam, draws: int, key: int):
        c = center.padded(self.j_max) if center.j_max <= self.j_max \
            else center.flat[: self.y.flat.size]
        mu, sd, clo, cw, lo, hi = self.kernel_params()
        return kernels.block_losses(self.p_active, mu, sd, clo, cw, lo, hi,
                                    c, level_weights(self.j_max), key, draws)


def fit_block_posterior(obs: Observations, prior: BlockPrior) -> BlockPosterior:
    j_n = max_level(obs.n)
    lo = np.array([
        block_active_logodds(obs.y.level(j), j, obs.n, prior) for j in range(j_n + 1)
    ])
    return BlockPosterior(obs.y, obs.n, prior, lo, expit(lo))


def sample_block_prior(prior: BlockPrior, n: int, rng: CounterStream) -> SequenceParam:
    """θ ~ π truncated at J_n: level j active with odds ν_{j,n}, slab inside."""
    j_n = max_level(n)
    p_act = expit(np.array([prior.log_nu(j, n) for j in range(j_n + 1)]))
    n_coeff = (1 << (j_n + 1)) - 1
    ua = rng.uniforms(j_n + 1)
    u2 = rng.uniforms(n_coeff)
    sel = (ua < p_act)[level_index(j_n)]
    out = np.zeros(n_coeff)
    out[sel] = prior.slab.ppf(u2[sel])
    return SequenceParam(out, j_n)


def sample_block_posterior(post: BlockPosterior, rng: CounterStream) -> SequenceParam:
    """One draw: level Bernoullis first, then one uniform per coordinate."""
    j1 = post.j_max + 1
    ua = rng.uniforms(j1)
    u2 = rng.uniforms(post.y.flat.size)
    active = ua < post.p_active
    out = np.zeros(post.y.flat.size)
    if np.any(active):
        if post.prior.slab.kind in ("uniform", "gaussian"):
            mu, sd, clo, cw, lo, hi = post.kernel_params()
            sel = active[level_index(post.j_max)]
            q = np.clip(clo[sel] + u2[sel] * cw[sel], _QLO, _QHI)
            out[sel] = np.clip(mu[sel] + sd[sel] * ndtri(q), lo[sel], hi[sel])
        else:
            from .spikeslab import _grid_inverse

            for j in np.nonzero(active)[0]:
                s = level_slice(int(j))
                for i in range(s.start, s.stop):
                    out[i] = _grid_inverse(post.y.flat[i], post.n, post.prior.slab, u2[i])
    return SequenceParam(out, post.j_max)
