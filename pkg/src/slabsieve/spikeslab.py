"""Coordinate-wise spike-and-slab prior and its exact product posterior.

The prior puts θ_{j,k} = 0 with probability 1 - w_{j,n} and draws from the
slab otherwise, independently across coordinates, zero above J_n.  Under the
white noise likelihood the posterior is again a product: per coordinate a
Bernoulli nonzero indicator with log odds

    log(w/(1-w)) + log_marginal(Y, n, g) + n·Y²/2

and, given nonzero, the tilted slab.  Everything downstream (selection sets,
miss/spurious probabilities, loss-concentration Monte Carlo) exploits that
product structure.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, ndtr

from . import kernels
from ._rng import CounterStream, ndtri
from .seqmodel import (
    Observations,
    SequenceParam,
    flat_size,
    level_index,
    level_weights,
    max_level,
)
from .slab import (
    SlabDensity,
    log_marginal_vec,
    sample_tilted,
    tilted_kernel_params,
    tilted_mean_var_vec,
)

_QLO = 2.0**-54
_QHI = 1.0 - 2.0**-53


class SpikeSlabPrior:
    """Weights w_{j,n} plus a slab; variant "prop4" multiplies them by n^{-6}.

    The default rule is w_{j,n} = 2^{-j(1+tau)}.  K is only used to check the
    two-sided constraint n^{-K} <= w_{j,n} <= 2^{-j(1+tau)} for j <= J_n.
    """

    __slots__ = ("slab", "tau", "K", "variant", "weight_rule")

    def __init__(self, slab: SlabDensity, tau: float = 1.0, variant: str = "standard",
                 weight_rule=None, K: float | None = None):
        if tau <= 0.5:
            raise ValueError(f"E:spikeslab:domain: tau must be > 1/2, got {tau}")
        if variant not in ("standard", "prop4"):
            raise ValueError(f"E:spikeslab:domain: unknown variant {variant!r}")
        self.slab = slab
        self.tau = float(tau)
        self.variant = variant
        if K is None:
            K = 2.0 * (1.0 + tau) + (6.0 if variant == "prop4" else 0.0)
        if K <= 0:
            raise ValueError(f"E:spikeslab:domain: K must be > 0, got {K}")
        self.K = float(K)
        self.weight_rule = weight_rule if weight_rule is not None else self._default_rule

    def _default_rule(self, j: int, n: int) -> float:
        w = 2.0 ** (-j * (1.0 + self.tau))
        if self.variant == "prop4":
            w *= float(n) ** -6.0
        return w

    def weights(self, n: int) -> np.ndarray:
        """w_{j,n} for j = 0..J_n, validated against the constraint band."""
        j_n = max_level(n)
        w = np.array([float(self.weight_rule(j, n)) for j in range(j_n + 1)])
        cap = 2.0 ** (-np.arange(j_n + 1) * (1.0 + self.tau))
        floor = float(n) ** -self.K
        if np.any(w > cap) or np.any(w < floor) or np.any(~np.isfinite(w)):
            raise ValueError(
                f"E:spikeslab:weights: rule leaves [n^-K, 2^(-j(1+tau))] for n={n}"
            )
        return w

    def to_config(self) -> dict:
        return {"type": "spike_slab", "tau": self.tau, "variant": self.variant,
                "slab": self.slab.to_config()}

    @classmethod
    def from_config(cls, d: dict) -> "SpikeSlabPrior":
        return cls(SlabDensity.from_config(d["slab"]), tau=d.get("tau", 1.0),
                   variant=d.get("variant", "standard"), K=d.get("K"))


class CoordinatePosterior:
    """View of one coordinate of a ProductPosterior."""

    __slots__ = ("log_odds_nonzero", "p_nonzero", "Y", "n", "slab")

    def __init__(self, log_odds, p, Y, n, slab):
        self.log_odds_nonzero = float(log_odds)
        self.p_nonzero = float(p)
        self.Y = float(Y)
        self.n = int(n)
        self.slab = slab

    def sample_tilted(self, rng, size=None):
        return sample_tilted(self.Y, self.n, self.slab, rng, size=size)


def posterior_nonzero_logodds(Y: float, w: float, n: int, g: SlabDensity) -> float:
    """Log posterior odds that the coordinate is nonzero."""
    if not 0.0 < w < 1.0:
        raise ValueError(f"E:spikeslab:domain: w must lie in (0,1), got {w}")
    lm = float(log_marginal_vec(np.array([Y]), n, g)[0])
    return math.log(w) - math.log1p(-w) + lm + 0.5 * n * Y * Y


class ProductPosterior:
    """Exact posterior: independent coordinates, Bernoulli × tilted slab."""

    __slots__ = ("y", "n", "prior", "log_odds", "p_nonzero", "_kparams")

    def __init__(self, y: SequenceParam, n: int, prior: SpikeSlabPrior,
                 log_odds: np.ndarray, p_nonzero: np.ndarray):
        self.y = y
        self.n = n
        self.prior = prior
        self.log_odds = log_odds
        self.p_nonzero = p_nonzero
        self._kparams = None

    @property
    def j_max(self) -> int:
        return self.y.j_max

    def coordinate(self, j: int, k: int) -> CoordinatePosterior:
        i = (1 << j) - 1 + k
        return CoordinatePosterior(self.log_odds[i], self.p_nonzero[i],
                                   self.y.flat[i], self.n, self.prior.slab)

    def kernel_params(self):
        if self._kparams is None:
            self._kparams = tilted_kernel_params(self.y.flat, self.n, self.prior.slab)
        return self._kparams

    def mean(self) -> SequenceParam:
        """Posterior mean, p·(tilted mean) per coordinate (exact)."""
        tm, _ = tilted_mean_var_vec(self.y.flat, self.n, self.prior.slab)
        return SequenceParam(self.p_nonzero * tm, self.j_max)

    def coordinate_quantiles(self, q: float) -> np.ndarray:
        """Per-coordinate q-quantile of the spike/slab mixture (closed-form slabs).

        The mixture CDF jumps by 1-p at 0; the quantile is 0 whenever the jump
        straddles q, otherwise a tilted-slab quantile at a rescaled level.
        """
        mu, sd, clo, cw, lo, hi = self.kernel_params()
        p = self.p_nonzero
        # tilted CDF at 0-: F_t(0) = (Phi((0-mu)/sd) - clo)/cw, clipped to [0,1]
        f0 = np.clip((ndtr(-mu / sd) - clo) / np.maximum(cw, 1e-300), 0.0, 1.0)
        below = p * f0  # mixture mass strictly left of 0 (slab side)
        out = np.zeros_like(p)
        left = q < below
        if np.any(left):
            qq = np.clip(clo[left] + (q / p[left]) * cw[left], _QLO, _QHI)
            out[left] = np.clip(mu[left] + sd[left] * ndtri(qq), lo[left], hi[left])
        right = q > below + (1.0 - p)
        if np.any(right):
            qt = f0[right] + (q - below[right] - (1.0 - p[right])) / p[right]
            qq = np.clip(clo[right] + qt * cw[right], _QLO, _QHI)
            out[right] = np.clip(mu[right] + sd[right] * ndtri(qq), lo[right], hi[right])
        return out

    def loss_samples(self, center: SequenceParam, draws: int, key: int):
        """(l2, linf) arrays of ``draws`` posterior samples against ``center``.

        Fused sampling+loss through the kernels; distributionally identical to
        looping sample_posterior + the losses, and deterministic in ``key``.
        """
        c = center.padded(self.j_max) if center.j_max <= self.j_max \
            else center.flat[: flat_size(self.j_max)]
        mu, sd, clo, cw, lo, hi = self.kernel_params()
        return kernels.product_losses(self.p_nonzero, mu, sd, clo, cw, lo, hi,
                                      c, level_weights(self.j_max), key, draws)


def fit_posterior(obs: Observations, prior: SpikeSlabPrior) -> ProductPosterior:
    """Exact coordinate-wise posterior given observations."""
    w_level = prior.weights(obs.n)
    w = w_level[level_index(obs.y.j_max)]
    y = obs.y.flat
    lo = np.empty_like(y)
    inner = (w > 0.0) & (w < 1.0)
    lo[w == 0.0] = -np.inf
    lo[w == 1.0] = np.inf
    if np.any(inner):
        lm = log_marginal_vec(y[inner], obs.n, prior.slab)
        wi = w[inner]
        lo[inner] = np.log(wi) - np.log1p(-wi) + lm + 0.5 * obs.n * y[inner] ** 2
    return ProductPosterior(obs.y, obs.n, prior, lo, expit(lo))


def sample_posterior(post: ProductPosterior, rng: CounterStream) -> SequenceParam:
    """One exact draw; two uniforms per coordinate (select, then value)."""
    n_coeff = post.p_nonzero.size
    u = rng.uniforms(2 * n_coeff)
    u1, u2 = u[0::2], u[1::2]
    sel = u1 < post.p_nonzero
    out = np.zeros(n_coeff)
    if np.any(sel):
        if post.prior.slab.kind in ("uniform", "gaussian"):
            mu, sd, clo, cw, lo, hi = post.kernel_params()
            q = np.clip(clo[sel] + u2[sel] * cw[sel], _QLO, _QHI)
            out[sel] = np.clip(mu[sel] + sd[sel] * ndtri(q), lo[sel], hi[sel])
        else:
            idx = np.nonzero(sel)[0]
            vals = [_grid_inverse(post.y.flat[i], post.n, post.prior.slab, u2[i])
                    for i in idx]
            out[idx] = vals
    return SequenceParam(out, post.j_max)


def sample_prior(prior: SpikeSlabPrior, n: int, rng: CounterStream) -> SequenceParam:
    """θ ~ π truncated at J_n (spike/slab per coordinate, slab drawn from g)."""
    j_n = max_level(n)
    w = prior.weights(n)[level_index(j_n)]
    n_coeff = flat_size(j_n)
    u = rng.uniforms(2 * n_coeff)
    sel = u[0::2] < w
    out = np.zeros(n_coeff)
    out[sel] = prior.slab.ppf(u[1::2][sel])
    return SequenceParam(out, j_n)


def _grid_inverse(Y, n, g, u):
    from .slab import _tilted_grid

    grid, _, cdf = _tilted_grid(float(Y), n, g)
    return float(np.interp(u, cdf, grid))


def selection_set(theta0: SequenceParam, gamma: float, n: int) -> set:
    """{(j,k): |θ⁰_{j,k}| > γ·√(log n / n)}, restricted to j <= J_n."""
    if gamma <= 0:
        raise ValueError(f"E:spikeslab:domain: gamma must be > 0, got {gamma}")
    mask = _selection_mask(theta0, gamma, n)
    j_top = min(max_level(n), theta0.j_max)
    out = set()
    i = 0
    for j in range(j_top + 1):
        for k in range(1 << j):
            if mask[i]:
                out.add((j, k))
            i += 1
    return out


def _selection_mask(theta0: SequenceParam, gamma: float, n: int) -> np.ndarray:
    """Flat boolean mask on levels 0..min(J_n, j_max(θ0))."""
    j_top = min(max_level(n), theta0.j_max)
    thr = gamma * math.sqrt(math.log(n) / n)
    return np.abs(theta0.flat[: flat_size(j_top)]) > thr


def lemma1_probabilities(post: ProductPosterior, theta0: SequenceParam,
                         gamma_lo: float, gamma_hi: float) -> tuple[float, float]:
    """Exact (p_miss, p_spurious) of the posterior selection behavior.

    p_miss: some coordinate carrying signal above the γ_hi threshold is set to
    zero.  p_spurious: some coordinate below the γ_lo threshold is kept.  Both
    are 1 - Π(...) over independent coordinates, assembled from log odds so no
    precision is lost when p_nonzero saturates.
    """
    if not 0.0 < gamma_lo < gamma_hi:
        raise ValueError(
            f"E:spikeslab:domain: need 0 < gamma_lo < gamma_hi, got ({gamma_lo}, {gamma_hi})"
        )
    n_coeff = post.p_nonzero.size
    pad = theta0.padded(max(theta0.j_max, post.j_max))[:n_coeff]
    theta_grid = SequenceParam(pad, post.j_max)
    hi_mask = _selection_mask(theta_grid, gamma_hi, post.n)
    lo_mask = _selection_mask(theta_grid, gamma_lo, post.n)
    lo_odds = post.log_odds
    # log p = -softplus(-lo), log(1-p) = -softplus(lo)
    p_miss = -np.expm1(-np.sum(np.logaddexp(0.0, -lo_odds[hi_mask])))
    p_spur = -np.expm1(-np.sum(np.logaddexp(0.0, lo_odds[~lo_mask])))
    return float(p_miss), float(p_spur)


def concentration_prob_mc(post: ProductPosterior, theta0: SequenceParam,
                          loss: str, eps: float, draws: int,
                          rng: CounterStream) -> tuple[float, float]:
    """MC estimate (with binomial SE) of P^π(ℓ(θ, θ0) > ε | Y)."""
    if draws < 100:
        raise ValueError(f"E:spikeslab:domain: draws must be >= 100, got {draws}")
    if loss not in ("l2", "linf"):
        raise ValueError(f"E:spikeslab:domain: loss must be l2 or linf, got {loss!r}")
    key = rng.spawn().key
    l2, linf = post.loss_samples(theta0, draws, key)
    vals = l2 if loss == "l2" else linf
    est = float(np.mean(vals > eps))
    return est, math.sqrt(est * (1.0 - est) / draws)
