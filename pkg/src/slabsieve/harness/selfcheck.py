"""Self-contained oracle suite plus a battery of miniature experiments.

Each check recomputes a library quantity through an independent slow path
(see oracles.py) and compares within a stated tolerance.  The miniature
experiments exercise the full artifact pipeline; their outputs land in the
out directory together with a manifest of content hashes, and the whole set
must be byte-identical for a given seed at any thread count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from ..kernels import active_backend, product_losses, block_losses
from .._rng import CounterStream, derive_key, ndtri, uniform01, TAG_SELFCHECK
from ..modulus import RateFunction, omega_holder_upper, lower_bound_envelope
from ..oracles import (
    log_marginal_oracle,
    loss_l2_bruteforce,
    loss_linf_bruteforce,
    p_nonzero_oracle,
    sieve_posterior_oracle,
    truncnorm_mv_oracle,
)
from ..seqmodel import HoelderBall, SequenceParam, loss_l2, loss_linf, make_holder_extremal
from ..sieve import build_sieve, _log_unnorm
from ..slab import SlabDensity, log_marginal, _truncnorm_mv
from ..spikeslab import posterior_nonzero_logodds
from .config import ExperimentConfig
from .experiments import run_coverage, run_rates, run_sieve


def _u(stream: CounterStream, lo: float, hi: float) -> float:
    return lo + (hi - lo) * float(stream.uniforms(1)[0])


def _check_marginals(seed: int) -> dict:
    s = CounterStream.from_seed(seed, TAG_SELFCHECK, 1)
    slabs = [SlabDensity.uniform(2.0), SlabDensity.gaussian(1.5), SlabDensity.laplace(0.7)]
    worst = 0.0
    for i in range(45):
        g = slabs[i % 3]
        n = int(10.0 ** _u(s, 1.0, 6.0))
        Y = _u(s, -3.0, 3.0)
        worst = max(worst, abs(log_marginal(Y, n, g) - log_marginal_oracle(Y, n, g)))
    return {"name": "log_marginal_vs_simpson", "worst": worst, "ok": worst <= 1e-8}


def _check_p_nonzero(seed: int) -> dict:
    s = CounterStream.from_seed(seed, TAG_SELFCHECK, 2)
    slabs = [SlabDensity.uniform(2.0), SlabDensity.gaussian(1.5)]
    worst = 0.0
    for i in range(12):
        g = slabs[i % 2]
        n = int(10.0 ** _u(s, 1.0, 5.0))
        Y, w = _u(s, -2.5, 2.5), _u(s, 0.02, 0.98)
        lo = posterior_nonzero_logodds(Y, w, n, g)
        if lo >= 0:
            p = 1.0 / (1.0 + math.exp(-lo))
        else:
            e = math.exp(lo)
            p = e / (1.0 + e)
        worst = max(worst, abs(p - p_nonzero_oracle(Y, n, w, g)))
    return {"name": "p_nonzero_vs_grid", "worst": worst, "ok": worst <= 1e-6}


def _check_losses(seed: int) -> dict:
    s = CounterStream.from_seed(seed, TAG_SELFCHECK, 3)
    worst = 0.0
    for i in range(10):
        ja, jb = 2 + i % 3, 2 + (i + 1) % 4
        a = SequenceParam(2.0 * s.uniforms((1 << (ja + 1)) - 1) - 1.0, ja)
        b = SequenceParam(2.0 * s.uniforms((1 << (jb + 1)) - 1) - 1.0, jb)
        worst = max(worst, abs(loss_l2(a, b) - loss_l2_bruteforce(a, b)),
                    abs(loss_linf(a, b) - loss_linf_bruteforce(a, b)))
    return {"name": "losses_vs_bruteforce", "worst": worst, "ok": worst <= 1e-12}


def _check_truncnorm(seed: int) -> dict:
    worst = 0.0
    for a, b in [(-1.0, 2.0), (3.0, 5.0), (0.0, 0.25), (33.0, 36.0), (-45.0, -39.0)]:
        m, v = truncnorm_mv_oracle(a, b)
        m2, v2 = _truncnorm_mv(np.array([a]), np.array([b]))
        worst = max(worst, abs(m - float(m2[0])), abs(v - float(v2[0])))
    return {"name": "truncnorm_moments_vs_simpson", "worst": worst, "ok": worst <= 1e-9}


def _check_ndtri_roundtrip(seed: int) -> dict:
    s = CounterStream.from_seed(seed, TAG_SELFCHECK, 4)
    u = np.concatenate([s.uniforms(2000), [1e-12, 1e-300, 1.0 - 1e-13]])
    x = ndtri(u)
    # Φ through erfc, an entirely separate special-function path
    from math import erfc, sqrt
    back = np.array([0.5 * erfc(-t / sqrt(2.0)) for t in x])
    rel = np.max(np.abs(back - u) / u)
    # tail amplification: d(logΦ)/dx ≈ |x|, so ~37·ulp of slack is inherent
    return {"name": "ndtri_roundtrip_erfc", "worst": float(rel), "ok": rel <= 1e-10}


def _check_kernel_twins(seed: int) -> dict:
    key = derive_key(seed, TAG_SELFCHECK, 5)
    j = 4
    ncoef = (1 << (j + 1)) - 1
    s = CounterStream(key)
    p = s.uniforms(ncoef)
    mu = 2.0 * s.uniforms(ncoef) - 1.0
    sd = 0.05 + s.uniforms(ncoef)
    clo = np.zeros(ncoef)
    cw = np.ones(ncoef)
    lo = np.full(ncoef, -np.inf)
    hi = np.full(ncoef, np.inf)
    center = 2.0 * s.uniforms(ncoef) - 1.0
    levelw = np.sqrt(2.0 ** np.arange(j + 1).astype(np.float64))
    from ..kernels import _ref
    args = (mu, sd, clo, cw, lo, hi, center, levelw, key, 64)
    a2, ai = product_losses(p, *args)
    b2, bi = _ref.product_losses(p, *args)
    worst = max(float(np.max(np.abs(a2 - b2))), float(np.max(np.abs(ai - bi))))
    p_act = s.uniforms(j + 1)
    a2, ai = block_losses(p_act, *args)
    b2, bi = _ref.block_losses(p_act, *args)
    worst = max(worst, float(np.max(np.abs(a2 - b2))), float(np.max(np.abs(ai - bi))))
    return {"name": f"kernel_twins[{active_backend()}]", "worst": worst, "ok": worst <= 1e-10}


def _check_sieve_posterior(seed: int) -> dict:
    sieve = build_sieve(3.0, 64, 1, 1.0)
    s = CounterStream.from_seed(seed, TAG_SELFCHECK, 6)
    y = (2.0 * s.uniforms(3) - 1.0) * sieve.phi_n
    lp = _log_unnorm(sieve, y)
    p = np.exp(lp - lp.max())
    p /= p.sum()
    q = sieve_posterior_oracle(sieve, y)
    worst = float(np.max(np.abs(p - q)))
    return {"name": "sieve_posterior_vs_direct", "worst": worst, "ok": worst <= 1e-12}


def _check_modulus(seed: int) -> dict:
    ball = HoelderBall(1.0, 1.0)
    res = omega_holder_upper(ball, RateFunction("linf", 1.0, 1.0), 4096)
    sep = loss_linf(res.theta, res.theta_prime)
    ok = sep >= 2.0 * RateFunction("linf", 1.0, 1.0)(4096) - 1e-12
    ident = abs(lower_bound_envelope(1.0, 4096, math.sqrt(math.log(4096) / 4096), as_log=True)
                + 3.0 * math.log(4096))
    return {"name": "modulus_witness_and_envelope", "worst": ident,
            "ok": bool(ok and ident <= 1e-9)}


_CHECKS = (
    _check_marginals,
    _check_p_nonzero,
    _check_losses,
    _check_truncnorm,
    _check_ndtri_roundtrip,
    _check_kernel_twins,
    _check_sieve_posterior,
    _check_modulus,
)


def _mini_experiments(seed: int, threads: int, out_dir: str) -> list[Path]:
    uniform = {"family": "spike", "slab": {"kind": "uniform", "L0": 2.0}}
    rates = ExperimentConfig(
        kind="rates", prior=uniform, signal={"kind": "extremal", "L": 1.0},
        n_grid=[256, 512, 1024], beta_grid=[1.0], loss="linf",
        draws=256, replicates=4, seed=seed, out_dir=out_dir, format="csv",
    )
    run_rates(rates, threads=threads)
    coverage = ExperimentConfig(
        kind="coverage", prior=uniform, signal={"kind": "extremal", "L": 1.0},
        n_grid=[256], beta_grid=[1.0], loss="l2", draws=300, replicates=50,
        seed=seed, out_dir=out_dir, format="csv",
        params={"alpha": 0.1, "mode": "prior"},
    )
    run_coverage(coverage, threads=threads)
    sieve = ExperimentConfig(
        kind="sieve", prior=uniform,
        signal={"kind": "extremal", "L": 1.0, "scale": 0.6, "j_max": 1},
        n_grid=[64, 128, 256], beta_grid=[1.0], loss="linf", draws=1,
        replicates=50, seed=seed, out_dir=out_dir, format="csv",
        params={"phi0": 33.0, "K0": 0.0625, "levels": 1, "L": 1.0, "M": 0.2},
    )
    run_sieve(sieve, threads=threads)
    names = ("rates.csv", "rates_report.jsonl", "coverage.csv",
             "coverage_report.jsonl", "sieve.csv", "sieve_report.jsonl")
    return [Path(out_dir) / nm for nm in names]


def run_selfcheck(seed: int = 7, threads: int = 1, out_dir: str = ".") -> dict:
    checks = [chk(seed) for chk in _CHECKS]
    artifacts = _mini_experiments(seed, threads, out_dir)

    os.makedirs(out_dir, exist_ok=True)
    checks_path = Path(out_dir) / "selfcheck_checks.jsonl"
    with checks_path.open("w") as fh:
        for c in checks:
            fh.write(json.dumps(c, sort_keys=True) + "\n")

    manifest = {}
    for path in [checks_path] + artifacts:
        manifest[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    man_path = Path(out_dir) / "selfcheck_manifest.json"
    man_path.write_text(json.dumps(manifest, sort_keys=True, indent=0) + "\n")

    return {"ok": all(c["ok"] for c in checks), "checks": checks,
            "manifest": str(man_path), "backend": active_backend()}
