"""Experiment runners: Monte Carlo orchestration behind each CLI subcommand.

Every random quantity is keyed by (seed, experiment, β index, n index,
replicate), so replicate tasks can run on any thread in any order and the
index-sorted merge still reproduces the single-threaded byte stream.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .._rng import derive_key, TAG_EXPERIMENT, TAG_POSTERIOR
from ..blockslab import BlockPrior, fit_block_posterior
from ..inference import coverage_experiment
from ..modulus import RateFunction, rate, omega_continuous, lower_bound_envelope
from ..seqmodel import (
    HoelderBall,
    SequenceParam,
    loss_linf,
    loss_l2,
    make_holder_extremal,
    max_level,
    simulate,
)
from ..sieve import (
    build_sieve,
    build_admissible_partition,
    radius_constant,
    verify_sieve_conditions,
)
from ..spikeslab import SpikeSlabPrior, fit_posterior
from .artifacts import write_csv, write_jsonl
from .config import ExperimentConfig
from .fitting import RateFit, fit_rate_slope, compare_decay_models

_KIND_CODE = {"rates": 1, "lemma1": 2, "coverage": 3, "sieve": 4,
              "envelope": 5, "bayes-risk": 6}


def resolve_threads(requested: int | None) -> int:
    """--threads, overridden by ACL_THREADS when set."""
    env = os.environ.get("ACL_THREADS")
    if env is not None:
        try:
            t = int(env)
        except ValueError:
            raise ValueError(f"E:harness:config: ACL_THREADS must be an integer, got {env!r}")
        if t < 1:
            raise ValueError(f"E:harness:config: ACL_THREADS must be >= 1, got {t}")
        return t
    return max(1, requested or 1)


def _pool_map(fn, count: int, threads: int) -> list:
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def build_prior(spec: dict):
    if spec["family"] == "spike":
        return SpikeSlabPrior.from_config(spec)
    return BlockPrior.from_config(spec)


def build_signal(spec: dict, beta: float, n: int) -> SequenceParam:
    kind = spec["kind"]
    j_max = int(spec.get("j_max", max_level(n)))
    if kind == "zero":
        return SequenceParam.zeros(j_max)
    if kind == "custom":
        flat = np.asarray(spec["flat"], dtype=np.float64)
        j = (flat.size + 1).bit_length() - 2
        if (1 << (j + 1)) - 1 != flat.size:
            raise ValueError(
                f"E:harness:config: signal.flat: length {flat.size} is not 2^(j+1)-1"
            )
        return SequenceParam(flat, j)
    ball = HoelderBall(float(spec.get("beta", beta)), float(spec.get("L", 1.0)))
    signs = "plus" if kind == "extremal" else ("random", int(spec.get("sign_seed", 0)))
    theta = make_holder_extremal(ball, j_max, signs=signs)
    scale = float(spec.get("scale", 1.0))
    return theta if scale == 1.0 else theta.scaled(scale)


def _task_seed(cfg: ExperimentConfig, bi: int, ni: int, r: int) -> int:
    return derive_key(cfg.seed, TAG_EXPERIMENT, _KIND_CODE[cfg.kind], bi, ni, r)


def _fit_record(beta: float, fit: RateFit) -> dict:
    return {"beta": beta, "slope": fit.slope, "intercept": fit.intercept,
            "stderr": fit.stderr, "r2": fit.r2, "abscissa": fit.abscissa}


# ---------------------------------------------------------------- rates

def run_rates(cfg: ExperimentConfig, threads: int = 1) -> dict:
    prior = build_prior(cfg.prior)
    is_block = isinstance(prior, BlockPrior)
    p = cfg.params
    abscissa = p.get("abscissa", "log n" if is_block else "log(n/log n)")
    flavor = p.get("rate_flavor", "l2" if is_block else "linf")
    M = float(p.get("M", 1.0))

    rows: list[tuple] = []
    fits: list[dict] = []
    for bi, beta in enumerate(cfg.beta_grid):
        for ni, n in enumerate(cfg.n_grid):
            theta0 = build_signal(cfg.signal, beta, n)
            eps = M * rate(flavor, 1.0, beta, n)

            def one(r: int, n=n, beta=beta, theta0=theta0, eps=eps, bi=bi, ni=ni):
                ts = _task_seed(cfg, bi, ni, r)
                obs = simulate(theta0, n, ts)
                post = fit_block_posterior(obs, prior) if is_block else fit_posterior(obs, prior)
                l2, linf = post.loss_samples(theta0, cfg.draws, derive_key(ts, TAG_POSTERIOR))
                vals = l2 if cfg.loss == "l2" else linf
                conc = float(np.mean(vals > eps))
                se = math.sqrt(conc * (1.0 - conc) / cfg.draws)
                return (n, beta, r, float(np.median(vals)),
                        float(np.quantile(vals, 0.9)), conc, se)

            rows.extend(_pool_map(one, cfg.replicates, threads))
        if len(cfg.n_grid) >= 3:
            sub = [{"n": t[0], "loss_median": t[3]} for t in rows if t[1] == beta]
            fits.append(_fit_record(beta, fit_rate_slope(sub, abscissa)))

    header = ("n", "beta", "replicate", "loss_median", "loss_p90", "conc_prob", "se")
    report = {"kind": "rates", "config": cfg.to_dict(), "eps_flavor": flavor,
              "eps_M": M, "abscissa": abscissa, "fits": fits}
    _emit(cfg, "rates", header, rows, [report])
    return {**report, "rows": rows}


# ---------------------------------------------------------------- lemma1

def run_lemma1(cfg: ExperimentConfig, threads: int = 1) -> dict:
    from ..spikeslab import lemma1_probabilities

    prior = build_prior(cfg.prior)
    if isinstance(prior, BlockPrior):
        raise ValueError("E:harness:config: prior.family: lemma1 needs the spike prior")
    gamma_lo = float(cfg.params.get("gamma_lo", 0.05))
    gamma_hi = float(cfg.params.get("gamma_hi", 8.0))

    rows: list[tuple] = []
    summary: list[dict] = []
    for bi, beta in enumerate(cfg.beta_grid):
        means = []
        for ni, n in enumerate(cfg.n_grid):
            theta0 = build_signal(cfg.signal, beta, n)

            def one(r: int, n=n, beta=beta, theta0=theta0, bi=bi, ni=ni):
                obs = simulate(theta0, n, _task_seed(cfg, bi, ni, r))
                post = fit_posterior(obs, prior)
                p_miss, p_spur = lemma1_probabilities(post, theta0, gamma_lo, gamma_hi)
                return (n, beta, r, p_miss, p_spur)

            batch = _pool_map(one, cfg.replicates, threads)
            rows.extend(batch)
            miss = np.array([b[3] for b in batch])
            spur = np.array([b[4] for b in batch])
            rec = {"beta": beta, "n": n,
                   "p_miss_mean": float(miss.mean()),
                   "p_miss_se": float(miss.std(ddof=1) / math.sqrt(miss.size)) if miss.size > 1 else 0.0,
                   "p_spurious_mean": float(spur.mean()),
                   "p_spurious_se": float(spur.std(ddof=1) / math.sqrt(spur.size)) if spur.size > 1 else 0.0}
            means.append(rec)
            summary.append(rec)
        # nonincreasing-within-noise flags against the previous grid point
        for i in range(1, len(means)):
            a, b = means[i - 1], means[i]
            for q in ("p_miss", "p_spurious"):
                tol = 2.0 * math.hypot(a[f"{q}_se"], b[f"{q}_se"])
                b[f"{q}_nonincreasing_2se"] = bool(b[f"{q}_mean"] <= a[f"{q}_mean"] + tol)

    header = ("n", "beta", "replicate", "p_miss", "p_spurious")
    report = {"kind": "lemma1", "config": cfg.to_dict(),
              "gamma_lo": gamma_lo, "gamma_hi": gamma_hi, "summary": summary}
    _emit(cfg, "lemma1", header, rows, [report])
    return {**report, "rows": rows}


# ---------------------------------------------------------------- coverage

def run_coverage(cfg: ExperimentConfig, threads: int = 1) -> dict:
    prior = build_prior(cfg.prior)
    p = cfg.params
    alpha = float(p.get("alpha", 0.1))
    mode = p.get("mode", "prior")
    estimator = p.get("estimator", "mean")
    beta = cfg.beta_grid[0]

    summary_rows: list[tuple] = []
    records: list[dict] = []
    reports: list[dict] = []
    for ni, n in enumerate(cfg.n_grid):
        theta0 = build_signal(cfg.signal, beta, n) if mode == "fixed" else None
        rep = coverage_experiment(prior, mode, n, alpha, cfg.replicates,
                                  seed=_task_seed(cfg, 0, ni, 0), loss=cfg.loss,
                                  draws=cfg.draws, theta0=theta0,
                                  estimator=estimator, threads=threads)
        summary_rows.append((n, beta, cfg.loss, alpha, rep["coverage_mean"],
                             rep["radius_median"], rep["radius_p90"]))
        for rec in rep["records"]:
            records.append({"n": n, **rec})
        reports.append({k: v for k, v in rep.items() if k != "records"})

    report = {"kind": "coverage", "config": cfg.to_dict(), "per_n": reports}
    if len(cfg.n_grid) >= 3:
        abscissa = cfg.params.get("abscissa",
                                  "log(n/log n)" if cfg.loss == "linf" else "log n")
        fit = fit_rate_slope([{"n": t[0], "loss_median": t[5]} for t in summary_rows],
                             abscissa)
        report["radius_fit"] = _fit_record(beta, fit)

    header = ("n", "beta", "loss", "alpha", "coverage", "radius_median", "radius_p90")
    _emit(cfg, "coverage", header, summary_rows, [report] + records)
    return {**report, "rows": summary_rows, "records": records}


# ---------------------------------------------------------------- envelope

def run_envelope(cfg: ExperimentConfig, threads: int = 1) -> dict:
    prior = build_prior(cfg.prior)
    is_block = isinstance(prior, BlockPrior)
    p = cfg.params
    flavor = p.get("rate_flavor", "l2" if is_block else "linf")
    M = float(p.get("M", 1.0))
    K_grid = [float(k) for k in p.get("K_grid", (0.25, 0.5, 1.0, 2.0))]

    rows: list[tuple] = []
    reports: list[dict] = []
    for bi, beta in enumerate(cfg.beta_grid):
        ball = HoelderBall(beta, float(cfg.signal.get("L", 1.0)))
        rate_fn = RateFunction(flavor, M, beta)
        mean_masses = []
        for ni, n in enumerate(cfg.n_grid):
            theta0 = build_signal(cfg.signal, beta, n)
            eps = M * rate(flavor, 1.0, beta, n)

            def one(r: int, n=n, theta0=theta0, eps=eps, bi=bi, ni=ni):
                ts = _task_seed(cfg, bi, ni, r)
                obs = simulate(theta0, n, ts)
                post = fit_block_posterior(obs, prior) if is_block else fit_posterior(obs, prior)
                l2, linf = post.loss_samples(theta0, cfg.draws, derive_key(ts, TAG_POSTERIOR))
                vals = l2 if cfg.loss == "l2" else linf
                return float(np.mean(vals > eps))

            batch = _pool_map(one, cfg.replicates, threads)
            rows.extend((n, beta, r, m) for r, m in enumerate(batch))
            mean_mass = float(np.mean(batch))
            if mean_mass == 0.0:  # continuity correction: half a draw overall
                mean_mass = 0.5 / (cfg.replicates * cfg.draws)
            mean_masses.append(mean_mass)

        q = 1.0 / (2.0 * beta + 1.0)
        comparison = compare_decay_models(cfg.n_grid, np.log(mean_masses), q)
        envelope_grid = [
            {"K": K, "values_log": [lower_bound_envelope(K, n, omega_continuous(ball, rate_fn, n), as_log=True)
                                    for n in cfg.n_grid]}
            for K in K_grid
        ]
        reports.append({"beta": beta, "eps_M": M, "eps_flavor": flavor,
                        "mean_mass": mean_masses, "n_grid": cfg.n_grid,
                        "models": comparison, "lower_envelopes": envelope_grid})

    header = ("n", "beta", "replicate", "outside_mass")
    report = {"kind": "envelope", "config": cfg.to_dict(), "per_beta": reports}
    _emit(cfg, "envelope", header, rows, [report])
    return {**report, "rows": rows}


# ---------------------------------------------------------------- bayes-risk

def run_bayes_risk(cfg: ExperimentConfig, threads: int = 1) -> dict:
    from ..inference import bayes_estimator_l2, coordinate_median

    prior = build_prior(cfg.prior)
    if isinstance(prior, BlockPrior):
        raise ValueError("E:harness:config: prior.family: bayes-risk needs the spike prior")
    p = cfg.params
    M = float(p.get("M", 1.0))
    estimator = p.get("estimator", "mean")
    if estimator not in ("mean", "median"):
        raise ValueError(f"E:harness:config: params.estimator: must be mean or median, got {estimator!r}")
    beta = cfg.beta_grid[0]

    rows: list[tuple] = []
    per_n: list[dict] = []
    for ni, n in enumerate(cfg.n_grid):
        theta0 = build_signal(cfg.signal, beta, n)
        eps = M * rate("linf", 1.0, beta, n)

        def one(r: int, n=n, theta0=theta0, eps=eps, ni=ni):
            obs = simulate(theta0, n, _task_seed(cfg, 0, ni, r))
            post = fit_posterior(obs, prior)
            center = bayes_estimator_l2(post) if estimator == "mean" else coordinate_median(post)
            risk = loss_linf(center, theta0)
            return (n, r, risk, loss_l2(center, theta0), bool(risk >= eps))

        batch = _pool_map(one, cfg.replicates, threads)
        rows.extend(batch)
        risks = np.array([b[2] for b in batch])
        per_n.append({"n": n, "eps": eps,
                      "mean_linf_risk": float(risks.mean()),
                      "normalized_risk": float(risks.mean() / eps),
                      "exceed_freq": float(np.mean([b[4] for b in batch]))})

    norm = [rec["normalized_risk"] for rec in per_n]
    report = {"kind": "bayes-risk", "config": cfg.to_dict(), "beta": beta,
              "estimator": estimator, "per_n": per_n,
              "normalized_risk_ratio": max(norm) / min(norm)}
    header = ("n", "replicate", "linf_risk", "l2_risk", "exceeds_eps")
    _emit(cfg, "bayes_risk", header, rows, [report])
    return {**report, "rows": rows}


# ---------------------------------------------------------------- sieve

def run_sieve(cfg: ExperimentConfig, threads: int = 1) -> dict:
    p = cfg.params
    phi0 = float(p.get("phi0", 33.0))
    K0 = float(p.get("K0", 1.0 / 16.0))
    levels = int(p.get("levels", 2))
    L = float(p.get("L", 1.0))
    M = float(p.get("M", 0.2))
    beta = cfg.beta_grid[0]
    ball = HoelderBall(beta, float(cfg.signal.get("L", 1.0)))
    rate_fn = RateFunction("linf", M, beta)

    sig = dict(cfg.signal)
    sig.setdefault("j_max", levels)
    records = []
    for ni, n in enumerate(cfg.n_grid):
        theta0 = build_signal(sig, beta, n)
        sieve = build_sieve(phi0, n, levels, L)
        A, J, b0 = radius_constant(theta0, ball, phi0, n, M)
        part = build_admissible_partition(sieve, theta0, ball, A, M)
        rec = verify_sieve_conditions(part, n, K0, replicates=cfg.replicates,
                                      seed=derive_key(cfg.seed, TAG_EXPERIMENT,
                                                      _KIND_CODE["sieve"], ni))
        rec["tail_level"] = J
        rec["b0"] = b0
        records.append(rec)

    # envelope across the sweep: median log outside-mass against n·ω̃², the
    # smooth (unrounded) separation solution, which grows like log n
    x = np.array([n * omega_continuous(ball, rate_fn, n) ** 2 for n in cfg.n_grid])
    y = np.array([float(np.median(r["mass_outside_log"])) for r in records])
    if len(cfg.n_grid) >= 3:
        slope, intercept = np.polyfit(x, y, 1)
        pred = slope * x + intercept
        ss = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0
        fitted = {"C0": 0.5 * math.exp(min(intercept, 700.0)), "K1": -float(slope),
                  "log_2C0": float(intercept), "r2": r2}
    else:
        fitted = {"C0": 0.0, "K1": 0.0, "log_2C0": 0.0, "r2": 0.0}
    for rec in records:
        rec["fitted_envelope"] = fitted

    summary = [(r["n"], r["n_classes"], r["ball_size"], r["sum_cond2"],
                r["sum_cond2_log"], r["cond1_fail_freq"], r["cond1_fail_bound"],
                float(np.median(r["mass_outside_log"]))) for r in records]
    header = ("n", "n_classes", "ball_size", "sum_cond2", "sum_cond2_log",
              "cond1_fail_freq", "cond1_fail_bound", "mass_outside_log_median")
    report = {"kind": "sieve", "config": cfg.to_dict(), "fitted_envelope": fitted}
    _emit(cfg, "sieve", header, summary, [report] + records)
    return {**report, "records": records, "rows": summary}


# ---------------------------------------------------------------- emission

def _emit(cfg: ExperimentConfig, stem: str, header, rows, reports) -> None:
    out = cfg.out_dir
    if out is None:
        return
    if cfg.format == "csv":
        write_csv(os.path.join(out, f"{stem}.csv"), header, rows)
    else:
        write_jsonl(os.path.join(out, f"{stem}.jsonl"),
                    [dict(zip(header, row)) for row in rows])
    write_jsonl(os.path.join(out, f"{stem}_report.jsonl"), reports)


RUNNERS = {
    "rates": run_rates,
    "lemma1": run_lemma1,
    "coverage": run_coverage,
    "sieve": run_sieve,
    "envelope": run_envelope,
    "bayes-risk": run_bayes_risk,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> dict:
    return RUNNERS[cfg.kind](cfg, threads=threads)
