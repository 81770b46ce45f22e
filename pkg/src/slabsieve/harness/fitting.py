"""Slope fitting and decay-model comparison for the experiment outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_ABSCISSAS = ("log n", "log(n/log n)")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    r2: float
    abscissa: str


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    m = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 0.0:
        raise ValueError("E:harness:fit: degenerate design (all abscissa values equal)")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    rss = float(np.sum(resid**2))
    tss = float(np.sum((y - ym) ** 2))
    stderr = math.sqrt(rss / (m - 2) / sxx) if m > 2 else 0.0
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return slope, intercept, stderr, r2


def abscissa_values(n: np.ndarray, abscissa: str) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    if abscissa == "log n":
        return np.log(n)
    if abscissa == "log(n/log n)":
        return np.log(n / np.log(n))
    raise ValueError(f"E:harness:fit: abscissa must be one of {_ABSCISSAS}, got {abscissa!r}")


def fit_rate_slope(table, abscissa: str) -> RateFit:
    """OLS of log(median loss) per n on the chosen abscissa.

    ``table`` is any iterable of mappings with keys ``n`` and ``loss_median``
    (replicate rows are fine: they are medianed per n first) or of (n, value)
    pairs.
    """
    by_n: dict[int, list[float]] = {}
    for row in table:
        if isinstance(row, dict):
            n, v = int(row["n"]), float(row["loss_median"])
        else:
            n, v = int(row[0]), float(row[1])
        by_n.setdefault(n, []).append(v)
    if len(by_n) < 3:
        raise ValueError(f"E:harness:fit: need >= 3 distinct n values, got {len(by_n)}")
    ns = np.array(sorted(by_n))
    med = np.array([np.median(by_n[n]) for n in ns])
    if np.any(med <= 0):
        raise ValueError("E:harness:fit: nonpositive medians cannot be log-fitted")
    slope, intercept, stderr, r2 = _ols(abscissa_values(ns, abscissa), np.log(med))
    return RateFit(slope, intercept, stderr, r2, abscissa)


def aic(k: int, rss: float, m: int) -> float:
    """Gaussian AIC up to an additive constant shared by the candidates."""
    return 2.0 * k + m * math.log(max(rss, 1e-300) / m)


def compare_decay_models(n_values, log_mass, stretch_exponent: float) -> dict:
    """Polynomial (log m ~ log n) vs stretched-exponential (log m ~ n^q).

    Both candidates have two parameters, so the AIC comparison reduces to
    residual sums; AICs are still reported for the record.
    """
    n = np.asarray(n_values, dtype=np.float64)
    y = np.asarray(log_mass, dtype=np.float64)
    if n.size != y.size or n.size < 3:
        raise ValueError("E:harness:fit: need >= 3 aligned (n, log mass) points")
    out = {}
    for name, x in (("polynomial", np.log(n)), ("stretched_exp", n**stretch_exponent)):
        slope, intercept, stderr, r2 = _ols(x, y)
        rss = float(np.sum((y - (slope * x + intercept)) ** 2))
        out[name] = {"slope": slope, "intercept": intercept, "stderr": stderr,
                     "r2": r2, "rss": rss, "aic": aic(2, rss, n.size)}
    out["preferred"] = ("polynomial"
                        if out["polynomial"]["aic"] <= out["stretched_exp"]["aic"]
                        else "stretched_exp")
    out["stretch_exponent"] = float(stretch_exponent)
    return out
