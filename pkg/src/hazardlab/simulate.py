"""Synthetic inputs: price series for the pipeline and survival samples for the estimators."""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np
from scipy import stats

from .distributions import Family
from .estimation.model import Frailty, Metric, SurvivalData
from .pipeline import format_month, parse_month

__all__ = ["default_seed", "simulate_price_csv", "simulate_survival"]


def default_seed(fallback: int = 20160601) -> int:
    """Seed from ``HAZARDLAB_SEED`` if set."""
    raw = os.environ.get("HAZARDLAB_SEED")
    return int(raw) if raw not in (None, "") else fallback


def simulate_price_csv(n_months: int = 1747, start: str = "1871-01", seed: int | None = None) -> str:
    """Monthly real price and long rate as ``date,real_price,long_rate_pct`` CSV text.

    Log returns are Student-t noise with mild momentum; the long rate is a
    mean-reverting walk around 4.6 percent.
    """
    rng = np.random.default_rng(default_seed() if seed is None else seed)
    r = np.empty(n_months)
    prev = 0.0
    shocks = 0.035 * rng.standard_t(5, size=n_months)
    for i in range(n_months):
        prev = 0.003 + 0.25 * prev + shocks[i]
        r[i] = prev
    r[0] = 0.0
    price = 5.0 * np.exp(np.cumsum(r))
    rate = np.empty(n_months)
    rate[0] = 4.6
    for i in range(1, n_months):
        rate[i] = max(0.5, rate[i - 1] + 0.05 * (4.6 - rate[i - 1]) + 0.15 * rng.standard_normal())
    m0 = parse_month(start)
    lines = ["date,real_price,long_rate_pct"]
    lines += [f"{format_month(m0 + i)},{price[i]:.6f},{rate[i]:.4f}" for i in range(n_months)]
    return "\n".join(lines) + "\n"


def _baseline_quantile(family: Family, v: np.ndarray, anc: Sequence[float]) -> np.ndarray:
    """Unit-scale baseline duration with survivor probability ``v``."""
    if family is Family.EXPONENTIAL:
        return -np.log(v)
    if family is Family.WEIBULL:
        p = np.exp(anc[0])
        return (-np.log(v)) ** (1.0 / p)
    if family is Family.LOGNORMAL:
        return np.exp(np.exp(anc[0]) * stats.norm.isf(v))
    if family is Family.GAMMA:
        return stats.gamma.isf(v, np.exp(anc[0]))
    p, k = np.exp(anc[0]), np.exp(anc[1])
    return stats.gamma.isf(v, k) ** (1.0 / p)


def simulate_survival(
    family: Family | str,
    metric: Metric | str,
    beta: Sequence[float],
    ancillary: Sequence[float] = (),
    n: int = 1000,
    X: np.ndarray | None = None,
    frailty: Frailty | str = Frailty.NONE,
    theta: float = 0.5,
    censor_rate: float = 0.0,
    seed: int | None = None,
    names: Sequence[str] | None = None,
) -> SurvivalData:
    """Draw durations from a parametric regression model.

    ``beta`` includes the constant first. ``X`` defaults to one Bernoulli(0.4)
    and one standard-normal column. Independent exponential censoring with
    rate ``censor_rate`` (relative to unit time) is applied when positive.
    Ancillaries may vary by spell: pass per-spell arrays to ``ancillary``.
    """
    family = Family(family)
    metric = Metric(metric)
    frailty = Frailty(frailty)
    rng = np.random.default_rng(default_seed() if seed is None else seed)
    if X is None:
        X = np.column_stack([rng.random(n) < 0.4, rng.standard_normal(n)]).astype(float)
    X = np.asarray(X, dtype=float).reshape(n, -1)
    if names is None:
        names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
    eta = beta[0] + X @ np.asarray(beta[1:], dtype=float)
    anc = [np.broadcast_to(np.asarray(a, dtype=float), (n,)) for a in ancillary]
    v = rng.random(n)
    if frailty is Frailty.GAMMA:
        z = rng.gamma(1.0 / theta, theta, size=n)
    elif frailty is Frailty.INVERSE_GAUSSIAN:
        z = rng.wald(1.0, 1.0 / theta, size=n)
    else:
        z = np.ones(n)
    # Conditional survivor S(t|z) = S(t)^z, so S(t) = v^(1/z).
    v = np.clip(v ** (1.0 / z), 1e-300, 1.0)
    if metric is Metric.AFT:
        t = np.exp(eta) * _baseline_quantile(family, v, anc)
    elif metric is Metric.LINK:
        t = np.exp(-eta) * _baseline_quantile(family, v, anc)
    else:
        # PH: S0(t)^exp(eta) = v  =>  S0(t) = v^exp(-eta).
        t = _baseline_quantile(family, v ** np.exp(-eta), anc)
    d = np.ones(n)
    if censor_rate > 0:
        c = rng.exponential(1.0 / censor_rate, size=n)
        d = (t <= c).astype(float)
        t = np.minimum(t, c)
    t = np.clip(t, 1e-300, 1e300)
    return SurvivalData(t, d, X, tuple(names))
