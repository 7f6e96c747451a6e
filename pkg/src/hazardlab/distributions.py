"""Duration distributions: the generalized gamma family and its nested
cases, the log-normal, and the generalized extreme-value (GEV) law used
for the log-time parameterization.

Scalar functions take natural-scale parameter records. The vectorized
``baseline_log_sf_hazard`` works on unit-scale baselines with ancillary
parameters on the log scale and is what the likelihood code calls.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from .special import (
    DomainError,
    EULER_GAMMA,
    ln_gamma,
    log_reg_upper_incomplete_gamma,
    reg_upper_incomplete_gamma,
    std_normal_cdf,
    std_normal_pdf,
    v_ln_gamma,
    v_log_reg_upper_incomplete_gamma,
)

__all__ = [
    "Family",
    "GGParams",
    "LogNormalParams",
    "GEVParams",
    "EVParams",
    "gg_density",
    "gg_survivor",
    "gg_hazard",
    "gg_cumhazard",
    "gg_moment",
    "gg_mean",
    "gg_variance",
    "lognormal_sfh",
    "gev_cdf_pdf",
    "gev_moments",
    "ev_link",
    "gg_from_ev",
    "ev_log_density",
    "baseline_log_sf_hazard",
    "baseline_log_cumhaz_hazard",
]


class Family(str, enum.Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    GAMMA = "gamma"
    GENERALIZED_GAMMA = "gengamma"
    LOGNORMAL = "lognormal"

    @property
    def ancillary(self) -> tuple[str, ...]:
        """Names of the log-scale ancillary parameters, in estimation order."""
        return _ANCILLARY[self]


_ANCILLARY = {
    Family.EXPONENTIAL: (),
    Family.WEIBULL: ("ln_p",),
    Family.GAMMA: ("ln_k",),
    Family.GENERALIZED_GAMMA: ("ln_p", "ln_k"),
    Family.LOGNORMAL: ("ln_sigma",),
}


@dataclass(frozen=True)
class GGParams:
    """Generalized gamma with inverse time scale ``lam``, power ``p``, shape ``k``."""

    lam: float
    p: float
    k: float

    def __post_init__(self):
        for name in ("lam", "p", "k"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"GGParams.{name} must be finite and positive, got {v!r}")


@dataclass(frozen=True)
class LogNormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")


@dataclass(frozen=True)
class GEVParams:
    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")


@dataclass(frozen=True)
class EVParams:
    """Log-time parameters: ``ln T = alpha + sigma * W`` with W standardized shape ``k``."""

    alpha: float
    sigma: float
    k: float


def _check_t(t: float, allow_zero: bool = False) -> float:
    t = float(t)
    if math.isnan(t) or t < 0 or (t == 0 and not allow_zero):
        raise DomainError(f"duration must be {'non-negative' if allow_zero else 'positive'}, got {t!r}")
    return t


def _gg_log_density(t: float, params: GGParams) -> float:
    lam, p, k = params.lam, params.p, params.k
    log_lt = math.log(lam * t)
    return math.log(lam * p) + (p * k - 1.0) * log_lt - math.exp(p * log_lt) - ln_gamma(k)


def gg_density(t: float, params: GGParams) -> float:
    """Generalized gamma density ``lam p (lam t)^(pk-1) exp(-(lam t)^p) / Gamma(k)``."""
    t = _check_t(t)
    return math.exp(_gg_log_density(t, params))


def gg_survivor(t: float, params: GGParams) -> float:
    t = _check_t(t, allow_zero=True)
    if t == 0.0:
        return 1.0
    return reg_upper_incomplete_gamma(params.k, (params.lam * t) ** params.p)


def gg_cumhazard(t: float, params: GGParams) -> float:
    t = _check_t(t, allow_zero=True)
    if t == 0.0:
        return 0.0
    return -log_reg_upper_incomplete_gamma(params.k, (params.lam * t) ** params.p)


def gg_hazard(t: float, params: GGParams) -> float:
    """Hazard ``f / S``, evaluated as ``exp(ln f - ln S)`` so deep tails stay finite."""
    t = _check_t(t)
    log_s = log_reg_upper_incomplete_gamma(params.k, (params.lam * t) ** params.p)
    return math.exp(_gg_log_density(t, params) - log_s)


def gg_moment(r: int, params: GGParams) -> float:
    """Raw moment ``E(T^r) = Gamma(k + r/p) / (lam^r Gamma(k))``."""
    if r <= 0 or int(r) != r:
        raise DomainError(f"moment order must be a positive integer, got {r!r}")
    arg = params.k + r / params.p
    log_m = -r * math.log(params.lam) + ln_gamma(arg) - ln_gamma(params.k)
    if log_m > 709.0:
        raise OverflowError(f"moment of order {r} overflows (log value {log_m:.1f})")
    return math.exp(log_m)


def gg_mean(params: GGParams) -> float:
    return gg_moment(1, params)


def gg_variance(params: GGParams) -> float:
    m1 = gg_moment(1, params)
    return gg_moment(2, params) - m1 * m1


def lognormal_sfh(t: float, params: LogNormalParams) -> tuple[float, float, float]:
    """Survivor, density and hazard of the log-normal at ``t``."""
    t = _check_t(t)
    w = (math.log(t) - params.mu) / params.sigma
    surv = std_normal_cdf(-w)
    dens = std_normal_pdf(w) / (t * params.sigma)
    log_h = -0.5 * w * w - 0.5 * math.log(2 * math.pi) - math.log(t * params.sigma) - float(log_ndtr(-w))
    return surv, dens, math.exp(log_h)


def gev_cdf_pdf(x: float, params: GEVParams) -> tuple[float, float]:
    """GEV distribution and density; the Gumbel form is used when ``xi == 0``.

    Outside the support the CDF is 0 (below a Frechet lower bound) or 1
    (above a reversed-Weibull upper bound) and the density is 0.
    """
    mu, sigma, xi = params.mu, params.sigma, params.xi
    s = (float(x) - mu) / sigma
    if xi == 0.0:
        tx = math.exp(-s)
        return math.exp(-tx), tx * math.exp(-tx) / sigma
    arg = 1.0 + xi * s
    if arg <= 0.0:
        return (0.0, 0.0) if xi > 0 else (1.0, 0.0)
    tx = arg ** (-1.0 / xi)
    cdf = math.exp(-tx)
    pdf = arg ** (-1.0 / xi - 1.0) * cdf / sigma
    return cdf, pdf


def gev_moments(params: GEVParams) -> tuple[float, float]:
    """Mean and variance; ``math.inf`` marks a divergent moment."""
    mu, sigma, xi = params.mu, params.sigma, params.xi
    if xi == 0.0:
        return mu + sigma * EULER_GAMMA, (sigma * math.pi) ** 2 / 6.0
    if xi >= 1.0:
        mean = math.inf
    else:
        g1 = math.exp(ln_gamma(1.0 - xi))
        mean = mu + sigma * (g1 - 1.0) / xi
    if xi >= 0.5:
        var = math.inf
    else:
        g1 = math.exp(ln_gamma(1.0 - xi))
        g2 = math.exp(ln_gamma(1.0 - 2.0 * xi))
        var = (sigma / xi) ** 2 * (g2 - g1 * g1)
    return mean, var


def ev_link(params: GGParams) -> EVParams:
    """Map GG(lam, p, k) to the log-time parameters (alpha, sigma, k)."""
    return EVParams(alpha=-math.log(params.lam), sigma=1.0 / params.p, k=params.k)


def gg_from_ev(ev: EVParams) -> GGParams:
    return GGParams(lam=math.exp(-ev.alpha), p=1.0 / ev.sigma, k=ev.k)


def ev_log_density(z: float, ev: EVParams) -> float:
    """Log-density of ``Z = ln T``: ``exp(k w - e^w) / (sigma Gamma(k))`` with ``w = (z - alpha)/sigma``."""
    w = (z - ev.alpha) / ev.sigma
    return ev.k * w - math.exp(w) - ln_gamma(ev.k) - math.log(ev.sigma)


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def baseline_log_sf_hazard(
    family: Family, u: np.ndarray, anc: Sequence[np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Log survivor and log hazard of the unit-scale baseline at ``u > 0``.

    ``anc`` holds the log-scale ancillary values (broadcastable with ``u``)
    in the order given by ``family.ancillary``.
    """
    u = np.asarray(u, dtype=float)
    log_u = np.log(u)
    if family is Family.EXPONENTIAL:
        return -u, np.zeros_like(u)
    if family is Family.WEIBULL:
        ln_p = np.asarray(anc[0], dtype=float)
        p = np.exp(ln_p)
        return -np.exp(p * log_u), ln_p + (p - 1.0) * log_u
    if family is Family.LOGNORMAL:
        ln_sigma = np.asarray(anc[0], dtype=float)
        w = log_u / np.exp(ln_sigma)
        log_s = log_ndtr(-w)
        log_f = -0.5 * w * w - _LOG_SQRT_2PI - log_u - ln_sigma
        return log_s, log_f - log_s
    if family is Family.GAMMA:
        ln_p = np.zeros_like(u)
        ln_k = np.asarray(anc[0], dtype=float)
    elif family is Family.GENERALIZED_GAMMA:
        ln_p = np.asarray(anc[0], dtype=float)
        ln_k = np.asarray(anc[1], dtype=float)
    else:  # pragma: no cover
        raise ValueError(f"unknown family {family!r}")
    p = np.exp(ln_p)
    k = np.exp(ln_k)
    z = np.exp(p * log_u)
    p, k, z, ln_p, log_u = np.broadcast_arrays(p, k, z, ln_p, log_u)
    log_s = v_log_reg_upper_incomplete_gamma(k, z)
    log_f = ln_p + (p * k - 1.0) * log_u - z - v_ln_gamma(k)
    return log_s, log_f - log_s


def baseline_log_cumhaz_hazard(
    family: Family, u: np.ndarray, anc: Sequence[np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Log cumulative hazard and log hazard of the unit-scale baseline.

    Exponential and Weibull use closed forms so that very large cumulative
    hazards stay representable on the log scale.
    """
    u = np.asarray(u, dtype=float)
    log_u = np.log(u)
    if family is Family.EXPONENTIAL:
        return log_u, np.zeros_like(u)
    if family is Family.WEIBULL:
        ln_p = np.asarray(anc[0], dtype=float)
        p = np.exp(ln_p)
        return p * log_u, ln_p + (p - 1.0) * log_u
    log_s, log_h = baseline_log_sf_hazard(family, u, anc)
    with np.errstate(divide="ignore"):
        return np.log(-log_s), log_h
