"""Scalar special functions used by the survival distributions.

ln Gamma uses a Lanczos approximation away from the roots at 1 and 2, and
a Taylor series of ln Gamma(1 + z) close to them so that relative accuracy
survives where ln Gamma crosses zero. The regularized incomplete gamma
uses the usual series / continued-fraction split at x = k + 1.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

__all__ = [
    "DomainError",
    "ln_gamma",
    "reg_lower_incomplete_gamma",
    "reg_upper_incomplete_gamma",
    "log_reg_upper_incomplete_gamma",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "EULER_GAMMA",
]

EULER_GAMMA = 0.57721566490153286061


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _zeta_table(n_max: int) -> list[float]:
    # Euler-Maclaurin tail after N terms; exact values for n = 2, 3.
    N = 40
    table = [math.nan, math.nan, math.pi**2 / 6.0, 1.2020569031595942854]
    for n in range(4, n_max + 1):
        s = math.fsum(k ** (-n) for k in range(1, N))
        s += N ** (-n) / 2.0 + N ** (1 - n) / (n - 1) + n * N ** (-n - 1) / 12.0
        s -= n * (n + 1) * (n + 2) * N ** (-n - 3) / 720.0
        table.append(s)
    return table


_ZETA = _zeta_table(64)


def _ln_gamma_1p(z: float) -> float:
    """ln Gamma(1 + z) for |z| <= 0.5 by its Taylor series."""
    total = -EULER_GAMMA * z
    zn = -z
    for n in range(2, 65):
        zn *= -z
        term = _ZETA[n] * zn / n
        total += term
        if abs(term) < 1e-18 * abs(total):
            break
    return total


def _ln_gamma_lanczos(k: float) -> float:
    z = k - 1.0
    a = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        a += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(a)


def ln_gamma(k: float) -> float:
    """Natural log of the gamma function for real ``k > 0``."""
    k = float(k)
    if not math.isfinite(k) or k <= 0.0:
        raise DomainError(f"ln_gamma requires a finite positive argument, got {k!r}")
    if k < 0.5:
        return _ln_gamma_1p(k) - math.log(k)
    if k < 1.5:
        return _ln_gamma_1p(k - 1.0)
    if k < 2.5:
        return _ln_gamma_1p(k - 2.0) + math.log1p(k - 2.0)
    return _ln_gamma_lanczos(k)


def _check_gamma_args(k: float, x: float) -> tuple[float, float]:
    k = float(k)
    x = float(x)
    if not math.isfinite(k) or k <= 0.0:
        raise DomainError(f"shape must be finite and positive, got {k!r}")
    if math.isnan(x) or x < 0.0:
        raise DomainError(f"argument must be non-negative, got {x!r}")
    return k, x


_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


def _lower_series(k: float, x: float) -> float:
    # P(k, x) = x^k e^{-x} / Gamma(k+1) * sum_n x^n / ((k+1)...(k+n))
    term = 1.0
    total = 1.0
    a = k
    for _ in range(_MAX_ITER):
        a += 1.0
        term *= x / a
        total += term
        if term < total * _EPS:
            break
    log_pref = -x + k * math.log(x) - ln_gamma(k + 1.0)
    return total * math.exp(log_pref)


def _log_upper_cf(k: float, x: float) -> float:
    """log Q(k, x) by the modified Lentz continued fraction (x >= k + 1)."""
    b = x + 1.0 - k
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - k)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return -x + k * math.log(x) - ln_gamma(k) + math.log(h)


def reg_lower_incomplete_gamma(k: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(k, x) = gamma(x, k) / Gamma(k)``."""
    k, x = _check_gamma_args(k, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < k + 1.0:
        return min(1.0, _lower_series(k, x))
    return -math.expm1(_log_upper_cf(k, x))


def reg_upper_incomplete_gamma(k: float, x: float) -> float:
    """``Q(k, x) = 1 - P(k, x)``, computed without cancellation in the upper tail."""
    k, x = _check_gamma_args(k, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < k + 1.0:
        return max(0.0, 1.0 - _lower_series(k, x))
    return math.exp(_log_upper_cf(k, x))


def log_reg_upper_incomplete_gamma(k: float, x: float) -> float:
    """``ln Q(k, x)``; stays finite far into the upper tail where Q underflows."""
    k, x = _check_gamma_args(k, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    if x < k + 1.0:
        return math.log1p(-min(1.0, _lower_series(k, x)))
    return _log_upper_cf(k, x)


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def std_normal_cdf(z: float) -> float:
    z = float(z)
    if math.isnan(z):
        raise DomainError("std_normal_cdf got NaN")
    return 0.5 * math.erfc(-z / _SQRT2)


def std_normal_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * float(z) ** 2)


def std_normal_quantile(p):
    """Inverse standard-normal CDF; accepts scalars or arrays."""
    out = ndtri(np.asarray(p, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def v_ln_gamma(k) -> np.ndarray:
    """Array ``ln_gamma``; evaluates each distinct argument once."""
    k = np.asarray(k, dtype=float)
    uniq, inv = np.unique(k, return_inverse=True)
    return np.array([ln_gamma(v) for v in uniq])[inv].reshape(k.shape)


def _v_lower_series(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    term = np.ones_like(x)
    total = np.ones_like(x)
    a = k.copy()
    active = np.ones(x.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        a = a + 1.0
        term = np.where(active, term * x / a, term)
        total = np.where(active, total + term, total)
        active &= ~(term < total * _EPS)
        if not active.any():
            break
    log_pref = -x + k * np.log(x) - v_ln_gamma(k + 1.0)
    return total * np.exp(log_pref)


def _v_log_upper_cf(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    b = x + 1.0 - k
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, _MAX_ITER):
        an = -i * (i - k)
        b = b + 2.0
        dn = an * d + b
        dn = np.where(np.abs(dn) < _TINY, _TINY, dn)
        cn = b + an / c
        cn = np.where(np.abs(cn) < _TINY, _TINY, cn)
        dn = 1.0 / dn
        delta = dn * cn
        d = np.where(active, dn, d)
        c = np.where(active, cn, c)
        h = np.where(active, h * delta, h)
        active &= ~(np.abs(delta - 1.0) < _EPS)
        if not active.any():
            break
    return -x + k * np.log(x) - v_ln_gamma(k) + np.log(h)


def v_log_reg_upper_incomplete_gamma(k, x) -> np.ndarray:
    """Array ``log_reg_upper_incomplete_gamma`` with the same series / fraction split."""
    k, x = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(x, dtype=float))
    if not np.all(np.isfinite(k) & (k > 0)):
        raise DomainError("shape must be finite and positive")
    if np.any(np.isnan(x) | (x < 0)):
        raise DomainError("argument must be non-negative")
    out = np.zeros(k.shape)
    out[np.isinf(x)] = -np.inf
    finite = (x > 0) & np.isfinite(x)
    ser = finite & (x < k + 1.0)
    cf = finite & ~ser
    if ser.any():
        out[ser] = np.log1p(-np.minimum(1.0, _v_lower_series(k[ser], x[ser])))
    if cf.any():
        out[cf] = _v_log_upper_cf(k[cf], x[cf])
    return out

