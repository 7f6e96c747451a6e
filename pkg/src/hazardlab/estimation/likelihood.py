"""Parametric survival log-likelihood and its derivatives.

Each spell's contribution depends on a handful of "core" quantities: the
linear predictor, the log ancillary values and ``ln theta``. Derivatives
with respect to these are taken per spell (analytically for the
exponential PH model, by central differences otherwise) and mapped to the
full parameter vector through the design matrices by the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..distributions import Family, baseline_log_cumhaz_hazard
from ..pipeline import SpellSet
from .model import Frailty, Metric, ModelSpec, ParamLayout, ParamVector, SurvivalData, survival_data

__all__ = [
    "NonFiniteLikelihood",
    "Design",
    "build_design",
    "core_values",
    "log_cumhaz_hazard",
    "frailty_marginal",
    "obs_loglik",
    "loglik",
    "score_hessian",
    "obs_scores",
    "FD_REL_STEP",
]

FD_REL_STEP = 1e-4


class NonFiniteLikelihood(ArithmeticError):
    """A spell's log-likelihood contribution is NaN or infinite."""

    def __init__(self, index: int, value: float):
        super().__init__(f"non-finite log-likelihood contribution {value!r} at spell {index}")
        self.index = index
        self.value = value


@dataclass(frozen=True)
class Design:
    """Per-core design: for core component ``c``, parameters ``idx[c]`` enter via ``Z[c] @ x[idx[c]]``."""

    spec: ModelSpec
    layout: ParamLayout
    t: np.ndarray
    d: np.ndarray
    idx: tuple[np.ndarray, ...]
    Z: tuple[np.ndarray, ...]

    @property
    def n_core(self) -> int:
        return len(self.idx)


def build_design(spec: ModelSpec, data: SpellSet | SurvivalData) -> Design:
    if spec.is_cox:
        raise ValueError("the Cox model has no full likelihood; use the partial-likelihood routines")
    sd = survival_data(data, spec.all_covariates())
    lay = ParamLayout.from_spec(spec)
    n = len(sd)
    cols = [np.ones((n, 1))] if spec.intercept else []
    if spec.covariates:
        cols.append(sd.columns(spec.covariates))
    X1 = np.hstack(cols) if cols else np.zeros((n, 0))
    idx = [np.arange(lay.beta.start, lay.beta.stop)]
    Z = [X1]
    for j, a in enumerate(spec.family.ancillary):
        links = spec.link_covariates(a)
        sl = lay.links[j]
        idx.append(np.concatenate([[lay.ancillary[j]], np.arange(sl.start, sl.stop)]).astype(int))
        Z.append(np.hstack([np.ones((n, 1)), sd.columns(links)]) if links else np.ones((n, 1)))
    if lay.theta is not None:
        idx.append(np.array([lay.theta]))
        Z.append(np.ones((n, 1)))
    return Design(spec, lay, sd.t, sd.d, tuple(idx), tuple(Z))


def core_values(design: Design, x: np.ndarray) -> np.ndarray:
    """Per-spell core matrix, shape ``(n, n_core)``."""
    return np.column_stack([Z @ x[i] for i, Z in zip(design.idx, design.Z)])


def log_cumhaz_hazard(spec: ModelSpec, t: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional (frailty-free) log cumulative hazard and log hazard at ``t``."""
    fam = spec.family
    eta = C[:, 0]
    anc = [C[:, 1 + j] for j in range(len(fam.ancillary))]
    if spec.metric is Metric.AFT:
        log_ch, log_h0 = baseline_log_cumhaz_hazard(fam, t * np.exp(-eta), anc)
        return log_ch, log_h0 - eta
    if spec.metric is Metric.LINK:
        log_ch, log_h0 = baseline_log_cumhaz_hazard(fam, t * np.exp(eta), anc)
        return log_ch, log_h0 + eta
    log_ch0, log_h0 = baseline_log_cumhaz_hazard(fam, t, anc)
    return log_ch0 + eta, log_h0 + eta


_LN2 = float(np.log(2.0))


def frailty_marginal(frailty: Frailty, log_cumhaz: np.ndarray, log_h: np.ndarray, ln_theta):
    """Population cumulative hazard and log hazard after integrating out a unit-mean frailty.

    Gamma: ``ln(1 + theta L) / theta`` and ``h / (1 + theta L)``.
    Inverse Gaussian: ``2 L / (1 + s)`` and ``h / s`` with ``s = sqrt(1 + 2 theta L)``.
    """
    if frailty is Frailty.NONE:
        return np.exp(log_cumhaz), log_h
    if frailty is Frailty.GAMMA:
        l1p = np.logaddexp(0.0, ln_theta + log_cumhaz)
        return l1p / np.exp(ln_theta), log_h - l1p
    log_s = 0.5 * np.logaddexp(0.0, _LN2 + ln_theta + log_cumhaz)
    return np.exp(_LN2 + log_cumhaz - np.logaddexp(0.0, log_s)), log_h - log_s


def _core_loglik(spec: ModelSpec, t: np.ndarray, d: np.ndarray, C: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        log_ch, log_h = log_cumhaz_hazard(spec, t, C)
        ln_theta = C[:, -1] if spec.frailty is not Frailty.NONE else None
        pop_cumhaz, pop_log_h = frailty_marginal(spec.frailty, log_ch, log_h, ln_theta)
        return np.where(d > 0, pop_log_h, 0.0) - pop_cumhaz


def obs_loglik(design: Design, x: np.ndarray, check: bool = True) -> np.ndarray:
    """Per-spell log-likelihood contributions ``d ln h - Lambda`` (frailty-marginal)."""
    ll = _core_loglik(design.spec, design.t, design.d, core_values(design, np.asarray(x, dtype=float)))
    if check:
        bad = np.flatnonzero(~np.isfinite(ll))
        if bad.size:
            raise NonFiniteLikelihood(int(bad[0]), float(ll[bad[0]]))
    return ll


def _as_design(spec, data) -> Design:
    return data if isinstance(data, Design) else build_design(spec, data)


def _as_x(spec: ModelSpec, params) -> np.ndarray:
    if isinstance(params, ParamVector):
        return params.to_array(ParamLayout.from_spec(spec))
    x = np.asarray(params, dtype=float)
    lay = ParamLayout.from_spec(spec)
    if x.shape != (lay.size,):
        raise ValueError(f"{spec.family_name} model expects {lay.size} parameters, got {x.shape}")
    return x


def loglik(spec: ModelSpec, data, params) -> float:
    """Total log-likelihood.

    Raises
    ------
    NonFiniteLikelihood
        naming the first spell whose contribution is not finite.
    """
    return float(obs_loglik(_as_design(spec, data), _as_x(spec, params)).sum())


def _is_exponential_ph(spec: ModelSpec) -> bool:
    return (
        spec.family is Family.EXPONENTIAL
        and spec.metric in (Metric.PH, Metric.LINK)
        and spec.frailty is Frailty.NONE
    )


def core_derivatives(design: Design, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-spell log-likelihood, gradient ``(n, m)`` and Hessian ``(n, m, m)`` in the core."""
    spec, t, d = design.spec, design.t, design.d
    C = core_values(design, x)
    n, m = C.shape
    if _is_exponential_ph(spec):
        w = t * np.exp(C[:, 0])
        ll = d * C[:, 0] - w
        return ll, (d - w)[:, None], (-w)[:, None, None]
    f = lambda CC: _core_loglik(spec, t, d, CC)
    f0 = f(C)
    h = FD_REL_STEP * np.maximum(1.0, np.abs(C))
    G = np.empty((n, m))
    H = np.empty((n, m, m))
    shifted = {}

    def at(steps):
        key = tuple(steps)
        if key not in shifted:
            CC = C.copy()
            for j, s in steps:
                CC[:, j] += s * h[:, j]
            shifted[key] = f(CC)
        return shifted[key]

    for j in range(m):
        p1, m1 = at([(j, 1)]), at([(j, -1)])
        p2, m2 = at([(j, 2)]), at([(j, -2)])
        hj = h[:, j]
        G[:, j] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * hj)
        H[:, j, j] = (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * hj * hj)
    for j in range(m):
        for k in range(j + 1, m):
            pp = at([(j, 1), (k, 1)])
            pm = at([(j, 1), (k, -1)])
            mp = at([(j, -1), (k, 1)])
            mm = at([(j, -1), (k, -1)])
            H[:, j, k] = H[:, k, j] = (pp - pm - mp + mm) / (4.0 * h[:, j] * h[:, k])
    return f0, G, H


def _check(values: np.ndarray):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NonFiniteLikelihood(int(bad[0]), float(values[bad[0]]))


def score_hessian(spec: ModelSpec, data, params) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of the log-likelihood in the full parameter vector."""
    design = _as_design(spec, data)
    x = _as_x(spec, params)
    _, g, H = _full_derivatives(design, x)
    return g, H


def _full_derivatives(design: Design, x: np.ndarray):
    ll, G, Hc = core_derivatives(design, x)
    _check(ll)
    _check(G.sum(axis=1))
    P = design.layout.size
    g = np.zeros(P)
    H = np.zeros((P, P))
    for a, (ia, Za) in enumerate(zip(design.idx, design.Z)):
        g[ia] += Za.T @ G[:, a]
        for b, (ib, Zb) in enumerate(zip(design.idx, design.Z)):
            H[np.ix_(ia, ib)] += Za.T @ (Hc[:, a, b][:, None] * Zb)
    H = 0.5 * (H + H.T)
    return float(ll.sum()), g, H


def obs_scores(spec: ModelSpec, data, params) -> np.ndarray:
    """Per-spell score vectors, shape ``(n, n_params)``; rows sum to the gradient."""
    design = _as_design(spec, data)
    x = _as_x(spec, params)
    ll, G, _ = core_derivatives(design, x)
    _check(ll)
    S = np.zeros((len(design.t), design.layout.size))
    for a, (ia, Za) in enumerate(zip(design.idx, design.Z)):
        S[:, ia] += G[:, a][:, None] * Za
    return S
