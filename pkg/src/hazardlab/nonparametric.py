"""Kaplan-Meier survivor curves and kernel-smoothed hazards."""

from __future__ import annotations

import csv
import io
import operator
from dataclasses import dataclass
from fractions import Fraction
from itertools import accumulate
from typing import Callable, Iterable

import numpy as np

from .pipeline import SpellRecord, SpellSet

__all__ = ["CurveSample", "kaplan_meier", "km_estimate", "smoothed_hazard", "curves_to_csv", "empirical_survivor"]


@dataclass(frozen=True)
class CurveSample:
    """Tabulated curve with pointwise standard errors.

    For survivor curves from ``kaplan_meier`` the points are the distinct
    event times and the curve is a right-continuous step function equal to
    1 before the first point.
    """

    time: np.ndarray
    value: np.ndarray
    std_err: np.ndarray
    stratum: str = "all"
    step: bool = False

    def __len__(self) -> int:
        return len(self.time)

    def at(self, t):
        """Evaluate the curve. Step curves are right-continuous; others interpolate linearly."""
        t = np.asarray(t, dtype=float)
        if self.step:
            idx = np.searchsorted(self.time, t, side="right") - 1
            vals = np.where(idx >= 0, self.value[np.clip(idx, 0, None)] if len(self.time) else 1.0, 1.0)
            return float(vals) if vals.ndim == 0 else vals
        out = np.interp(t, self.time, self.value)
        return float(out) if np.ndim(out) == 0 else out

    def se_at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.time, t, side="right") - 1
        vals = np.where(idx >= 0, self.std_err[np.clip(idx, 0, None)] if len(self.time) else 0.0, 0.0)
        return float(vals) if vals.ndim == 0 else vals


Stratum = Callable[[SpellRecord], bool] | tuple[str, float] | None


def _select(spells: SpellSet, stratum: Stratum) -> tuple[np.ndarray, np.ndarray, str]:
    if stratum is None:
        keep = np.ones(len(spells), dtype=bool)
        label = "all"
    elif callable(stratum):
        keep = np.array([bool(stratum(s)) for s in spells], dtype=bool)
        label = getattr(stratum, "__name__", "stratum")
    else:
        name, value = stratum
        keep = spells.column(name) == value
        label = f"{name}={value:g}"
    return spells.durations[keep], spells.events[keep], label


def km_estimate(durations, events, stratum: str = "all") -> CurveSample:
    """Product-limit estimate with Greenwood standard errors from raw arrays."""
    t = np.asarray(durations, dtype=float)
    d = np.asarray(events, dtype=float)
    if t.size == 0:
        raise ValueError(f"empty stratum {stratum!r}")
    event_times = np.unique(t[d > 0])
    if event_times.size == 0:
        return CurveSample(np.empty(0), np.empty(0), np.empty(0), stratum, step=True)
    at_risk = np.array([(t >= u).sum() for u in event_times], dtype=float)
    deaths = np.array([((t == u) & (d > 0)).sum() for u in event_times], dtype=float)
    # Exact rational product, rounded once: without censoring this equals
    # the empirical fraction #{t > u} / n to the last bit.
    surv = np.array([float(v) for v in accumulate(
        (Fraction(int(n - k), int(n)) for n, k in zip(at_risk, deaths)), operator.mul)])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(at_risk > deaths, deaths / (at_risk * (at_risk - deaths)), 0.0)
    var = surv**2 * np.cumsum(terms)
    return CurveSample(event_times, surv, np.sqrt(var), stratum, step=True)


def kaplan_meier(spells: SpellSet, stratum: Stratum = None) -> CurveSample:
    """Kaplan-Meier survivor curve of spell durations.

    ``stratum`` may be ``None`` (all spells), a ``(covariate, value)`` pair
    such as ``("recession", 1)``, or a predicate on ``SpellRecord``.
    Censored spells shrink later risk sets without adding events.
    """
    t, d, label = _select(spells, stratum)
    if t.size == 0:
        raise ValueError(f"empty stratum {label!r}")
    return km_estimate(t, d, label)


def empirical_survivor(durations, times) -> np.ndarray:
    """Fraction of durations strictly greater than each time."""
    durations = np.asarray(durations, dtype=float)
    return np.array([(durations > u).mean() for u in np.atleast_1d(times)])


def _epanechnikov(x: np.ndarray) -> np.ndarray:
    return np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x * x), 0.0)


def _left_boundary_kernel(x: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Epanechnikov boundary kernel on [-1, q], 0 <= q < 1: unit mass, zero first moment.
    val = 12.0 / (1.0 + q) ** 4 * (1.0 + x) * ((1.0 - 2.0 * q) * x + (3.0 * q * q - 2.0 * q + 1.0) / 2.0)
    return np.where((x >= -1.0) & (x <= q), val, 0.0)


def smoothed_hazard(
    spells: SpellSet,
    bandwidth: float = 1.5,
    stratum: Stratum = None,
    n_grid: int = 111,
    grid: Iterable[float] | None = None,
) -> CurveSample:
    """Epanechnikov-smoothed Nelson-Aalen hazard.

    The grid defaults to ``n_grid`` uniform points on ``[1, max duration]``.
    Within one bandwidth of the left edge (duration 1) a boundary kernel
    replaces the symmetric one; negative estimates it can produce are set
    to zero.
    """
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth!r}")
    t, d, label = _select(spells, stratum)
    if not (d > 0).any():
        raise ValueError(f"stratum {label!r} has no events")
    event_times = np.unique(t[d > 0])
    at_risk = np.array([(t >= u).sum() for u in event_times], dtype=float)
    deaths = np.array([((t == u) & (d > 0)).sum() for u in event_times], dtype=float)
    incr = deaths / at_risk
    incr_var = deaths / at_risk**2
    t_min = 1.0
    if grid is None:
        grid_arr = np.linspace(t_min, max(float(t.max()), t_min), n_grid)
    else:
        grid_arr = np.asarray(list(grid), dtype=float)
    x = (grid_arr[:, None] - event_times[None, :]) / bandwidth
    q = (grid_arr - t_min) / bandwidth
    kern = np.where(
        (q < 1.0)[:, None],
        _left_boundary_kernel(x, np.minimum(q, 1.0)[:, None]),
        _epanechnikov(x),
    )
    # Boundary kernels take negative values; a hazard cannot.
    haz = np.maximum(kern @ incr / bandwidth, 0.0)
    se = np.sqrt((kern**2) @ incr_var) / bandwidth
    return CurveSample(grid_arr, haz, se, label, step=False)


def curves_to_csv(curves: Iterable[CurveSample], digits: int | None = None) -> str:
    """Export curves as ``time,estimate,std_err,stratum`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "estimate", "std_err", "stratum"])
    fmt = (lambda v: f"{v:.{digits}g}") if digits else repr
    for c in curves:
        for ti, vi, si in zip(c.time, c.value, c.std_err):
            w.writerow([fmt(float(ti)), fmt(float(vi)), fmt(float(si)), c.stratum])
    return buf.getvalue()
