"""Model specification, parameter vectors and fit results."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from scipy import stats

from ..distributions import Family
from ..pipeline import DEFAULT_COVARIATES, SpellSet

__all__ = [
    "COX",
    "Metric",
    "Frailty",
    "ModelSpec",
    "ParamLayout",
    "ParamVector",
    "FitResult",
    "SurvivalData",
    "survival_data",
]

COX = "cox"


class Metric(str, enum.Enum):
    """Regression metric.

    ``AFT`` scales time by ``exp(-x'b)`` so positive coefficients lengthen
    spells; ``PH`` multiplies the baseline hazard by ``exp(x'b)``; ``LINK``
    sets the log inverse time scale ``ln lambda = x'b``; ``PL`` is the Cox
    partial likelihood.
    """

    AFT = "aft"
    PH = "ph"
    LINK = "link"
    PL = "pl"


class Frailty(str, enum.Enum):
    NONE = "none"
    GAMMA = "gamma"
    INVERSE_GAUSSIAN = "invgauss"


def _coerce_family(family) -> Family | str:
    if isinstance(family, Family):
        return family
    if str(family).lower() == COX:
        return COX
    return Family(str(family).lower())


@dataclass(frozen=True)
class ModelSpec:
    """What to fit.

    Parameters
    ----------
    family : Family or "cox"
    metric : Metric
    frailty : Frailty
        Per-spell multiplicative hazard frailty with unit mean.
    covariates : names of the regressors in the linear predictor.
    intercept : include a constant in the linear predictor (ignored for Cox).
    linked : pairs ``(ancillary name, covariate names)``; the log ancillary
        becomes an intercept plus a linear function of those covariates.
    """

    family: Family | str = Family.LOGNORMAL
    metric: Metric = Metric.AFT
    frailty: Frailty = Frailty.NONE
    covariates: tuple[str, ...] = DEFAULT_COVARIATES
    intercept: bool = True
    linked: tuple[tuple[str, tuple[str, ...]], ...] = ()
    tol: float = 1e-8
    max_iter: int = 100
    robust: bool = False
    ties: str = "efron"

    def __post_init__(self):
        object.__setattr__(self, "family", _coerce_family(self.family))
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "frailty", Frailty(self.frailty))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(
            self, "linked", tuple((str(a), tuple(cs)) for a, cs in self.linked)
        )
        if self.ties not in ("efron", "breslow"):
            raise ValueError(f"ties must be 'efron' or 'breslow', got {self.ties!r}")
        if self.is_cox:
            if self.metric is not Metric.PL:
                raise ValueError("the Cox model uses the partial-likelihood metric")
            if self.frailty is not Frailty.NONE:
                raise ValueError("frailty is not supported for the Cox model")
            if self.linked:
                raise ValueError("the Cox model has no ancillary parameters to link")
            if not self.covariates:
                raise ValueError("the Cox model needs at least one covariate")
        else:
            if self.metric is Metric.PL:
                raise ValueError("partial likelihood applies to the Cox model only")
            if self.family is Family.LOGNORMAL and self.metric is Metric.PH:
                raise ValueError("the log-normal is not closed under proportional hazards; use AFT")
            seen = set()
            for name, _ in self.linked:
                if name not in self.family.ancillary:
                    raise ValueError(f"{name!r} is not an ancillary parameter of {self.family.value}")
                if name in seen:
                    raise ValueError(f"ancillary {name!r} linked twice")
                seen.add(name)
        if not (self.tol > 0 and self.max_iter >= 1):
            raise ValueError("tol must be positive and max_iter at least 1")

    @property
    def is_cox(self) -> bool:
        return self.family == COX

    @property
    def family_name(self) -> str:
        return COX if self.is_cox else self.family.value

    def link_covariates(self, ancillary: str) -> tuple[str, ...]:
        for name, cs in self.linked:
            if name == ancillary:
                return cs
        return ()

    def all_covariates(self) -> tuple[str, ...]:
        """Regressors of the linear predictor followed by any extra link regressors."""
        out = list(self.covariates)
        for _, cs in self.linked:
            out.extend(c for c in cs if c not in out)
        return tuple(out)

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "family": self.family_name,
            "metric": self.metric.value,
            "frailty": self.frailty.value,
            "covariates": list(self.covariates),
            "intercept": bool(self.intercept),
            "linked": [[a, list(cs)] for a, cs in self.linked],
            "tol": self.tol,
            "max_iter": self.max_iter,
            "robust": bool(self.robust),
            "ties": self.ties,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["covariates"] = tuple(d.get("covariates", ()))
        d["linked"] = tuple((a, tuple(cs)) for a, cs in d.get("linked", ()))
        return cls(**d)


@dataclass(frozen=True)
class ParamLayout:
    """Positions of each parameter block inside the flat estimation vector.

    Order: linear-predictor coefficients (constant first), log ancillary
    intercepts, link slopes per ancillary, then ``ln_theta``.
    """

    names: tuple[str, ...]
    beta: slice
    ancillary: tuple[int, ...]
    links: tuple[slice, ...]
    theta: int | None

    @classmethod
    def from_spec(cls, spec: ModelSpec) -> "ParamLayout":
        names: list[str] = []
        if spec.intercept and not spec.is_cox:
            names.append("_cons")
        names.extend(spec.covariates)
        beta = slice(0, len(names))
        anc_names = () if spec.is_cox else spec.family.ancillary
        anc = []
        for a in anc_names:
            anc.append(len(names))
            names.append(a)
        links = []
        for a in anc_names:
            cs = spec.link_covariates(a)
            start = len(names)
            names.extend(f"{a}:{c}" for c in cs)
            links.append(slice(start, len(names)))
        theta = None
        if spec.frailty is not Frailty.NONE:
            theta = len(names)
            names.append("ln_theta")
        return cls(tuple(names), beta, tuple(anc), tuple(links), theta)

    @property
    def size(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class ParamVector:
    """Structured view of the estimation vector; ancillaries are on the log scale."""

    beta: np.ndarray
    ancillary: np.ndarray = field(default_factory=lambda: np.empty(0))
    link: tuple[np.ndarray, ...] = ()
    ln_theta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).copy())
        object.__setattr__(self, "ancillary", np.asarray(self.ancillary, dtype=float).copy())
        object.__setattr__(self, "link", tuple(np.asarray(v, dtype=float).copy() for v in self.link))
        if not np.all(np.isfinite(np.exp(self.ancillary))) or np.any(np.exp(self.ancillary) <= 0):
            raise ValueError("ancillary parameters must be finite on the natural scale")

    @property
    def theta(self) -> float | None:
        return None if self.ln_theta is None else math.exp(self.ln_theta)

    def to_array(self, layout: ParamLayout) -> np.ndarray:
        x = np.zeros(layout.size)
        x[layout.beta] = self.beta
        for j, idx in enumerate(layout.ancillary):
            x[idx] = self.ancillary[j]
        for j, sl in enumerate(layout.links):
            if sl.stop > sl.start:
                x[sl] = self.link[j]
        if layout.theta is not None:
            if self.ln_theta is None:
                raise ValueError("spec has frailty but ln_theta is missing")
            x[layout.theta] = self.ln_theta
        return x

    @classmethod
    def from_array(cls, x: Sequence[float], layout: ParamLayout) -> "ParamVector":
        x = np.asarray(x, dtype=float)
        if x.shape != (layout.size,):
            raise ValueError(f"expected {layout.size} parameters, got shape {x.shape}")
        return cls(
            beta=x[layout.beta],
            ancillary=np.array([x[i] for i in layout.ancillary]),
            link=tuple(x[sl] for sl in layout.links),
            ln_theta=None if layout.theta is None else float(x[layout.theta]),
        )


@dataclass(frozen=True)
class SurvivalData:
    """Durations ``t``, event flags ``d`` and covariate columns ``X`` named by ``names``."""

    t: np.ndarray
    d: np.ndarray
    X: np.ndarray
    names: tuple[str, ...]
    start: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        d = np.asarray(self.d, dtype=float)
        X = np.asarray(self.X, dtype=float).reshape(len(t), -1)
        if t.ndim != 1 or d.shape != t.shape:
            raise ValueError("t and d must be 1-d arrays of equal length")
        if np.any(~np.isfinite(t)) or np.any(t <= 0):
            bad = int(np.flatnonzero(~(np.isfinite(t) & (t > 0)))[0])
            raise ValueError(f"durations must be positive and finite (spell {bad})")
        if not np.all((d == 0) | (d == 1)):
            raise ValueError("event indicators must be 0 or 1")
        if X.shape[1] != len(self.names):
            raise ValueError(f"{X.shape[1]} covariate columns but {len(self.names)} names")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", tuple(self.names))
        if self.start is not None:
            object.__setattr__(self, "start", np.asarray(self.start))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_events(self) -> int:
        return int(self.d.sum())

    def columns(self, names: Sequence[str]) -> np.ndarray:
        idx = []
        for nm in names:
            if nm not in self.names:
                raise KeyError(f"unknown covariate {nm!r}; available: {', '.join(self.names)}")
            idx.append(self.names.index(nm))
        return self.X[:, idx]

    def subset(self, keep) -> "SurvivalData":
        keep = np.asarray(keep)
        return SurvivalData(
            self.t[keep], self.d[keep], self.X[keep], self.names,
            None if self.start is None else self.start[keep],
        )


def survival_data(data: SpellSet | SurvivalData, covariates: Sequence[str]) -> SurvivalData:
    """Normalize a spell set or ready-made arrays to ``SurvivalData``."""
    if isinstance(data, SurvivalData):
        data.columns(covariates)
        return data
    names = tuple(covariates)
    X = data.covariate_matrix(names) if names else np.empty((len(data), 0))
    return SurvivalData(data.durations, data.events, X, names, data.start_months)


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class FitResult:
    """Outcome of a likelihood fit. Immutable once built."""

    spec: ModelSpec
    params: ParamVector
    loglik: float
    cov_model: np.ndarray
    cov_robust: np.ndarray | None
    iterations: int
    converged: bool
    n: int
    n_events: int
    names: tuple[str, ...] = ()
    grad_max: float = float("nan")
    message: str = ""

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout.from_spec(self.spec)

    @property
    def x(self) -> np.ndarray:
        return self.params.to_array(self.layout)

    @property
    def n_params(self) -> int:
        return self.layout.size

    @property
    def cov(self) -> np.ndarray:
        """Robust covariance when available, model-based otherwise."""
        return self.cov_robust if self.cov_robust is not None else self.cov_model

    @property
    def se_model(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov_model), 0, None))

    @property
    def se_robust(self) -> np.ndarray | None:
        if self.cov_robust is None:
            return None
        return np.sqrt(np.clip(np.diag(self.cov_robust), 0, None))

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.n_params

    @property
    def bic(self) -> float:
        return -2.0 * self.loglik + math.log(self.n) * self.n_params

    def coefficient(self, name: str) -> float:
        return float(self.x[self.names.index(name)])

    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.x / self.se

    def table(self) -> list[dict[str, Any]]:
        """One row per estimated parameter: estimate, both SEs, z and two-sided p."""
        x = self.x
        sem = self.se_model
        ser = self.se_robust
        z = self.z_scores()
        rows = []
        for i, nm in enumerate(self.names):
            rows.append(
                {
                    "name": nm,
                    "estimate": float(x[i]),
                    "se_model": float(sem[i]),
                    "se_robust": None if ser is None else float(ser[i]),
                    "z": float(z[i]),
                    "p": float(2.0 * stats.norm.sf(abs(z[i]))) if np.isfinite(z[i]) else float("nan"),
                }
            )
        return rows

    def to_dict(self) -> dict:
        lay = self.layout
        rows = self.table()
        anc_idx = set(lay.ancillary) | {i for sl in lay.links for i in range(sl.start, sl.stop)}
        coefs = [r for i, r in enumerate(rows) if i < lay.beta.stop]
        anc = [
            dict(r, natural=math.exp(r["estimate"]) if i in lay.ancillary else None)
            for i, r in enumerate(rows)
            if i in anc_idx
        ]
        theta = rows[lay.theta] if lay.theta is not None else None
        clean = lambda r: {k: (_json_float(v) if not isinstance(v, str) else v) for k, v in r.items()}
        return {
            "spec": self.spec.to_dict(),
            "coefficients": [clean(r) for r in coefs],
            "ancillary": [clean(r) for r in anc],
            "ln_theta": None if theta is None else clean(theta),
            "loglik": _json_float(self.loglik),
            "aic": _json_float(self.aic),
            "bic": _json_float(self.bic),
            "aic_comparable": not self.spec.is_cox,
            "n": int(self.n),
            "n_events": int(self.n_events),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "cov_model": [[_json_float(v) for v in row] for row in self.cov_model],
            "cov_robust": None
            if self.cov_robust is None
            else [[_json_float(v) for v in row] for row in self.cov_robust],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        spec = ModelSpec.from_dict(d["spec"])
        lay = ParamLayout.from_spec(spec)
        x = np.zeros(lay.size)
        by_name = {r["name"]: r["estimate"] for r in d["coefficients"] + d["ancillary"]}
        if d.get("ln_theta"):
            by_name["ln_theta"] = d["ln_theta"]["estimate"]
        for i, nm in enumerate(lay.names):
            x[i] = by_name[nm]
        nanify = lambda m: np.array([[np.nan if v is None else v for v in row] for row in m], dtype=float)
        return cls(
            spec=spec,
            params=ParamVector.from_array(x, lay),
            loglik=d["loglik"],
            cov_model=nanify(d["cov_model"]),
            cov_robust=None if d.get("cov_robust") is None else nanify(d["cov_robust"]),
            iterations=d["iterations"],
            converged=d["converged"],
            n=d["n"],
            n_events=d["n_events"],
            names=lay.names,
        )
