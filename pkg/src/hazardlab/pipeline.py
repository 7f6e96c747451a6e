"""Monthly price ingestion, log returns and spell extraction.

A spell is a maximal run of months with strictly negative log returns.
It ends (event = 1) at the first month whose return is zero or positive;
a run still open at the last observation is right-censored (event = 0).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .stattests import TestResult, welch_t_test

__all__ = [
    "DataError",
    "ParseError",
    "GapError",
    "parse_month",
    "format_month",
    "shiller_date_to_month",
    "PriceSeries",
    "ReturnSeries",
    "RecessionCalendar",
    "SpellRecord",
    "SpellSet",
    "load_series",
    "load_recessions",
    "default_recessions",
    "compute_returns",
    "extract_spells",
    "spell_statistics",
    "quartile_labels",
    "GroupSummary",
    "describe_spells",
    "welch_t_test",
    "group_t_tests",
    "duration_histogram",
    "CubicFit",
    "cubic_trend_fit",
    "SPELL_CSV_HEADER",
]


class DataError(Exception):
    """Input data is missing, malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


class GapError(DataError):
    pass


def parse_month(text: str) -> int:
    """``'YYYY-MM'`` -> integer month index ``12 * year + (month - 1)``."""
    text = text.strip()
    try:
        year_s, month_s = text.split("-")
        year, month = int(year_s), int(month_s)
    except ValueError:
        raise ValueError(f"expected YYYY-MM, got {text!r}") from None
    if not 1 <= month <= 12 or len(year_s) != 4 or len(month_s) != 2:
        raise ValueError(f"expected YYYY-MM, got {text!r}")
    return 12 * year + month - 1


def format_month(index: int) -> str:
    year, month0 = divmod(int(index), 12)
    return f"{year:04d}-{month0 + 1:02d}"


def shiller_date_to_month(value: str | float) -> str:
    """Convert Shiller's ``YYYY.MM`` date column to ``YYYY-MM``.

    The spreadsheet stores October as ``.1`` (a float), so the fractional
    part is read as hundredths: ``1871.1`` is October 1871, ``1871.01`` January.
    """
    v = float(value)
    year = int(math.floor(v))
    month = int(round((v - year) * 100))
    if not 1 <= month <= 12:
        raise ValueError(f"cannot read a month from Shiller date {value!r}")
    return f"{year:04d}-{month:02d}"


@dataclass(frozen=True)
class PriceSeries:
    months: np.ndarray
    real_price: np.ndarray
    long_rate_pct: np.ndarray
    digest: str = ""

    def __len__(self) -> int:
        return len(self.months)

    @property
    def date_range(self) -> tuple[str, str]:
        return format_month(self.months[0]), format_month(self.months[-1])


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns; ``months[i]`` is the month whose price ends return ``r[i]``."""

    months: np.ndarray
    r: np.ndarray
    long_rate_pct: np.ndarray
    digest: str = ""

    def __len__(self) -> int:
        return len(self.months)


@dataclass(frozen=True)
class RecessionCalendar:
    """Sorted, non-overlapping inclusive month intervals."""

    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev_end = None
        for begin, end in self.intervals:
            if end < begin:
                raise DataError(f"recession {format_month(begin)}..{format_month(end)} ends before it begins")
            if prev_end is not None and begin <= prev_end:
                raise DataError(f"recession starting {format_month(begin)} overlaps or is out of order")
            prev_end = end

    def contains(self, month: int) -> bool:
        return any(b <= month <= e for b, e in self.intervals)

    def overlap(self, first: int, last: int) -> int:
        """Number of months of ``[first, last]`` inside a recession."""
        total = 0
        for b, e in self.intervals:
            lo, hi = max(b, first), min(e, last)
            if lo <= hi:
                total += hi - lo + 1
        return total

    def mask(self, months: np.ndarray) -> np.ndarray:
        months = np.asarray(months)
        out = np.zeros(months.shape, dtype=bool)
        for b, e in self.intervals:
            out |= (months >= b) & (months <= e)
        return out


SPELL_CSV_HEADER = ("start", "duration", "event", "recession", "price_decline_pct", "interest_rate_pct")


@dataclass(frozen=True)
class SpellRecord:
    start_month: int
    duration: int
    event: int
    recession: int
    price_decline: float
    interest_rate: float
    recession_months: int = 0

    @property
    def end_month(self) -> int:
        return self.start_month + self.duration - 1

    def covariate(self, name: str) -> float:
        return float(getattr(self, _COVARIATE_FIELDS[name]))


_COVARIATE_FIELDS = {
    "recession": "recession",
    "price_decline": "price_decline",
    "interest_rate": "interest_rate",
}
DEFAULT_COVARIATES = ("recession", "price_decline", "interest_rate")


@dataclass(frozen=True)
class SpellSet:
    spells: tuple[SpellRecord, ...]
    source_digest: str = ""
    date_range: tuple[str, str] = ("", "")
    recession_rule: str = "any"

    def __len__(self) -> int:
        return len(self.spells)

    def __iter__(self):
        return iter(self.spells)

    def __getitem__(self, i):
        return self.spells[i]

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.spells], dtype=float)

    @property
    def events(self) -> np.ndarray:
        return np.array([s.event for s in self.spells], dtype=float)

    @property
    def start_months(self) -> np.ndarray:
        return np.array([s.start_month for s in self.spells], dtype=int)

    def column(self, name: str) -> np.ndarray:
        return np.array([s.covariate(name) for s in self.spells], dtype=float)

    def covariate_matrix(self, names: Sequence[str] = DEFAULT_COVARIATES) -> np.ndarray:
        if not names:
            return np.empty((len(self.spells), 0))
        return np.column_stack([self.column(n) for n in names])

    def subset(self, keep: Iterable[bool] | np.ndarray) -> "SpellSet":
        keep = np.asarray(list(keep) if not isinstance(keep, np.ndarray) else keep, dtype=bool)
        return replace(self, spells=tuple(s for s, k in zip(self.spells, keep) if k))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SPELL_CSV_HEADER)
        for s in self.spells:
            w.writerow(
                [format_month(s.start_month), s.duration, s.event, s.recession, repr(s.price_decline), repr(s.interest_rate)]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path: str | Path) -> "SpellSet":
        path = Path(path)
        spells = []
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != SPELL_CSV_HEADER:
                raise ParseError(path, 1, f"expected header {','.join(SPELL_CSV_HEADER)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    spells.append(
                        SpellRecord(
                            start_month=parse_month(row[0]),
                            duration=int(row[1]),
                            event=int(row[2]),
                            recession=int(row[3]),
                            price_decline=float(row[4]),
                            interest_rate=float(row[5]),
                        )
                    )
                except (ValueError, IndexError) as exc:
                    raise ParseError(path, lineno, str(exc)) from None
        return cls(tuple(spells), source_digest=_digest_file(path))


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_series(path: str | Path) -> PriceSeries:
    """Read a normalized ``date,real_price,long_rate_pct`` CSV.

    Raises
    ------
    ParseError
        Malformed header or row (the message carries the line number).
    GapError
        A missing or duplicated month.
    DataError
        Empty file or a non-positive price.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")
    months, prices, rates = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty price file")
        if [h.strip() for h in header] != ["date", "real_price", "long_rate_pct"]:
            raise ParseError(path, 1, "expected header date,real_price,long_rate_pct")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
            try:
                m = parse_month(row[0])
                p = float(row[1])
                r = float(row[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if not (math.isfinite(p) and p > 0):
                raise DataError(f"{path}:{lineno}: non-positive price {row[1]!r}")
            if months:
                if m == months[-1]:
                    raise GapError(f"{path}:{lineno}: duplicate month {format_month(m)}")
                if m != months[-1] + 1:
                    missing = format_month(months[-1] + 1)
                    raise GapError(f"{path}:{lineno}: gap in series, month {missing} is missing")
            months.append(m)
            prices.append(p)
            rates.append(r)
    if not months:
        raise DataError(f"{path}: no observations")
    return PriceSeries(
        np.array(months, dtype=int),
        np.array(prices, dtype=float),
        np.array(rates, dtype=float),
        digest=_digest_file(path),
    )


def load_recessions(path: str | Path | None = None) -> RecessionCalendar:
    """Read a ``begin,end`` calendar; ``None`` loads the bundled NBER peak-trough months."""
    if path is None:
        text = resources.files("hazardlab.data").joinpath("recessions.csv").read_text(encoding="utf-8")
        source = "<bundled recessions.csv>"
    else:
        path = Path(path)
        if not path.exists():
            raise DataError(f"recession file not found: {path}")
        text = path.read_text(encoding="utf-8")
        source = str(path)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["begin", "end"]:
        raise ParseError(source, 1, "expected header begin,end")
    intervals = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            intervals.append((parse_month(row[0]), parse_month(row[1])))
        except (ValueError, IndexError) as exc:
            raise ParseError(source, lineno, str(exc)) from None
    return RecessionCalendar(tuple(intervals))


def default_recessions() -> RecessionCalendar:
    return load_recessions(None)


def compute_returns(series: PriceSeries) -> ReturnSeries:
    if len(series) < 2:
        raise DataError("need at least two prices to compute returns")
    r = np.diff(np.log(series.real_price))
    return ReturnSeries(series.months[1:].copy(), r, series.long_rate_pct[1:].copy(), digest=series.digest)


_RULES: dict[str, Callable[[int, int], bool]] = {
    "any": lambda overlap, dur: overlap >= 1,
    "majority": lambda overlap, dur: 2 * overlap > dur,
    "all": lambda overlap, dur: overlap == dur,
}


def extract_spells(
    returns: ReturnSeries,
    calendar: RecessionCalendar,
    recession_rule: str = "any",
) -> SpellSet:
    """Turn maximal runs of strictly negative returns into spells.

    ``recession_rule`` decides the recession dummy from the number of
    spell months inside a recession: ``any`` (at least one), ``majority``
    (more than half) or ``all``.
    """
    if len(returns) == 0:
        raise DataError("empty return series")
    if recession_rule not in _RULES:
        raise ValueError(f"recession_rule must be one of {sorted(_RULES)}, got {recession_rule!r}")
    rule = _RULES[recession_rule]
    neg = returns.r < 0.0
    n = len(neg)
    spells = []
    i = 0
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j < n and neg[j]:
            j += 1
        dur = j - i
        first, last = int(returns.months[i]), int(returns.months[j - 1])
        overlap = calendar.overlap(first, last)
        spells.append(
            SpellRecord(
                start_month=first,
                duration=dur,
                event=1 if j < n else 0,
                recession=int(rule(overlap, dur)),
                price_decline=float(np.mean(-100.0 * returns.r[i:j])),
                interest_rate=float(np.mean(returns.long_rate_pct[i:j])),
                recession_months=overlap,
            )
        )
        i = j
    date_range = (format_month(returns.months[0]), format_month(returns.months[-1]))
    return SpellSet(tuple(spells), source_digest=returns.digest, date_range=date_range, recession_rule=recession_rule)


def spell_statistics(returns: ReturnSeries, spells: SpellSet, calendar: RecessionCalendar) -> dict:
    """Headline counts for a spell extraction (decline months, joint recession months, losses)."""
    neg = returns.r < 0
    joint = neg & calendar.mask(returns.months)
    losses = -100.0 * returns.r[neg]
    dur = spells.durations
    worst = int(np.argmax(-returns.r)) if neg.any() else None
    years = len(returns) / 12.0
    return {
        "n_returns": int(len(returns)),
        "n_spells": int(len(spells)),
        "n_censored": int(sum(1 - s.event for s in spells)),
        "spells_per_year": len(spells) / years if years else math.nan,
        "negative_months": int(neg.sum()),
        "joint_decline_recession_months": int(joint.sum()),
        "mean_duration": float(dur.mean()) if len(dur) else math.nan,
        "median_duration": float(np.median(dur)) if len(dur) else math.nan,
        "min_duration": int(dur.min()) if len(dur) else 0,
        "max_duration": int(dur.max()) if len(dur) else 0,
        "mean_monthly_loss_pct": float(losses.mean()) if losses.size else math.nan,
        "mean_spell_price_decline_pct": float(spells.column("price_decline").mean()) if len(spells) else math.nan,
        "max_monthly_loss_pct": float(losses.max()) if losses.size else math.nan,
        "max_loss_month": format_month(returns.months[worst]) if worst is not None else None,
        "recession_spells": int(sum(s.recession for s in spells)),
    }


def quartile_labels(values: np.ndarray) -> np.ndarray:
    """Quartile group 1..4 per value; values equal to a breakpoint go to the lower group."""
    values = np.asarray(values, dtype=float)
    cuts = np.quantile(values, [0.25, 0.5, 0.75])
    return 1 + np.searchsorted(cuts, values, side="left")


@dataclass(frozen=True)
class GroupSummary:
    label: str
    n: int
    mean: float | None
    variance: float | None
    min: int | None
    max: int | None
    histogram: Mapping[int, int] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.n == 0


def _summarize(label: str, durations: np.ndarray) -> GroupSummary:
    if durations.size == 0:
        return GroupSummary(label, 0, None, None, None, None, {})
    values, counts = np.unique(durations.astype(int), return_counts=True)
    return GroupSummary(
        label=label,
        n=int(durations.size),
        mean=float(durations.mean()),
        variance=float(durations.var(ddof=1)) if durations.size > 1 else None,
        min=int(durations.min()),
        max=int(durations.max()),
        histogram={int(v): int(c) for v, c in zip(values, counts)},
    )


def _grouping(spells: SpellSet, grouping: str | Callable[[SpellRecord], str] | None, era_split: str):
    if grouping is None:
        return ["all"] * len(spells), ["all"]
    if callable(grouping):
        labels = [str(grouping(s)) for s in spells]
        return labels, sorted(set(labels))
    if grouping == "recession":
        return ["recession" if s.recession else "no_recession" for s in spells], ["recession", "no_recession"]
    if grouping == "era":
        cut = parse_month(era_split)
        labels = [f"before_{era_split[:4]}" if s.start_month < cut else f"after_{era_split[:4]}" for s in spells]
        return labels, [f"before_{era_split[:4]}", f"after_{era_split[:4]}"]
    if grouping in ("price_quartile", "rate_quartile"):
        col = "price_decline" if grouping == "price_quartile" else "interest_rate"
        q = quartile_labels(spells.column(col))
        return [f"Q{int(v)}" for v in q], ["Q1", "Q2", "Q3", "Q4"]
    raise ValueError(f"unknown grouping {grouping!r}")


def describe_spells(
    spells: SpellSet,
    grouping: str | Callable[[SpellRecord], str] | None = None,
    era_split: str = "1938-01",
) -> dict[str, GroupSummary]:
    """Per-group duration summaries.

    ``grouping`` is ``None`` (one group), ``'recession'``, ``'era'`` (split
    at ``era_split`` by spell start), ``'price_quartile'``, ``'rate_quartile'``
    or a callable mapping a spell to a label. Groups with no spells are
    returned with ``n == 0`` and ``None`` statistics.
    """
    if len(spells) == 0:
        raise DataError("describe_spells needs at least one spell")
    labels, order = _grouping(spells, grouping, era_split)
    dur = spells.durations
    labels_arr = np.array(labels)
    return {lab: _summarize(lab, dur[labels_arr == lab]) for lab in order}


def group_t_tests(spells: SpellSet, grouping: str, era_split: str = "1938-01") -> dict[str, TestResult]:
    """Welch tests between groups: the two halves of a binary split, or Q1 against Q2..Q4."""
    labels, order = _grouping(spells, grouping, era_split)
    labels_arr = np.array(labels)
    dur = spells.durations
    out = {}
    if len(order) == 2:
        out[f"{order[0]}_vs_{order[1]}"] = welch_t_test(dur[labels_arr == order[0]], dur[labels_arr == order[1]])
    else:
        base = order[0]
        for other in order[1:]:
            out[f"{base}_vs_{other}"] = welch_t_test(dur[labels_arr == base], dur[labels_arr == other])
    return out


def duration_histogram(spells: SpellSet | np.ndarray, include_empty: bool = True) -> dict[int, float]:
    """Relative frequency of each integer duration from 1 to the maximum."""
    dur = spells.durations if isinstance(spells, SpellSet) else np.asarray(spells, dtype=float)
    dur = dur.astype(int)
    if dur.size == 0:
        return {}
    values, counts = np.unique(dur, return_counts=True)
    freq = dict(zip(values.tolist(), (counts / dur.size).tolist()))
    if include_empty:
        return {t: freq.get(t, 0.0) for t in range(1, int(dur.max()) + 1)}
    return freq


@dataclass(frozen=True)
class CubicFit:
    coef: tuple[float, float, float, float]
    r2: float

    def __call__(self, t):
        g0, g1, g2, g3 = self.coef
        t = np.asarray(t, dtype=float)
        return g0 + g1 * t + g2 * t**2 + g3 * t**3


def cubic_trend_fit(histogram: Mapping[float, float]) -> CubicFit:
    """Least-squares cubic ``g0 + g1 t + g2 t^2 + g3 t^3`` through (duration, frequency)."""
    if len(histogram) < 5:
        raise ValueError("cubic_trend_fit needs at least 5 distinct durations")
    t = np.array(sorted(histogram), dtype=float)
    y = np.array([histogram[k] for k in sorted(histogram)], dtype=float)
    X = np.vander(t, 4, increasing=True)
    if np.linalg.matrix_rank(X) < 4:
        raise np.linalg.LinAlgError("rank-deficient cubic design")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0
    return CubicFit(tuple(float(c) for c in coef), r2)
