"""Seasonal rank-correlation statistics for gridded daily series.

Seasons follow the climatological month grouping: winter = Dec-Feb,
spring = Mar-May, summer = Jun-Aug, fall = Sep-Nov. Missing results
(constant series, too few pairs) are encoded as NaN, never as 0.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .tensor import DenseTensor3

__all__ = [
    "SEASONS",
    "TimeIndex",
    "SeasonMask",
    "season_masks",
    "spearman",
    "correlation_map",
    "seasonal_acf",
]

SEASONS = ("winter", "spring", "summer", "fall")
_SEASON_MONTHS = {
    "winter": (12, 1, 2),
    "spring": (3, 4, 5),
    "summer": (6, 7, 8),
    "fall": (9, 10, 11),
}

_NOLEAP_MONTH_DAYS = np.array([31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])
_NOLEAP_MONTH_START = np.concatenate(([0], np.cumsum(_NOLEAP_MONTH_DAYS)[:-1]))


class TimeIndex:
    """Daily calendar index spanning ``length`` consecutive days.

    ``calendar`` is either ``"gregorian"`` (proleptic, with leap days) or
    ``"noleap"`` (365-day model calendar, no Feb 29).
    """

    def __init__(self, start: datetime.date, length: int, calendar: str = "gregorian"):
        if isinstance(start, str):
            start = datetime.date.fromisoformat(start)
        if not isinstance(start, datetime.date):
            raise ValueError("start must be a datetime.date or ISO date string")
        if length < 1:
            raise ValueError("length must be >= 1")
        if calendar not in ("gregorian", "noleap"):
            raise ValueError(f"unknown calendar {calendar!r}")
        self.start = start
        self.length = int(length)
        self.calendar = calendar
        if calendar == "gregorian":
            start64 = np.datetime64(start.isoformat(), "D")
            days = start64 + np.arange(self.length)
            month_starts = days.astype("datetime64[M]")
            self.years = month_starts.astype("datetime64[Y]").astype(int) + 1970
            self.months = month_starts.astype(int) % 12 + 1
            self.days = (days - month_starts).astype(int) + 1
        else:
            if start.month == 2 and start.day == 29:
                raise ValueError("noleap calendar has no Feb 29")
            doy0 = _NOLEAP_MONTH_START[start.month - 1] + start.day - 1
            absolute = doy0 + np.arange(self.length)
            self.years = start.year + absolute // 365
            doy = absolute % 365
            self.months = np.searchsorted(_NOLEAP_MONTH_START, doy, side="right")
            self.days = doy - _NOLEAP_MONTH_START[self.months - 1] + 1

    def date_strings(self) -> list[str]:
        """ISO date string for every step, in order."""
        if self.calendar == "gregorian":
            start64 = np.datetime64(self.start.isoformat(), "D")
            return list(np.datetime_as_string(start64 + np.arange(self.length)))
        return [
            f"{y:04d}-{m:02d}-{d:02d}"
            for y, m, d in zip(self.years, self.months, self.days)
        ]

    def __len__(self):
        return self.length

    def __repr__(self):
        return f"TimeIndex(start={self.start.isoformat()}, length={self.length}, calendar={self.calendar!r})"


@dataclass
class SeasonMask:
    season: str
    mask: np.ndarray


def season_masks(time_index: TimeIndex) -> list[SeasonMask]:
    """The four season masks, in SEASONS order. They partition the index."""
    return [
        SeasonMask(name, np.isin(time_index.months, _SEASON_MONTHS[name]))
        for name in SEASONS
    ]


def _ranks(x):
    return rankdata(x, method="average")


def spearman(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of average-ranked data.

    Raises ValueError for unequal lengths, fewer than 3 samples, or a
    constant input.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    if (x == x[0]).all() or (y == y[0]).all():
        raise ValueError("constant input has undefined rank correlation")
    cx = _ranks(x)
    cy = _ranks(y)
    cx -= cx.mean()
    cy -= cy.mean()
    value = float(cx @ cy / np.sqrt((cx @ cx) * (cy @ cy)))
    return min(1.0, max(-1.0, value))


def _season_mask_array(season, length) -> np.ndarray:
    mask = season.mask if isinstance(season, SeasonMask) else np.asarray(season, dtype=bool)
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.size != length:
        raise ValueError(f"season mask length {mask.size} != time length {length}")
    return mask


def correlation_map(t: DenseTensor3, variable: int, season, ref_cell: int) -> np.ndarray:
    """Per-cell Spearman correlation against a reference cell, in-season.

    Returns a length-J vector; the reference entry is 1 and cells whose
    in-season series is constant come back as NaN.
    """
    n_steps, n_cells, n_vars = t.dims
    if not 0 <= variable < n_vars:
        raise ValueError(f"variable index {variable} out of range [0, {n_vars})")
    if not 0 <= ref_cell < n_cells:
        raise ValueError(f"reference cell {ref_cell} out of range [0, {n_cells})")
    mask = _season_mask_array(season, n_steps)
    if mask.sum() < 3:
        raise ValueError("season mask selects fewer than 3 time steps")

    sub = t.data[mask, :, variable]
    ranks = rankdata(sub, axis=0, method="average")
    ranks -= ranks.mean(axis=0, keepdims=True)
    norms = np.sqrt((ranks**2).sum(axis=0))
    out = np.full(n_cells, np.nan)
    ref = ranks[:, ref_cell]
    ref_norm = norms[ref_cell]
    if ref_norm > 0.0:
        ok = norms > 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = ranks[:, ok].T @ ref / (norms[ok] * ref_norm)
        out[ok] = np.clip(vals, -1.0, 1.0)
    out[ref_cell] = 1.0
    return out


def seasonal_acf(
    t: DenseTensor3,
    variable: int,
    cell: int,
    season,
    max_lag: int,
    min_pairs: int = 30,
) -> np.ndarray:
    """Spearman autocorrelation at lags 1..max_lag using pairs whose both
    endpoints fall in the season.

    Lags with fewer than ``min_pairs`` usable pairs, or with a constant
    series, are returned as NaN.
    """
    n_steps, n_cells, n_vars = t.dims
    if not 0 <= variable < n_vars:
        raise ValueError(f"variable index {variable} out of range [0, {n_vars})")
    if not 0 <= cell < n_cells:
        raise ValueError(f"cell {cell} out of range [0, {n_cells})")
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if max_lag >= n_steps:
        raise ValueError("max_lag must be smaller than the series length")
    mask = _season_mask_array(season, n_steps)
    series = t.data[:, cell, variable]

    out = np.full(max_lag, np.nan)
    for lag in range(1, max_lag + 1):
        both = mask[:-lag] & mask[lag:]
        if int(both.sum()) < max(min_pairs, 3):
            continue
        head = series[:-lag][both]
        tail = series[lag:][both]
        try:
            out[lag - 1] = spearman(head, tail)
        except ValueError:
            continue  # constant in-season series: leave the lag missing
    return out
