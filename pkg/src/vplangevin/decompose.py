"""Decomposition of parameter series into daily patterns and fluctuations.

Each fitted parameter splits additively into an average intraday pattern and
the residual fluctuations around it. The pattern is either the global mean
per intraday slot or a 20-trading-day moving mean (a per-day family); the
global pattern is the one summarised by the cubic model in centred intraday
time t_d.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DecomposeError, InputError
from .ingest import clip_outliers
from .lognormal import ParamSeries
from .surfaces import _weighted_lstsq

GLOBAL_MEAN = "global_mean"
MOVING_MEAN = "moving_mean"


@dataclass
class DailyPattern:
    """Average intraday pattern; defined on trading slots, zero off-hours."""

    slot_means: np.ndarray                 # global per-slot means (NaN = unobserved)
    method: str
    slots_per_day: int
    t_d_offset: int
    window_days: int | None = None
    days: np.ndarray | None = None         # day indices, moving_mean only
    day_means: np.ndarray | None = None    # (n_days, n_slots), moving_mean only

    def value(self, day_idx: np.ndarray, slot: np.ndarray) -> np.ndarray:
        """Pattern value for (day, slot) pairs; moving mode is day-specific."""
        slot = np.asarray(slot, dtype=np.int64)
        if self.method == GLOBAL_MEAN:
            return self.slot_means[slot]
        pos = np.searchsorted(self.days, day_idx)
        pos = np.clip(pos, 0, len(self.days) - 1)
        if np.any(self.days[pos] != day_idx):
            raise DecomposeError("pattern does not cover every day in the series")
        return self.day_means[pos, slot]


@dataclass
class CubicFit:
    a: float
    b: float
    c: float
    d: float
    r_squared: float
    stderr: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __call__(self, t_d):
        t = np.asarray(t_d, dtype=float)
        return self.a * t**3 + self.b * t**2 + self.c * t + self.d

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d,
                "r2": self.r_squared}


@dataclass
class FluctuationSeries:
    window_index: np.ndarray
    phi_f: np.ndarray
    theta_f: np.ndarray
    slots_per_day: int

    def __len__(self) -> int:
        return len(self.window_index)

    def day_index(self) -> np.ndarray:
        if self.slots_per_day <= 0:
            return np.zeros(len(self), dtype=np.int64)
        return self.window_index // self.slots_per_day

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# slots_per_day={self.slots_per_day}\n")
            fh.write("window_index,phi_f,theta_f\n")
            for i in range(len(self)):
                fh.write(f"{self.window_index[i]},{float(self.phi_f[i])!r},{float(self.theta_f[i])!r}\n")

    @classmethod
    def from_csv(cls, path) -> "FluctuationSeries":
        spd = 0
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for token in line[1:].split():
                        if token.startswith("slots_per_day="):
                            spd = int(token.split("=", 1)[1])
                    continue
                if line.startswith("window_index"):
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise InputError(f"{path}: bad fluctuation row {line!r}")
                rows.append(parts)
        if not rows:
            raise InputError(f"{path}: empty fluctuation series")
        arr = np.array(rows)
        return cls(window_index=arr[:, 0].astype(np.int64),
                   phi_f=arr[:, 1].astype(float),
                   theta_f=arr[:, 2].astype(float),
                   slots_per_day=spd)


def _day_slot_matrix(series: ParamSeries, values: np.ndarray):
    """Arrange a per-window value array as (day, slot) with NaN gaps."""
    if series.slots_per_day <= 0:
        raise DecomposeError("series has no intraday structure (slots_per_day <= 0)")
    days = np.unique(series.day_index())
    mat = np.full((len(days), series.slots_per_day), np.nan)
    row = np.searchsorted(days, series.day_index())
    mat[row, series.intraday_slot()] = values
    return days, mat


def daily_pattern(series: ParamSeries, method: str = GLOBAL_MEAN,
                  window_days: int = 20, trailing: bool = False,
                  ) -> tuple[DailyPattern, DailyPattern]:
    """Average daily pattern of (phi, theta).

    ``global_mean``: per-slot mean over all trading days. ``moving_mean``:
    per-slot mean over the ``window_days`` trading days around each day
    (centred unless ``trailing``), truncated at the series edges, returned as
    a per-day family.
    """
    if method not in (GLOBAL_MEAN, MOVING_MEAN):
        raise InputError(f"unknown pattern method {method!r}")
    out = []
    for values in (series.phi, series.theta):
        days, mat = _day_slot_matrix(series, values)
        if method == GLOBAL_MEAN:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="Mean of empty slice")
                slot_means = np.nanmean(mat, axis=0)
            out.append(DailyPattern(slot_means=slot_means, method=method,
                                    slots_per_day=series.slots_per_day,
                                    t_d_offset=series.t_d_offset))
        else:
            if len(days) < window_days:
                raise DecomposeError(
                    f"moving_mean needs >= {window_days} trading days, have {len(days)}")
            day_means = np.empty_like(mat)
            half = window_days // 2
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="Mean of empty slice")
                for i in range(len(days)):
                    if trailing:
                        lo, hi = max(0, i - window_days + 1), i + 1
                    else:
                        lo, hi = max(0, i - half), min(len(days), i - half + window_days)
                    day_means[i] = np.nanmean(mat[lo:hi], axis=0)
                slot_means = np.nanmean(mat, axis=0)
            out.append(DailyPattern(slot_means=slot_means, method=method,
                                    slots_per_day=series.slots_per_day,
                                    t_d_offset=series.t_d_offset,
                                    window_days=window_days, days=days,
                                    day_means=day_means))
    return out[0], out[1]


def fit_cubic(pattern: DailyPattern) -> CubicFit:
    """Least-squares cubic in centred intraday time t_d of the global pattern.

    A constant pattern fits exactly (a=b=c=0) and reports r^2 = 1 by
    convention.
    """
    finite = np.isfinite(pattern.slot_means)
    if finite.sum() < 4:
        raise DecomposeError(f"cubic fit needs >= 4 slots, have {int(finite.sum())}")
    slots = np.flatnonzero(finite)
    t_d = (pattern.t_d_offset + slots).astype(float)
    y = pattern.slot_means[finite]
    design = np.column_stack([t_d**3, t_d**2, t_d, np.ones_like(t_d)])
    coef, stderr, r2 = _weighted_lstsq(design, y, np.ones_like(y))
    return CubicFit(a=float(coef[0]), b=float(coef[1]), c=float(coef[2]),
                    d=float(coef[3]), r_squared=float(r2), stderr=stderr)


def detrend(series: ParamSeries, patterns: tuple[DailyPattern, DailyPattern],
            sigma: float = 5.0) -> tuple[FluctuationSeries, dict]:
    """Subtract the daily pattern, then clip outliers per component.

    An entry is dropped when either component falls outside its
    ``mean +- sigma * std`` band, keeping the (phi', theta') pairs aligned.
    Returns the fluctuation series and a small info dict.
    """
    pat_phi, pat_theta = patterns
    day = series.day_index()
    slot = series.intraday_slot()
    base_phi = pat_phi.value(day, slot)
    base_theta = pat_theta.value(day, slot)
    if np.any(~np.isfinite(base_phi)) or np.any(~np.isfinite(base_theta)):
        raise DecomposeError("pattern is undefined on a slot present in the series")
    phi_f = series.phi - base_phi
    theta_f = series.theta - base_theta
    clip_phi = clip_outliers(phi_f, sigma)
    clip_theta = clip_outliers(theta_f, sigma)
    keep = clip_phi.mask & clip_theta.mask
    fl = FluctuationSeries(window_index=series.window_index[keep],
                           phi_f=phi_f[keep], theta_f=theta_f[keep],
                           slots_per_day=series.slots_per_day)
    info = {"n_clipped_phi": clip_phi.n_removed,
            "n_clipped_theta": clip_theta.n_removed,
            "n_kept": int(keep.sum())}
    return fl, info
