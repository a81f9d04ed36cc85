"""Windowed log-normal fits of the volume-price distribution.

Each window's volume-price sample s is fitted by the log-normal density

    p(s) = 1 / (s sqrt(2 pi) theta) * exp(-(log s - phi)^2 / (2 theta^2))

whose maximum-likelihood estimates are the mean (phi) and population standard
deviation (theta) of log s. Gaussian-theory standard errors are attached:
se_phi = theta/sqrt(n), se_theta = theta/sqrt(2n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, InputError
from .ingest import WindowSample

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class LogNormalParams:
    phi: float
    theta: float
    n: int
    se_phi: float
    se_theta: float


@dataclass
class ParamSeries:
    """Per-window fitted parameters, sorted by window index (gaps allowed)."""

    window_index: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    n: np.ndarray
    se_phi: np.ndarray
    se_theta: np.ndarray
    slots_per_day: int
    t_d_offset: int = 3

    def __len__(self) -> int:
        return len(self.window_index)

    def intraday_slot(self) -> np.ndarray:
        if self.slots_per_day <= 0:
            return np.zeros(len(self), dtype=np.int64)
        return self.window_index % self.slots_per_day

    def day_index(self) -> np.ndarray:
        if self.slots_per_day <= 0:
            return np.zeros(len(self), dtype=np.int64)
        return self.window_index // self.slots_per_day

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# slots_per_day={self.slots_per_day} t_d_offset={self.t_d_offset}\n")
            fh.write("window_index,phi,theta,n,se_phi,se_theta\n")
            for i in range(len(self)):
                fh.write(f"{self.window_index[i]},{float(self.phi[i])!r},{float(self.theta[i])!r},"
                         f"{self.n[i]},{float(self.se_phi[i])!r},{float(self.se_theta[i])!r}\n")

    @classmethod
    def from_csv(cls, path) -> "ParamSeries":
        meta = {"slots_per_day": 0, "t_d_offset": 3}
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for token in line[1:].split():
                        if "=" in token:
                            key, _, val = token.partition("=")
                            if key in meta:
                                meta[key] = int(val)
                    continue
                if line.startswith("window_index"):
                    continue
                parts = line.split(",")
                if len(parts) != 6:
                    raise InputError(f"{path}: bad parameter row {line!r}")
                rows.append(parts)
        if not rows:
            raise InputError(f"{path}: empty parameter series")
        arr = np.array(rows)
        return cls(window_index=arr[:, 0].astype(np.int64),
                   phi=arr[:, 1].astype(float), theta=arr[:, 2].astype(float),
                   n=arr[:, 3].astype(np.int64),
                   se_phi=arr[:, 4].astype(float), se_theta=arr[:, 5].astype(float),
                   slots_per_day=meta["slots_per_day"],
                   t_d_offset=meta["t_d_offset"])


def fit_values(values: np.ndarray, theta_floor: float | None = None) -> LogNormalParams:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise FitError(f"need >= 2 values to fit, got {values.size}")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise FitError("all values must be positive and finite")
    logs = np.log(values)
    phi = float(logs.mean())
    theta = float(logs.std())  # population (ML) standard deviation
    if theta == 0.0:
        if theta_floor is None:
            raise FitError("degenerate window: constant values (theta = 0)")
        theta = float(theta_floor)
    n = int(values.size)
    return LogNormalParams(phi=phi, theta=theta, n=n,
                           se_phi=theta / math.sqrt(n),
                           se_theta=theta / math.sqrt(2 * n))


def fit_window(sample: WindowSample, theta_floor: float | None = None) -> LogNormalParams:
    """Maximum-likelihood log-normal fit of one window sample."""
    return fit_values(sample.values, theta_floor=theta_floor)


def fit_all(windows: list[WindowSample], slots_per_day: int, t_d_offset: int = 3,
            theta_floor: float | None = None,
            threads: int = 1) -> tuple[ParamSeries, list[dict]]:
    """Fit every window; degenerate windows go to the skip log.

    Fits are independent, so ``threads > 1`` maps them over a thread pool;
    results are merged in window order and identical at any thread count.
    """

    def one(w: WindowSample):
        try:
            return w.window_index, fit_window(w, theta_floor=theta_floor), None
        except FitError as exc:
            return w.window_index, None, str(exc)

    if threads > 1 and len(windows) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, windows))
    else:
        results = [one(w) for w in windows]

    rows = []
    skip_log: list[dict] = []
    for idx, params, err in results:
        if err is not None:
            skip_log.append({"reason": "degenerate_fit", "window_index": int(idx),
                             "detail": err})
            continue
        rows.append((idx, params))
    if not rows:
        raise FitError("no window produced a valid fit")
    return ParamSeries(
        window_index=np.array([r[0] for r in rows], dtype=np.int64),
        phi=np.array([r[1].phi for r in rows]),
        theta=np.array([r[1].theta for r in rows]),
        n=np.array([r[1].n for r in rows], dtype=np.int64),
        se_phi=np.array([r[1].se_phi for r in rows]),
        se_theta=np.array([r[1].se_theta for r in rows]),
        slots_per_day=slots_per_day,
        t_d_offset=t_d_offset,
    ), skip_log


def lognormal_pdf(s, params: LogNormalParams | None = None, *,
                  phi: float | None = None, theta: float | None = None):
    """Log-normal density at s (scalar or array)."""
    if params is not None:
        phi, theta = params.phi, params.theta
    if phi is None or theta is None:
        raise InputError("provide params or both phi and theta")
    if theta <= 0:
        raise InputError(f"theta must be positive, got {theta}")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise InputError("lognormal_pdf requires s > 0")
    z = (np.log(s_arr) - phi) / theta
    out = np.exp(-0.5 * z * z) / (s_arr * SQRT_2PI * theta)
    return float(out) if np.isscalar(s) else out
