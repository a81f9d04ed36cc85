"""Reconstruction of the non-stationary volume-price moments.

The log-normal moments have the closed form

    F_n(phi, theta) = exp(n phi + n^2 theta^2 / 2),

so a parameter series maps directly to an n-th moment series. Alternatively
the moment evolves by its own Ito-expanded stochastic equation

    dF = A_n dt + B_n dW1 + C_n dW2,

whose coefficients follow from the partial derivatives of F_n and the drift
and noise surfaces of the parameter system; integrating it with the *same*
Wiener increments as the parameter path must track F_n along that path up to
discretisation error, which the test suite exercises as an internal
consistency theorem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, MomentOverflowError
from .lognormal import ParamSeries
from .sde import SimConfig, SimPath, simulate_with_moment
from .surfaces import CoeffSurfaces

_MAX_EXP = 700.0

SOURCES = ("empirical", "model_direct", "model_ito")


def f_n(phi, theta, n: int):
    """Closed-form n-th moment of the log-normal distribution."""
    if n < 1:
        raise InputError(f"moment order must be >= 1, got {n}")
    phi_arr = np.asarray(phi, dtype=float)
    theta_arr = np.asarray(theta, dtype=float)
    arg = n * phi_arr + 0.5 * n * n * theta_arr * theta_arr
    if np.any(arg > _MAX_EXP):
        i = int(np.argmax(arg))
        bad_phi = float(phi_arr.ravel()[i] if phi_arr.ndim else phi_arr)
        bad_theta = float(theta_arr.ravel()[i] if theta_arr.ndim else theta_arr)
        raise MomentOverflowError(
            f"moment overflow: n={n}, phi={bad_phi:.6g}, theta={bad_theta:.6g}")
    out = np.exp(arg)
    return float(out) if np.isscalar(phi) and np.isscalar(theta) else out


@dataclass
class MomentSeries:
    order: int
    window_index: np.ndarray
    values: np.ndarray
    source: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise InputError(f"unknown moment source {self.source!r}")

    def __len__(self) -> int:
        return len(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("window_index,n,value,source\n")
            for i in range(len(self)):
                fh.write(f"{self.window_index[i]},{self.order},"
                         f"{float(self.values[i])!r},{self.source}\n")


def empirical_moments(series: ParamSeries, n: int) -> MomentSeries:
    """Moment series from the fitted parameters: F_n(phi_t, theta_t)."""
    return MomentSeries(order=n, window_index=series.window_index.copy(),
                        values=f_n(series.phi, series.theta, n),
                        source="empirical")


def recompose(patterns, fl) -> ParamSeries:
    """Parameter series rebuilt as pattern + fluctuations."""
    pat_phi, pat_theta = patterns
    day = fl.day_index()
    slot = (fl.window_index % fl.slots_per_day if fl.slots_per_day > 0
            else np.zeros(len(fl), dtype=np.int64))
    phi = pat_phi.value(day, slot) + fl.phi_f
    theta = pat_theta.value(day, slot) + fl.theta_f
    n = np.ones(len(fl), dtype=np.int64)
    return ParamSeries(window_index=fl.window_index.copy(), phi=phi, theta=theta,
                       n=n, se_phi=np.zeros(len(fl)), se_theta=np.zeros(len(fl)),
                       slots_per_day=fl.slots_per_day,
                       t_d_offset=pat_phi.t_d_offset)


@dataclass
class ItoCoefficients:
    """Evaluators for the moment-equation coefficients A_n, B_n, C_n."""

    surfaces: CoeffSurfaces
    order: int

    def _parts(self, phi, theta):
        fn = f_n(phi, theta, self.order)
        n = float(self.order)
        theta_arr = np.asarray(theta, dtype=float)
        dfp = n * fn
        dft = n * n * theta_arr * fn
        d2fpp = n * n * fn
        d2ftt = n * n * fn * (1.0 + n * n * theta_arr**2)
        d2fpt = n**3 * theta_arr * fn
        g = self.surfaces.g_matrix(phi, theta) * self.surfaces.noise_scale()
        g11 = g[..., 0, 0]
        g12 = g[..., 0, 1]
        g21 = g[..., 1, 0]
        g22 = g[..., 1, 1]
        return fn, dfp, dft, d2fpp, d2ftt, d2fpt, g11, g12, g21, g22

    def a_n(self, phi, theta):
        _, dfp, dft, d2fpp, d2ftt, d2fpt, g11, g12, g21, g22 = self._parts(phi, theta)
        drift = self.surfaces.drift(phi, theta)
        h1 = drift[..., 0]
        h2 = drift[..., 1]
        return (dfp * h1 + dft * h2
                + d2fpt * (g11 * g21 + g12 * g22)
                + 0.5 * d2fpp * (g11 * g11 + g12 * g12)
                + 0.5 * d2ftt * (g21 * g21 + g22 * g22))

    def b_n(self, phi, theta):
        _, dfp, dft, _, _, _, g11, _, g21, _ = self._parts(phi, theta)
        return dfp * g11 + dft * g21

    def c_n(self, phi, theta):
        _, dfp, dft, _, _, _, _, g12, _, g22 = self._parts(phi, theta)
        return dfp * g12 + dft * g22


def ito_coefficients(surfaces: CoeffSurfaces, n: int) -> ItoCoefficients:
    if n < 1:
        raise InputError("moment order must be >= 1")
    return ItoCoefficients(surfaces=surfaces, order=n)


def integrate_moment_sde(surfaces: CoeffSurfaces, cfg: SimConfig,
                         n: int) -> tuple[MomentSeries, SimPath]:
    """Co-integrate the parameter system and the moment equation.

    Both equations share the same Wiener increments; the moment starts at
    F_n(initial state). Returns the moment series and the underlying path.
    """
    path = simulate_with_moment(surfaces, cfg, n)
    series = MomentSeries(order=n,
                          window_index=np.arange(len(path.states), dtype=np.int64),
                          values=path.moments.copy(), source="model_ito")
    return series, path


def moments_of_path(path: SimPath, n: int, source: str = "model_direct") -> MomentSeries:
    """F_n applied to a simulated parameter path."""
    return MomentSeries(order=n,
                        window_index=np.arange(len(path.states), dtype=np.int64),
                        values=f_n(path.states[:, 0], path.states[:, 1], n),
                        source=source)


@dataclass
class MomentComparison:
    order: int
    ks_distance: float
    overlap: float          # shared area of the two histogram densities
    grid: np.ndarray        # log-spaced bin edges
    pdf_a: np.ndarray
    pdf_b: np.ndarray

    def to_dict(self) -> dict:
        return {"order": self.order, "ks_distance": self.ks_distance,
                "overlap": self.overlap}


def moment_distributions(empirical: MomentSeries, model: MomentSeries,
                         bins: int = 60) -> MomentComparison:
    """Histogram densities on a shared log-spaced grid plus KS distance."""
    if len(empirical) == 0 or len(model) == 0:
        raise InputError("moment series must be non-empty")
    if empirical.order != model.order:
        raise InputError("comparing moment series of different orders")
    from scipy.stats import ks_2samp

    a = np.asarray(empirical.values, dtype=float)
    b = np.asarray(model.values, dtype=float)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo <= 0:
        raise InputError("moment values must be positive")
    if lo == hi:
        grid = np.array([lo * 0.5, lo, lo * 2.0])
    else:
        grid = np.geomspace(lo, hi, bins + 1)
    pdf_a, _ = np.histogram(a, bins=grid, density=True)
    pdf_b, _ = np.histogram(b, bins=grid, density=True)
    widths = np.diff(grid)
    overlap = float(np.sum(np.minimum(pdf_a, pdf_b) * widths))
    ks = float(ks_2samp(a, b).statistic) if len(a) > 1 and len(b) > 1 else float(a[0] != b[0])
    return MomentComparison(order=empirical.order, ks_distance=ks, overlap=overlap,
                            grid=grid, pdf_a=pdf_a, pdf_b=pdf_b)
