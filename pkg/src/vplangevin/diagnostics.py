"""Statistical diagnostics: spectra, autocorrelation, Gaussianity, Markov
property and the fourth-coefficient (Pawula) check.

The Markov test compares, per conditioning cell, the distribution of the
next value given (x2, x3) against the one given x2 alone, using the
standardized rank-sum statistic. Conditioning on x2 uses a much finer grid
than on x3: with coarse x2 bins the position of x2 *inside* its bin carries
x3 information and a perfectly Markovian series fails the test for purely
geometric reasons. t0 = sqrt(2/pi) is the expected absolute value of a
standard normal, so t_ratio close to 1 is the Markov signature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DiagnosticsError, InputError
from .kmest import bin_indices, quantile_edges

T0_NULL = math.sqrt(2.0 / math.pi)


# -- spectra ---------------------------------------------------------------

def power_spectrum(series) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram of the mean-removed series.

    Frequencies are in cycles per step; the zero bin is omitted. Total power
    equals the population variance of the input (Parseval).
    """
    x = np.asarray(series, dtype=float)
    if x.size < 8:
        raise DiagnosticsError(f"need >= 8 samples for a spectrum, have {x.size}")
    x = x - x.mean()
    n = x.size
    amp = np.abs(np.fft.rfft(x)) ** 2 / n**2
    power = 2.0 * amp
    power[0] = amp[0]
    if n % 2 == 0:
        power[-1] = amp[-1]
    freq = np.fft.rfftfreq(n, d=1.0)
    return freq[1:], power[1:]


def wallclock_series(window_index: np.ndarray, values: np.ndarray,
                     slots_per_day: int, open_slot: int = 57,
                     day_slots: int = 144,
                     fill: str = "zero") -> tuple[np.ndarray, np.ndarray]:
    """Values on the contiguous wall-clock grid for spectral analysis.

    Trading windows are placed at ``day * day_slots + open_slot + slot`` so
    daily periodicity sits at frequency 1/day_slots. Off-hours and dropped
    windows are filled with zeros by default, matching the convention that
    the pattern vanishes outside trading and keeping detrended (zero-mean)
    noise spectrally flat; ``fill="interpolate"`` bridges gaps linearly
    instead, which imprints a daily correlation structure of its own and is
    only appropriate for raw, slowly-varying series. Returns (filled values,
    filled-gap mask). Series with no intraday structure
    (``slots_per_day <= 0``) use the window index as the grid directly.
    """
    if fill not in ("zero", "interpolate"):
        raise InputError(f"unknown fill mode {fill!r}")
    window_index = np.asarray(window_index, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if len(window_index) < 2:
        raise DiagnosticsError("need >= 2 points to build a wall-clock series")
    if slots_per_day > 0:
        day = window_index // slots_per_day
        slot = window_index % slots_per_day
        pos = day * day_slots + open_slot + slot
    else:
        pos = window_index
    grid = np.arange(pos[0], pos[-1] + 1)
    if fill == "interpolate":
        filled = np.interp(grid, pos, values)
    else:
        filled = np.zeros(len(grid))
        filled[pos - pos[0]] = values
    mask = np.ones(len(grid), dtype=bool)
    mask[pos - pos[0]] = False
    return filled, mask


def spectral_line_ratio(freq: np.ndarray, power: np.ndarray, f0: float,
                        exclude: int = 2, window: int = 30) -> float:
    """Power at the bin nearest f0 relative to the local continuum.

    The continuum is the median power over ``window`` bins on each side,
    excluding the ``exclude`` bins adjacent to the target. Values near 1 mean
    no line; a sharp periodicity at f0 gives a large ratio.
    """
    freq = np.asarray(freq, dtype=float)
    power = np.asarray(power, dtype=float)
    k = int(np.argmin(np.abs(freq - f0)))
    lo = max(0, k - window)
    hi = min(len(power), k + window + 1)
    sel = np.r_[lo:max(lo, k - exclude), min(hi, k + exclude + 1):hi]
    if len(sel) < 5:
        raise DiagnosticsError("too few bins around the target frequency")
    continuum = float(np.median(power[sel]))
    if continuum <= 0:
        return 0.0 if power[k] == 0 else np.inf
    return float(power[k] / continuum)


# -- autocorrelation -------------------------------------------------------

def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation, lags 0..max_lag (biased normalisation)."""
    x = np.asarray(series, dtype=float)
    if max_lag >= x.size:
        raise InputError(f"max_lag {max_lag} too large for series of length {x.size}")
    xc = x - x.mean()
    den = float(xc @ xc)
    if den == 0.0:
        raise DiagnosticsError("constant series has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(xc[:-k] @ xc[k:]) / den
    return out


@dataclass
class AcfFit:
    beta: float
    xi: float              # decay time in output-step units
    max_lag: int
    r_squared: float
    n_lags_used: int

    def __call__(self, tau):
        return self.beta * np.exp(-np.asarray(tau, dtype=float) / self.xi)


def acf_exponential_fit(series, max_lag: int = 144) -> AcfFit:
    """Fit log ACF ~ log(beta) - tau/xi over lags 1..max_lag.

    The fit range is truncated at the first non-positive ACF value; fewer
    than three usable lags, or a non-decaying fit, is an error.
    """
    return exponential_fit_from_acf(acf(series, max_lag), max_lag)


def exponential_fit_from_acf(r: np.ndarray, max_lag: int) -> AcfFit:
    """Log-linear decay fit of an already-computed ACF (lags 0..max_lag)."""
    lags = np.arange(1, max_lag + 1)
    rpos = r[1:]
    bad = np.flatnonzero(rpos <= 0)
    cut = bad[0] if len(bad) else len(rpos)
    if cut < 3:
        raise DiagnosticsError(
            f"only {cut} positive ACF lags; no exponential decay to fit")
    lags = lags[:cut]
    logr = np.log(rpos[:cut])
    design = np.column_stack([np.ones(cut), lags.astype(float)])
    coef, _, _, _ = np.linalg.lstsq(design, logr, rcond=None)
    if coef[1] >= 0:
        raise DiagnosticsError("autocorrelation does not decay; fit rejected")
    resid = logr - design @ coef
    ss_tot = float(np.sum((logr - logr.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    return AcfFit(beta=float(np.exp(coef[0])), xi=float(-1.0 / coef[1]),
                  max_lag=max_lag, r_squared=r2, n_lags_used=int(cut))


# -- joint Gaussianity -----------------------------------------------------

@dataclass
class GaussianSummary:
    mu: np.ndarray
    sigma: np.ndarray
    determinant: float

    def pdf(self, phi, theta):
        """Correlated two-dimensional Gaussian density."""
        inv = np.linalg.inv(self.sigma)
        dp = np.asarray(phi, dtype=float) - self.mu[0]
        dt = np.asarray(theta, dtype=float) - self.mu[1]
        quad = inv[0, 0] * dp * dp + 2.0 * inv[0, 1] * dp * dt + inv[1, 1] * dt * dt
        return np.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(self.determinant))

    @property
    def correlation(self) -> float:
        return float(self.sigma[0, 1] / math.sqrt(self.sigma[0, 0] * self.sigma[1, 1]))


def joint_gaussian_summary(fl, min_entries: int = 100) -> GaussianSummary:
    """Sample mean vector and covariance of the fluctuation pair."""
    if len(fl) < min_entries:
        raise DiagnosticsError(f"need >= {min_entries} entries, have {len(fl)}")
    data = np.column_stack([fl.phi_f, fl.theta_f])
    mu = data.mean(axis=0)
    sigma = np.cov(data.T, ddof=1)
    det = float(sigma[0, 0] * sigma[1, 1] - sigma[0, 1] ** 2)
    if det <= 1e-12 * max(sigma[0, 0] * sigma[1, 1], 1e-300):
        raise DiagnosticsError("degenerate covariance: components are collinear")
    return GaussianSummary(mu=mu, sigma=sigma, determinant=det)


# -- Markov test -----------------------------------------------------------

def _ranksum_z(a: np.ndarray, b: np.ndarray) -> float:
    """Standardized rank-sum statistic (normal approximation, tie-corrected)."""
    n1, n2 = len(a), len(b)
    ranks = rankdata(np.concatenate([a, b]))
    u1 = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    n = n1 + n2
    _, counts = np.unique(ranks, return_counts=True)
    tie = 1.0 - float(((counts**3 - counts).sum())) / (n**3 - n)
    var = n1 * n2 * (n + 1) / 12.0 * tie
    if var <= 0:
        return 0.0
    return (u1 - n1 * n2 / 2.0) / math.sqrt(var)


@dataclass
class MarkovTestResult:
    lag: int
    t_ratio: float
    bins: int
    n_cells: int
    t0: float = T0_NULL


def markov_test(series, lag: int = 1, bins: int = 5, x2_refine: int = 8,
                min_count: int = 30) -> MarkovTestResult:
    """Wilcoxon comparison of triple- versus pair-conditioned distributions.

    For each cell (fine x2 bin, coarse x3 bin) the x1 sample of triples in
    the cell is compared against the x1 sample sharing the x2 bin but not the
    x3 bin (disjoint two-sample design). Cells with fewer than ``min_count``
    members on either side are dropped; fewer than three usable cells is an
    error. t_ratio near 1 indicates the Markov property.
    """
    x = np.asarray(series, dtype=float)
    if lag < 1:
        raise InputError("lag must be >= 1")
    if bins < 2:
        raise InputError("bins must be >= 2")
    if x.size < 2 * lag + min_count:
        raise DiagnosticsError("series too short for the Markov test")
    e2 = quantile_edges(x, bins * x2_refine)
    e3 = quantile_edges(x, bins)
    i2 = bin_indices(x, e2)
    i3 = bin_indices(x, e3)
    x1 = x[2 * lag:]
    b2 = i2[lag:-lag]
    b3 = i3[:-2 * lag]
    zs = []
    for cell2 in range(len(e2) - 1):
        m2 = b2 == cell2
        if int(m2.sum()) < 2 * min_count:
            continue
        pool = x1[m2]
        pool_b3 = b3[m2]
        for cell3 in np.unique(pool_b3):
            sel = pool_b3 == cell3
            a = pool[sel]
            b = pool[~sel]
            if len(a) < min_count or len(b) < min_count:
                continue
            zs.append(abs(_ranksum_z(a, b)))
    if len(zs) < 3:
        raise DiagnosticsError(
            f"only {len(zs)} usable conditioning cells (need >= 3); "
            "series too short or too few bins populated")
    return MarkovTestResult(lag=lag, t_ratio=float(np.mean(zs) / T0_NULL),
                            bins=bins, n_cells=len(zs))


# -- Pawula / fourth coefficient --------------------------------------------

@dataclass
class PawulaResult:
    centers: np.ndarray
    d4: np.ndarray
    d2: np.ndarray
    ratio: np.ndarray       # d4 / d2^2 per state bin
    counts: np.ndarray

    @property
    def mean_ratio(self) -> float:
        return float(np.average(self.ratio, weights=self.counts))


def pawula_check(series, tau: int = 1, bins: int = 20,
                 min_count: int = 30) -> PawulaResult:
    """Binned fourth conditional moment and its size relative to diffusion.

    d4 = <dx^4 | x> / (4! tau) per state bin, compared against the squared
    second coefficient <dx^2 | x> / tau. Underpopulated bins are skipped.
    """
    x = np.asarray(series, dtype=float)
    if tau < 1:
        raise InputError("tau must be >= 1")
    if x.size <= tau + 1:
        raise DiagnosticsError("series too short for the fourth-moment check")
    d = x[tau:] - x[:-tau]
    x0 = x[:-tau]
    edges = quantile_edges(x0, bins)
    idx = bin_indices(x0, edges)
    nb = len(edges) - 1
    cnt = np.bincount(idx, minlength=nb)

    def bmean(v):
        s = np.bincount(idx, weights=v, minlength=nb)
        return np.divide(s, cnt, out=np.zeros(nb), where=cnt > 0)

    keep = cnt >= min_count
    if not keep.any():
        raise DiagnosticsError("every state bin is underpopulated")
    d2 = bmean(d * d) / tau
    d4 = bmean(d**4) / (24.0 * tau)
    centers = bmean(x0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d2 > 0, d4 / np.maximum(d2, 1e-300) ** 2, np.inf)
    return PawulaResult(centers=centers[keep], d4=d4[keep], d2=d2[keep],
                        ratio=ratio[keep], counts=cnt[keep])
