"""Conditional-moment (Kramers-Moyal) estimation of drift and diffusion.

The fluctuation plane is partitioned into quantile bins; within each bin the
first and second conditional moments of the increments over lag tau estimate
the drift vector and diffusion matrix. The tau -> 0 limit is taken by a
per-bin weighted linear fit over several lags, intercept at tau = 0.

Second moments are *centred* by default (the conditional mean is subtracted
before forming products). The raw-product estimator matches the limit
definition as tau -> 0 but carries the squared conditional mean at finite
tau, which extrapolates poorly; the ``centered=False`` flag restores it.
The ``convention`` flag selects the normalisation of d2: ``"direct"``
(per lag, the default, matching g g^T = D2 in simulation) or ``"halved"``
(per twice the lag, the literal 1/(k! tau) normalisation with k = 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, InputError


def quantile_edges(values: np.ndarray, bins: int) -> np.ndarray:
    """Strictly increasing quantile bin edges, widened to include extremes."""
    values = np.asarray(values, dtype=float)
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1))
    edges = np.unique(edges)
    if len(edges) < 2:
        raise EstimationError("degenerate bin edges: values are all identical")
    span = edges[-1] - edges[0]
    edges[0] -= 1e-9 * max(span, 1.0)
    edges[-1] += 1e-9 * max(span, 1.0)
    return edges


def bin_indices(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


@dataclass
class StateGrid:
    phi_edges: np.ndarray
    theta_edges: np.ndarray
    counts: np.ndarray          # (n_phi_bins, n_theta_bins) occupancy
    min_count: int

    @property
    def n_phi(self) -> int:
        return len(self.phi_edges) - 1

    @property
    def n_theta(self) -> int:
        return len(self.theta_edges) - 1

    def flat_index(self, phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return (bin_indices(phi, self.phi_edges) * self.n_theta
                + bin_indices(theta, self.theta_edges))

    def retained(self) -> np.ndarray:
        """Mask of bins meeting the occupancy floor (flat layout)."""
        return (self.counts >= self.min_count).ravel()


def build_grid(fl, bins_per_axis: int, min_count: int = 50) -> StateGrid:
    """Quantile-based 2-D state grid over a fluctuation series."""
    if bins_per_axis < 3:
        raise InputError(f"bins_per_axis must be >= 3, got {bins_per_axis}")
    if len(fl) < 1000:
        raise EstimationError(f"need >= 1000 fluctuation entries, have {len(fl)}")
    pe = quantile_edges(fl.phi_f, bins_per_axis)
    te = quantile_edges(fl.theta_f, bins_per_axis)
    if len(pe) - 1 < 3 or len(te) - 1 < 3:
        raise EstimationError("too few distinct values for the requested binning")
    ip = bin_indices(fl.phi_f, pe)
    it = bin_indices(fl.theta_f, te)
    counts = np.bincount(ip * (len(te) - 1) + it,
                         minlength=(len(pe) - 1) * (len(te) - 1))
    return StateGrid(phi_edges=pe, theta_edges=te,
                     counts=counts.reshape(len(pe) - 1, len(te) - 1),
                     min_count=min_count)


@dataclass
class KMField:
    """Binned drift/diffusion estimates over retained bins."""

    bin_id: np.ndarray          # flat grid index per retained bin
    center_phi: np.ndarray      # occupancy-weighted bin centres
    center_theta: np.ndarray
    n: np.ndarray               # pairs per bin
    d1_phi: np.ndarray
    d1_theta: np.ndarray
    d2_pp: np.ndarray
    d2_pt: np.ndarray
    d2_tt: np.ndarray
    se_d1_phi: np.ndarray
    se_d1_theta: np.ndarray
    se_d2_pp: np.ndarray
    se_d2_pt: np.ndarray
    se_d2_tt: np.ndarray
    tau_used: int               # lag in output steps; 0 = tau->0 extrapolation
    convention: str = "direct"
    fallback: np.ndarray | None = None   # bins where extrapolation fell back

    @property
    def n_bins(self) -> int:
        return len(self.bin_id)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# tau_used={self.tau_used} convention={self.convention}\n")
            fh.write("phi_c,theta_c,n,d1_phi,d1_theta,d2_pp,d2_pt,d2_tt\n")
            for i in range(self.n_bins):
                fh.write(f"{float(self.center_phi[i])!r},{float(self.center_theta[i])!r},{self.n[i]},"
                         f"{float(self.d1_phi[i])!r},{float(self.d1_theta[i])!r},{float(self.d2_pp[i])!r},"
                         f"{float(self.d2_pt[i])!r},{float(self.d2_tt[i])!r}\n")


def _pair_indices(fl, tau: int) -> tuple[np.ndarray, np.ndarray]:
    """Positions (i, j) with window_index[j] = window_index[i] + tau, same day."""
    wi = fl.window_index
    target = wi + tau
    j = np.searchsorted(wi, target)
    ok = j < len(wi)
    j = np.clip(j, 0, len(wi) - 1)
    ok &= wi[j] == target
    if fl.slots_per_day > 0:
        ok &= (wi // fl.slots_per_day) == (target // fl.slots_per_day)
    i = np.flatnonzero(ok)
    return i, j[ok]


def conditional_moments(fl, grid: StateGrid, tau: int, centered: bool = True,
                        convention: str = "direct") -> KMField:
    """Binned conditional increment moments at a single lag.

    Pairs spanning dropped windows or day boundaries are skipped. Bins are
    retained when they hold at least ``grid.min_count`` pairs.
    """
    if tau < 1:
        raise InputError(f"tau must be >= 1, got {tau}")
    if convention not in ("direct", "halved"):
        raise InputError(f"unknown convention {convention!r}")
    i, j = _pair_indices(fl, tau)
    if len(i) == 0:
        raise EstimationError(f"no usable pairs at tau={tau}")
    dphi = fl.phi_f[j] - fl.phi_f[i]
    dtheta = fl.theta_f[j] - fl.theta_f[i]
    p0 = fl.phi_f[i]
    t0 = fl.theta_f[i]
    flat = grid.flat_index(p0, t0)
    nb = grid.n_phi * grid.n_theta
    cnt = np.bincount(flat, minlength=nb)

    def bmean(v):
        s = np.bincount(flat, weights=v, minlength=nb)
        return np.divide(s, cnt, out=np.zeros(nb), where=cnt > 0)

    keep = (cnt >= grid.min_count) & grid.retained()
    if not keep.any():
        raise EstimationError(f"no bin holds >= {grid.min_count} pairs at tau={tau}")
    ids = np.flatnonzero(keep)

    m1p = bmean(dphi)
    m1t = bmean(dtheta)
    mpp = bmean(dphi * dphi)
    mtt = bmean(dtheta * dtheta)
    mpt = bmean(dphi * dtheta)
    # conditional (co)variances of the increments
    vpp = np.maximum(mpp - m1p * m1p, 0.0)
    vtt = np.maximum(mtt - m1t * m1t, 0.0)
    vpt = mpt - m1p * m1t

    denom = (2.0 * tau) if convention == "halved" else float(tau)
    if centered:
        d2pp, d2tt, d2pt = vpp / denom, vtt / denom, vpt / denom
    else:
        d2pp, d2tt, d2pt = mpp / denom, mtt / denom, mpt / denom

    with np.errstate(invalid="ignore", divide="ignore"):
        se1p = np.sqrt(vpp / np.maximum(cnt, 1)) / tau
        se1t = np.sqrt(vtt / np.maximum(cnt, 1)) / tau
        se2pp = d2pp * np.sqrt(2.0 / np.maximum(cnt, 1))
        se2tt = d2tt * np.sqrt(2.0 / np.maximum(cnt, 1))
        se2pt = np.sqrt(np.maximum(vpp * vtt + vpt * vpt, 0.0) / np.maximum(cnt, 1)) / denom

    return KMField(
        bin_id=ids,
        center_phi=bmean(p0)[ids], center_theta=bmean(t0)[ids],
        n=cnt[ids],
        d1_phi=(m1p / tau)[ids], d1_theta=(m1t / tau)[ids],
        d2_pp=d2pp[ids], d2_pt=d2pt[ids], d2_tt=d2tt[ids],
        se_d1_phi=se1p[ids], se_d1_theta=se1t[ids],
        se_d2_pp=np.abs(se2pp)[ids], se_d2_pt=se2pt[ids], se_d2_tt=np.abs(se2tt)[ids],
        tau_used=tau, convention=convention)


_COEF_KEYS = ("d1_phi", "d1_theta", "d2_pp", "d2_pt", "d2_tt")


def extrapolate_tau(fields: list[KMField]) -> KMField:
    """Per-bin, per-coefficient weighted linear fit in tau; intercept at 0.

    Weights are inverse squared standard errors. Bins present at every lag
    are extrapolated; when the fit is ill-conditioned (fewer than two usable
    lags) the smallest-lag value is kept and the bin is flagged.
    """
    if not fields:
        raise InputError("no fields to extrapolate")
    fields = sorted(fields, key=lambda f: f.tau_used)
    base = fields[0]
    if len(fields) == 1:
        return base
    common = base.bin_id
    for f in fields[1:]:
        common = np.intersect1d(common, f.bin_id)
    if len(common) == 0:
        raise EstimationError("no bin is retained at every lag")
    taus = np.array([float(f.tau_used) for f in fields])
    pos = [np.searchsorted(f.bin_id, common) for f in fields]

    out: dict[str, np.ndarray] = {}
    fallback = np.zeros(len(common), dtype=bool)
    for key in _COEF_KEYS:
        vals = np.stack([getattr(f, key)[p] for f, p in zip(fields, pos)])   # (T, nb)
        ses = np.stack([getattr(f, "se_" + key)[p] for f, p in zip(fields, pos)])
        w = np.where(ses > 0, 1.0 / np.maximum(ses, 1e-300) ** 2, 1.0)
        # per-bin weighted linear fit y = a + b*tau via normal equations
        sw = w.sum(axis=0)
        swx = (w * taus[:, None]).sum(axis=0)
        swxx = (w * (taus**2)[:, None]).sum(axis=0)
        swy = (w * vals).sum(axis=0)
        swxy = (w * vals * taus[:, None]).sum(axis=0)
        det = sw * swxx - swx * swx
        good = det > 1e-30 * np.maximum(sw * swxx, 1e-300)
        intercept = np.where(good, (swxx * swy - swx * swxy) / np.where(det == 0, 1, det),
                             vals[0])
        fallback |= ~good
        out[key] = intercept
        out["se_" + key] = np.where(good, np.sqrt(np.maximum(swxx, 0.0)
                                                  / np.where(det == 0, 1, det)),
                                    ses[0])

    base_pos = pos[0]
    return KMField(
        bin_id=common,
        center_phi=base.center_phi[base_pos], center_theta=base.center_theta[base_pos],
        n=base.n[base_pos],
        d1_phi=out["d1_phi"], d1_theta=out["d1_theta"],
        d2_pp=out["d2_pp"], d2_pt=out["d2_pt"], d2_tt=out["d2_tt"],
        se_d1_phi=out["se_d1_phi"], se_d1_theta=out["se_d1_theta"],
        se_d2_pp=out["se_d2_pp"], se_d2_pt=out["se_d2_pt"], se_d2_tt=out["se_d2_tt"],
        tau_used=0, convention=base.convention, fallback=fallback)


def estimate_km(fl, bins_per_axis: int = 15, taus: tuple[int, ...] = (1, 2),
                min_count: int = 50, centered: bool = True,
                convention: str = "direct") -> tuple[StateGrid, list[KMField], KMField]:
    """Grid + per-lag fields + tau->0 extrapolation in one call."""
    grid = build_grid(fl, bins_per_axis, min_count=min_count)
    fields = [conditional_moments(fl, grid, tau, centered=centered,
                                  convention=convention) for tau in taus]
    return grid, fields, extrapolate_tau(fields)
