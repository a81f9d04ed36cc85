"""Parametric drift and noise surfaces.

Drift components are linear forms in (phi, theta); the entries of the noise
matrix g are quadratic forms. g is kept symmetric, so the state-dependent
diffusion matrix g.g^T is positive semi-definite by construction.

A surface set carries a *convention* describing what g.g^T means relative to
the conditional increment statistics:

* ``"direct"`` (default): g.g^T equals the second conditional moment per unit
  lag. A path simulated with noise matrix g regenerates those statistics.
* ``"halved"``: g.g^T equals the moment per *twice* the lag (the 1/(k! tau)
  normalisation with k=2). Regenerating data then requires noise sqrt(2) g,
  which :meth:`CoeffSurfaces.kernel_coeffs` applies automatically.

Quadratic forms extrapolate violently outside the state region they were
fitted on, to the point of making the simulated system explosive. Each
surface set therefore carries an evaluation ``domain``: outside the box the
noise surfaces are frozen at the nearest boundary point (drift, being a
globally sane restoring term, is never frozen). ``domain=None`` evaluates the
raw quadratics everywhere.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, SurfaceFitError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class LinearForm:
    """a + b*phi + c*theta"""

    a: float
    b: float
    c: float

    def __call__(self, phi, theta):
        return self.a + self.b * np.asarray(phi) + self.c * np.asarray(theta)

    def coeffs(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=float)


@dataclass(frozen=True)
class QuadForm:
    """a + b*phi + c*theta + d*phi^2 + e*phi*theta + f*theta^2"""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def __call__(self, phi, theta):
        phi = np.asarray(phi)
        theta = np.asarray(theta)
        return (self.a + self.b * phi + self.c * theta
                + self.d * phi * phi + self.e * phi * theta + self.f * theta * theta)

    def coeffs(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d, self.e, self.f], dtype=float)

    def scaled(self, factor: float) -> "QuadForm":
        return QuadForm(*(factor * self.coeffs()))


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box on which the noise surfaces are trusted."""

    phi_min: float
    phi_max: float
    theta_min: float
    theta_max: float

    def __post_init__(self):
        if not (self.phi_min < self.phi_max and self.theta_min < self.theta_max):
            raise InputError(f"degenerate surface domain {self}")

    def clamp(self, phi, theta):
        return (np.clip(phi, self.phi_min, self.phi_max),
                np.clip(theta, self.theta_min, self.theta_max))

    def lo(self) -> np.ndarray:
        return np.array([self.phi_min, self.theta_min])

    def hi(self) -> np.ndarray:
        return np.array([self.phi_max, self.theta_max])


_ROW_KEYS = ("d1_phi", "d1_theta", "g_pp", "g_tt", "g_pt")
_LIN_COLS = ("1", "phi", "theta")
_QUAD_COLS = ("1", "phi", "theta", "phi2", "phitheta", "theta2")


@dataclass
class CoeffSurfaces:
    d1_phi: LinearForm
    d1_theta: LinearForm
    g_pp: QuadForm
    g_tt: QuadForm
    g_pt: QuadForm
    r_squared: dict = field(default_factory=dict)
    symmetric_g: bool = True
    convention: str = "direct"
    domain: Domain | None = None

    def __post_init__(self):
        if self.convention not in ("direct", "halved"):
            raise InputError(f"unknown convention {self.convention!r}")

    # -- evaluation ---------------------------------------------------------
    def drift(self, phi, theta) -> np.ndarray:
        return np.stack([self.d1_phi(phi, theta), self.d1_theta(phi, theta)], axis=-1)

    def g_matrix(self, phi, theta) -> np.ndarray:
        """Symmetric noise matrix g, with the domain freeze applied."""
        if self.domain is not None:
            phi, theta = self.domain.clamp(phi, theta)
        pp = self.g_pp(phi, theta)
        tt = self.g_tt(phi, theta)
        pt = self.g_pt(phi, theta)
        return np.stack([np.stack([pp, pt], axis=-1),
                         np.stack([pt, tt], axis=-1)], axis=-2)

    def d2_matrix(self, phi, theta) -> np.ndarray:
        g = self.g_matrix(phi, theta)
        return g @ np.swapaxes(g, -1, -2)

    def noise_scale(self) -> float:
        return SQRT2 if self.convention == "halved" else 1.0

    def kernel_coeffs(self) -> np.ndarray:
        """Flat coefficient vector for the integrator kernels.

        Layout: d1_phi(3), d1_theta(3), g_pp(6), g_tt(6), g_pt(6); the
        convention scale is folded into the g rows.
        """
        s = self.noise_scale()
        return np.concatenate([
            self.d1_phi.coeffs(), self.d1_theta.coeffs(),
            s * self.g_pp.coeffs(), s * self.g_tt.coeffs(), s * self.g_pt.coeffs(),
        ])

    def domain_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.domain is None:
            return (np.array([-np.inf, -np.inf]), np.array([np.inf, np.inf]))
        return self.domain.lo(), self.domain.hi()

    def check_psd(self, grid_n: int = 21, hull: tuple | None = None) -> bool:
        """Check that g.g^T is PSD on a grid over the domain (or given box)."""
        if hull is not None:
            plo, phi_, tlo, thi = hull
        elif self.domain is not None:
            plo, phi_, tlo, thi = (self.domain.phi_min, self.domain.phi_max,
                                   self.domain.theta_min, self.domain.theta_max)
        else:
            plo, phi_, tlo, thi = -1.0, 1.0, -1.0, 1.0
        pg, tg = np.meshgrid(np.linspace(plo, phi_, grid_n), np.linspace(tlo, thi, grid_n))
        d2 = self.d2_matrix(pg.ravel(), tg.ravel())
        ev = np.linalg.eigvalsh(d2)
        return bool(np.all(ev >= -1e-12 * max(1.0, float(np.abs(d2).max()))))

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        rows = {}
        for key in _ROW_KEYS:
            form = getattr(self, key)
            cols = _LIN_COLS if isinstance(form, LinearForm) else _QUAD_COLS
            row = dict(zip(cols, (float(v) for v in form.coeffs())))
            if key in self.r_squared:
                row["r2"] = float(self.r_squared[key])
            rows[key] = row
        out = {"rows": rows, "symmetric_g": self.symmetric_g, "convention": self.convention}
        if self.domain is not None:
            out["domain"] = {"phi": [self.domain.phi_min, self.domain.phi_max],
                             "theta": [self.domain.theta_min, self.domain.theta_max]}
        else:
            out["domain"] = None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CoeffSurfaces":
        try:
            rows = data["rows"]
            forms = {}
            r2 = {}
            for key in _ROW_KEYS:
                row = rows[key]
                cols = _LIN_COLS if key.startswith("d1") else _QUAD_COLS
                vals = [float(row[c]) for c in cols]
                forms[key] = LinearForm(*vals) if key.startswith("d1") else QuadForm(*vals)
                if "r2" in row:
                    r2[key] = float(row["r2"])
            dom = None
            if data.get("domain"):
                dom = Domain(data["domain"]["phi"][0], data["domain"]["phi"][1],
                             data["domain"]["theta"][0], data["domain"]["theta"][1])
            return cls(d1_phi=forms["d1_phi"], d1_theta=forms["d1_theta"],
                       g_pp=forms["g_pp"], g_tt=forms["g_tt"], g_pt=forms["g_pt"],
                       r_squared=r2, symmetric_g=bool(data.get("symmetric_g", True)),
                       convention=data.get("convention", "direct"), domain=dom)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed surfaces description: {exc}") from exc

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_file(cls, path) -> "CoeffSurfaces":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
        return cls.from_dict(data)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_domain(self, domain: Domain | None) -> "CoeffSurfaces":
        return replace(self, domain=domain)


# Reference coefficient set bundled for demos and the self-consistency suite.
# The domain is a 6-sigma box derived from REFERENCE_COVARIANCE.
REFERENCE_COVARIANCE = np.array([[0.0619, -0.0036], [-0.0036, 0.0039]])

_REF_SIG_PHI = float(np.sqrt(REFERENCE_COVARIANCE[0, 0]))
_REF_SIG_THETA = float(np.sqrt(REFERENCE_COVARIANCE[1, 1]))

REFERENCE_SURFACES = CoeffSurfaces(
    d1_phi=LinearForm(-0.0085, -0.7143, 0.2812),
    d1_theta=LinearForm(-0.0031, 0.0293, -0.5023),
    g_pp=QuadForm(0.2185, 0.0918, 0.2255, 0.4850, 0.2925, 4.0541),
    g_tt=QuadForm(0.0360, 0.0174, -0.0128, 0.0210, 0.0245, 1.5197),
    g_pt=QuadForm(-0.0111, -0.0051, -0.0158, -0.0134, 0.2936, -0.1835),
    r_squared={"d1_phi": 0.78, "d1_theta": 0.67, "g_pp": 0.93, "g_tt": 0.92, "g_pt": 0.93},
    domain=Domain(-6 * _REF_SIG_PHI, 6 * _REF_SIG_PHI,
                  -6 * _REF_SIG_THETA, 6 * _REF_SIG_THETA),
)


# -- least squares --------------------------------------------------------


def _weighted_lstsq(design: np.ndarray, y: np.ndarray, w: np.ndarray):
    """WLS fit; returns (coef, stderr, r_squared)."""
    design = np.asarray(design, float)
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    if np.any(w < 0):
        raise SurfaceFitError("negative weights")
    sw = np.sqrt(w)
    Xw = design * sw[:, None]
    yw = y * sw
    coef, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < design.shape[1]:
        raise SurfaceFitError(
            f"rank-deficient design ({rank} < {design.shape[1]}); "
            "not enough independent bins")
    resid = yw - Xw @ coef
    ss_res = float(resid @ resid)
    ybar = float(yw @ sw) / float(sw @ sw)
    tot = yw - ybar * sw
    ss_tot = float(tot @ tot)
    # a constant target (within rounding) reports r^2 = 1 by convention
    if ss_tot <= 1e-20 * max(float(yw @ yw), 1e-300):
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    dof = max(design.shape[0] - design.shape[1], 1)
    sigma2 = ss_res / dof
    cov = sigma2 * np.linalg.inv(Xw.T @ Xw)
    return coef, np.sqrt(np.maximum(np.diag(cov), 0.0)), r2


def _drift_design(phi, theta):
    return np.column_stack([np.ones_like(phi), phi, theta])


def _quad_design(phi, theta):
    return np.column_stack([np.ones_like(phi), phi, theta,
                            phi * phi, phi * theta, theta * theta])


@dataclass
class DriftFit:
    d1_phi: LinearForm
    d1_theta: LinearForm
    r_squared: dict
    stderr: dict


def fit_drift_surfaces(km_field) -> DriftFit:
    """Count-weighted linear fit of the binned drift components."""
    if km_field.n_bins < 6:
        raise SurfaceFitError(f"need >= 6 retained bins, have {km_field.n_bins}")
    X = _drift_design(km_field.center_phi, km_field.center_theta)
    w = km_field.n.astype(float)
    out = {}
    r2 = {}
    se = {}
    for key, y in (("d1_phi", km_field.d1_phi), ("d1_theta", km_field.d1_theta)):
        coef, stderr, rsq = _weighted_lstsq(X, y, w)
        out[key] = LinearForm(*coef)
        r2[key] = rsq
        se[key] = stderr
    return DriftFit(out["d1_phi"], out["d1_theta"], r2, se)


def spd_sqrt(mat: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below ``-floor`` raise; values in [-floor, 0) are clipped to 0.
    """
    mat = np.asarray(mat, float)
    sym = 0.5 * (mat + mat.T)
    evals, evecs = np.linalg.eigh(sym)
    if np.any(evals < -abs(floor)):
        raise SurfaceFitError(f"matrix not PSD within tolerance (eigenvalues {evals})")
    evals = np.maximum(evals, 0.0)
    return (evecs * np.sqrt(evals)) @ evecs.T


@dataclass
class GBins:
    """Per-bin symmetric square roots of the diffusion matrices."""

    center_phi: np.ndarray
    center_theta: np.ndarray
    g: np.ndarray           # (n_bins, 2, 2)
    weights: np.ndarray
    excluded: int           # bins dropped for non-PSD d2 beyond tolerance


def g_from_d2(km_field, se_tolerance: float = 3.0) -> GBins:
    """Per-bin noise matrices from the binned diffusion estimates.

    Each retained bin's d2 matrix gets the unique symmetric PSD square root.
    Slightly negative eigenvalues (within ``se_tolerance`` standard errors of
    the diagonal entries) are floored at zero; bins worse than that are
    excluded.
    """
    keep = []
    gs = []
    excluded = 0
    for i in range(km_field.n_bins):
        d2 = np.array([[km_field.d2_pp[i], km_field.d2_pt[i]],
                       [km_field.d2_pt[i], km_field.d2_tt[i]]])
        floor = se_tolerance * max(km_field.se_d2_pp[i], km_field.se_d2_tt[i])
        try:
            g = spd_sqrt(d2, floor=floor)
        except SurfaceFitError:
            excluded += 1
            continue
        keep.append(i)
        gs.append(g)
    if not keep:
        raise SurfaceFitError("all bins excluded: no PSD diffusion estimates")
    idx = np.array(keep)
    return GBins(center_phi=km_field.center_phi[idx],
                 center_theta=km_field.center_theta[idx],
                 g=np.array(gs),
                 weights=km_field.n[idx].astype(float),
                 excluded=excluded)


@dataclass
class GFit:
    g_pp: QuadForm
    g_tt: QuadForm
    g_pt: QuadForm
    r_squared: dict
    stderr: dict


def fit_g_surfaces(gbins: GBins) -> GFit:
    """Count-weighted quadratic fit of the per-bin noise matrix entries."""
    if len(gbins.weights) < 7:
        raise SurfaceFitError(f"need >= 7 bins for the quadratic fit, have {len(gbins.weights)}")
    X = _quad_design(gbins.center_phi, gbins.center_theta)
    out = {}
    r2 = {}
    se = {}
    for key, y in (("g_pp", gbins.g[:, 0, 0]), ("g_tt", gbins.g[:, 1, 1]),
                   ("g_pt", gbins.g[:, 0, 1])):
        coef, stderr, rsq = _weighted_lstsq(X, y, gbins.weights)
        out[key] = QuadForm(*coef)
        r2[key] = rsq
        se[key] = stderr
    return GFit(out["g_pp"], out["g_tt"], out["g_pt"], r2, se)


def fit_surfaces(km_field, convention: str | None = None,
                 domain_pad: float = 0.05) -> CoeffSurfaces:
    """Drift + noise surface fit with the domain set to the padded bin hull."""
    drift = fit_drift_surfaces(km_field)
    gbins = g_from_d2(km_field)
    gfit = fit_g_surfaces(gbins)
    p_lo, p_hi = float(km_field.center_phi.min()), float(km_field.center_phi.max())
    t_lo, t_hi = float(km_field.center_theta.min()), float(km_field.center_theta.max())
    p_pad = domain_pad * (p_hi - p_lo)
    t_pad = domain_pad * (t_hi - t_lo)
    dom = Domain(p_lo - p_pad, p_hi + p_pad, t_lo - t_pad, t_hi + t_pad)
    return CoeffSurfaces(
        d1_phi=drift.d1_phi, d1_theta=drift.d1_theta,
        g_pp=gfit.g_pp, g_tt=gfit.g_tt, g_pt=gfit.g_pt,
        r_squared={**drift.r_squared, **gfit.r_squared},
        convention=convention or getattr(km_field, "convention", "direct"),
        domain=dom)


def refine_surfaces(surfaces: CoeffSurfaces, target_phi: np.ndarray,
                    target_theta: np.ndarray, seed: int = 0,
                    n_steps: int = 20000, max_iter: int = 60,
                    max_shift: float = 0.2) -> CoeffSurfaces:
    """Optional post-fit refinement of the surface rows.

    Scales each of the five coefficient rows by a factor within
    ``1 +- max_shift``, minimising the summed two-sample KS distance between
    simulated and target marginal distributions. Off by default in the
    pipeline; intended for small cosmetic adjustments, not re-estimation.
    """
    from scipy.optimize import minimize
    from scipy.stats import ks_2samp

    from .sde import SimConfig, simulate

    target_phi = np.asarray(target_phi, float)
    target_theta = np.asarray(target_theta, float)

    def apply(x: np.ndarray) -> CoeffSurfaces:
        x = np.clip(x, 1.0 - max_shift, 1.0 + max_shift)
        return replace(
            surfaces,
            d1_phi=LinearForm(*(x[0] * surfaces.d1_phi.coeffs())),
            d1_theta=LinearForm(*(x[1] * surfaces.d1_theta.coeffs())),
            g_pp=surfaces.g_pp.scaled(x[2]),
            g_tt=surfaces.g_tt.scaled(x[3]),
            g_pt=surfaces.g_pt.scaled(x[4]),
        )

    cfg = SimConfig(n_steps=n_steps, seed=seed)

    def objective(x: np.ndarray) -> float:
        try:
            path = simulate(apply(x), cfg)
        except Exception:
            return 4.0
        return (ks_2samp(path.states[:, 0], target_phi).statistic
                + ks_2samp(path.states[:, 1], target_theta).statistic)

    res = minimize(objective, np.ones(5), method="Nelder-Mead",
                   options={"maxiter": max_iter, "xatol": 1e-3, "fatol": 1e-4})
    return apply(res.x)
