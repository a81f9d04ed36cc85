"""Synthetic tick-data fixtures with a known generating schedule.

Builds tick files whose windowed volume-price distributions follow a known
log-normal parameter schedule: cubic intraday patterns plus Langevin
fluctuations from a given surface set. Used by the test suite and handy for
demos; the generating (phi, theta) series is returned so recovered values
can be checked against ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ingest import IngestConfig
from .sde import SimConfig, simulate
from .surfaces import REFERENCE_SURFACES, CoeffSurfaces

# Cubic intraday schedules for the default fixture, in centred intraday time.
DEFAULT_PHI_CUBIC = (8.2e-5, -2.3e-3, -2.0e-2, 13.52)
DEFAULT_THETA_CUBIC = (-1.0e-5, 5.6e-4, -1.3e-2, 1.79)


def cubic_values(coeffs, t_d: np.ndarray) -> np.ndarray:
    a, b, c, d = coeffs
    t = np.asarray(t_d, dtype=float)
    return a * t**3 + b * t**2 + c * t + d


@dataclass
class SynthSpec:
    n_days: int = 60
    ticks_per_window: int = 100
    n_assets: int = 25
    seed: int = 20240
    phi_cubic: tuple = DEFAULT_PHI_CUBIC
    theta_cubic: tuple = DEFAULT_THETA_CUBIC
    theta_scale: float = 1.0
    surfaces: CoeffSurfaces = field(default_factory=lambda: REFERENCE_SURFACES)
    with_fluctuations: bool = True
    base_day: int = 18000       # epoch day of the first trading day
    ingest: IngestConfig = field(default_factory=IngestConfig)


@dataclass
class SynthResult:
    path: str
    window_index: np.ndarray
    phi: np.ndarray             # latent schedule incl. fluctuations
    theta: np.ndarray
    spec: SynthSpec


def latent_series(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Latent (window_index, phi, theta) series of the generating schedule."""
    cfg = spec.ingest
    spd = cfg.slots_per_day
    slots = np.arange(spd)
    t_d = cfg.t_d_offset + slots
    phi_bar = cubic_values(spec.phi_cubic, t_d)
    theta_bar = cubic_values(spec.theta_cubic, t_d) * spec.theta_scale
    n = spec.n_days * spd
    window_index = np.arange(n, dtype=np.int64)
    phi = np.tile(phi_bar, spec.n_days)
    theta = np.tile(theta_bar, spec.n_days)
    if spec.with_fluctuations:
        path = simulate(spec.surfaces, SimConfig(n_steps=n, dt=0.1, seed=spec.seed))
        phi = phi + path.states[:, 0]
        theta = np.maximum(theta + path.states[:, 1], 1e-3)
    return window_index, phi, theta


def generate_ticks(path, spec: SynthSpec, format: str = "csv") -> SynthResult:
    """Write a tick fixture file; returns the latent generating series."""
    cfg = spec.ingest
    spd = cfg.slots_per_day
    width = cfg.window_width_s
    open_s = cfg.open_seconds
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 987654321]))
    window_index, phi, theta = latent_series(spec)

    lines = []
    m = spec.ticks_per_window
    for pos in range(len(window_index)):
        day = spec.base_day + pos // spd
        slot = pos % spd
        start = day * 86400 + open_s + slot * width
        z = rng.standard_normal(m)
        s = np.exp(phi[pos] + theta[pos] * z)
        prices = np.exp(1.0 + 0.5 * rng.standard_normal(m))
        volumes = s / prices
        for j in range(m):
            ts = start + (j * width) // m
            asset = f"A{j % spec.n_assets:03d}"
            lines.append((asset, ts, prices[j], volumes[j]))

    with open(path, "w", encoding="utf-8") as fh:
        if format == "csv":
            fh.write("asset,timestamp,price,volume\n")
            for asset, ts, price, volume in lines:
                fh.write(f"{asset},{ts},{float(price)!r},{float(volume)!r}\n")
        else:
            for asset, ts, price, volume in lines:
                fh.write(json.dumps({"asset": asset, "timestamp": int(ts),
                                     "price": float(price), "volume": float(volume)}) + "\n")
    return SynthResult(path=str(path), window_index=window_index,
                       phi=phi, theta=theta, spec=spec)


def pipeline_fixture_spec(n_days: int = 60, seed: int = 20240) -> SynthSpec:
    """Fixture sized for end-to-end pipeline runs.

    The theta schedule is scaled down so per-window fitting noise
    (theta/sqrt(ticks)) stays well below the fluctuation scale.
    """
    return SynthSpec(n_days=n_days, ticks_per_window=100, seed=seed,
                     theta_scale=1.0 / 6.0)
