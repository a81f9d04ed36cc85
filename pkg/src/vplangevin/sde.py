"""Euler-Maruyama integration of the coupled two-parameter Langevin system.

The state advances as ``x <- x + D1(x) dt + g(x) sqrt(dt) z`` with a pair of
independent standard-normal draws per substep, so the two driving Wiener
processes are independent and the scheme is the Ito one. Output is emitted
every ``subsample`` substeps; by default ``subsample = round(1/dt)`` so the
output cadence is one time unit, directly comparable to windowed data.

Integration runs through the selected kernel backend (compiled extension or
pure-Python fallback); results are bit-identical across backends, chunk
sizes and thread counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import InputError, MomentOverflowError, SimulationError
from .surfaces import CoeffSurfaces

_STATUS_DIVERGED = 1
_STATUS_OVERFLOW = 2


@dataclass
class SimConfig:
    n_steps: int
    dt: float = 0.1
    subsample: int | None = None
    seed: int = 0
    initial_state: tuple[float, float] = (0.0, 0.0)
    max_state: float = 1e6
    chunk_outputs: int = 65536  # internal batching; no effect on results

    def __post_init__(self):
        if self.dt <= 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise InputError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.max_state <= 0:
            raise InputError("max_state must be positive")
        if self.subsample is not None and self.subsample < 1:
            raise InputError("subsample must be >= 1")

    @property
    def effective_subsample(self) -> int:
        if self.subsample is not None:
            return self.subsample
        return max(1, round(1.0 / self.dt))


@dataclass
class SimPath:
    states: np.ndarray          # (n_steps, 2) at output cadence
    seed: int
    surfaces_fingerprint: str
    dt: float
    subsample: int
    moments: np.ndarray | None = None
    moment_order: int | None = None
    path_index: int = field(default=0)

    @property
    def phi(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def theta(self) -> np.ndarray:
        return self.states[:, 1]

    def to_fluctuations(self):
        """View the path as a fluctuation series (continuous, no day gaps)."""
        from .decompose import FluctuationSeries

        n = len(self.states)
        return FluctuationSeries(window_index=np.arange(n, dtype=np.int64),
                                 phi_f=self.states[:, 0].copy(),
                                 theta_f=self.states[:, 1].copy(),
                                 slots_per_day=0)


def _run_path(surfaces: CoeffSurfaces, cfg: SimConfig, rng: np.random.Generator,
              order: int | None):
    coeffs = surfaces.kernel_coeffs()
    dlo, dhi = surfaces.domain_bounds()
    subsample = cfg.effective_subsample
    n_out = cfg.n_steps
    out = np.empty((n_out, 2))
    mout = np.empty(n_out) if order is not None else None
    if order is not None:
        from .moments import f_n

        m0 = f_n(cfg.initial_state[0], cfg.initial_state[1], order)
        state = np.array([cfg.initial_state[0], cfg.initial_state[1], m0], dtype=float)
    else:
        state = np.array(cfg.initial_state, dtype=float)
    done = 0
    while done < n_out:
        chunk_out = min(cfg.chunk_outputs, n_out - done)
        z = rng.standard_normal((chunk_out * subsample, 2))
        if order is None:
            status, idx = kernels.sim_chunk(coeffs, state, z, cfg.dt, subsample,
                                            out, done, cfg.max_state, dlo, dhi)
        else:
            status, idx = kernels.sim_chunk_moment(coeffs, order, state, z, cfg.dt,
                                                   subsample, out, mout, done,
                                                   cfg.max_state, dlo, dhi)
        if status == _STATUS_DIVERGED:
            step = done * subsample + idx
            raise SimulationError(
                f"state magnitude exceeded {cfg.max_state:g} at integration step "
                f"{step} (output step {step // subsample}); "
                f"state=({state[0]:.3g}, {state[1]:.3g})", step=step)
        if status == _STATUS_OVERFLOW:
            step = done * subsample + idx
            raise MomentOverflowError(
                f"moment of order {order} overflowed at integration step {step} "
                f"(state phi={state[0]:.4g}, theta={state[1]:.4g})", step=step)
        done += chunk_out
    return out, mout


def simulate(surfaces: CoeffSurfaces, cfg: SimConfig) -> SimPath:
    """Integrate the Langevin system; deterministic given (surfaces, cfg)."""
    rng = np.random.default_rng(cfg.seed)
    out, _ = _run_path(surfaces, cfg, rng, order=None)
    return SimPath(states=out, seed=cfg.seed,
                   surfaces_fingerprint=surfaces.fingerprint(),
                   dt=cfg.dt, subsample=cfg.effective_subsample)


def simulate_with_moment(surfaces: CoeffSurfaces, cfg: SimConfig, order: int) -> SimPath:
    """Co-integrate the state with the order-n moment equation, sharing noise."""
    if order < 1:
        raise InputError("moment order must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    out, mout = _run_path(surfaces, cfg, rng, order=order)
    return SimPath(states=out, seed=cfg.seed,
                   surfaces_fingerprint=surfaces.fingerprint(),
                   dt=cfg.dt, subsample=cfg.effective_subsample,
                   moments=mout, moment_order=order)


def ensemble(surfaces: CoeffSurfaces, cfg: SimConfig, n_paths: int,
             threads: int = 1) -> list[SimPath]:
    """Independent paths with sub-seeds spawned deterministically from cfg.seed.

    Results are ordered by path index and do not depend on ``threads``.
    """
    if n_paths < 1:
        raise InputError("n_paths must be >= 1")
    # a single-path ensemble reproduces simulate() exactly; larger ensembles
    # draw per-path generators from deterministically spawned sub-seeds
    seqs = np.random.SeedSequence(cfg.seed).spawn(n_paths)

    def one(i: int) -> SimPath:
        rng = (np.random.default_rng(cfg.seed) if n_paths == 1
               else np.random.default_rng(seqs[i]))
        try:
            out, _ = _run_path(surfaces, cfg, rng, order=None)
        except SimulationError as exc:
            raise SimulationError(f"path {i}: {exc}", step=exc.step) from exc
        return SimPath(states=out, seed=cfg.seed,
                       surfaces_fingerprint=surfaces.fingerprint(),
                       dt=cfg.dt, subsample=cfg.effective_subsample, path_index=i)

    if threads <= 1 or n_paths == 1:
        paths = [one(i) for i in range(n_paths)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            paths = list(pool.map(one, range(n_paths)))
    return paths
