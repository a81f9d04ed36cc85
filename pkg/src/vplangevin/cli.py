"""Command-line front end chaining the pipeline stages.

Subcommands: fit, decompose, diagnose, km, surfaces, simulate, moments,
pipeline. Configuration lives in a single TOML-like key-value file with
``--set section.key=value`` overrides plus ``--seed``, ``--out-dir``,
``--format`` and ``--threads`` shortcuts. Every command is deterministic
given (input, config); the pipeline writes a manifest with content hashes of
every artifact so rerun identity is checkable.

Exit codes: 0 success, 2 usage/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import decompose as dec
from . import diagnostics as diag
from . import kmest, moments
from .errors import IngestError, InputError, VplError
from .ingest import IngestConfig, load_ticks, windowize
from .lognormal import ParamSeries, fit_all
from .output import write_json, write_jsonl, write_manifest, write_plot_data
from .sde import SimConfig, simulate
from .surfaces import CoeffSurfaces, fit_surfaces, refine_surfaces


@dataclass
class PipelineConfig:
    seed: int = 0
    out_dir: str = "out"
    format: str = "csv"
    threads: int = 1
    asset: str | None = None
    theta_floor: float | None = None
    pattern_method: str = "moving_mean"
    window_days: int = 20
    trailing: bool = False
    max_lag: int = 144
    markov_lag: int = 1
    markov_bins: int = 5
    markov_refine: int = 8
    pawula_tau: int = 1
    pawula_bins: int = 20
    segmented_spectra: bool = False
    km_bins: int = 15
    km_taus: tuple = (1, 2)
    km_min_count: int = 50
    km_centered: bool = True
    km_convention: str = "direct"
    refine: bool = False
    domain_pad: float = 0.05
    sim_dt: float = 0.1
    sim_steps: int = 100000
    sim_subsample: int | None = None
    sim_max_state: float = 1e6
    sim_initial: tuple = (0.0, 0.0)
    moment_orders: tuple = (1, 2, 3, 4)
    moment_hist_bins: int = 60
    ingest: IngestConfig = field(default_factory=IngestConfig)

    def __post_init__(self):
        self.km_taus = tuple(int(t) for t in self.km_taus)
        self.sim_initial = tuple(float(v) for v in self.sim_initial)
        self.moment_orders = tuple(int(n) for n in self.moment_orders)
        if self.format not in ("csv", "jsonl"):
            raise InputError(f"format must be csv or jsonl, got {self.format!r}")

    def sim_config(self) -> SimConfig:
        return SimConfig(n_steps=self.sim_steps, dt=self.sim_dt,
                         subsample=self.sim_subsample, seed=self.seed,
                         initial_state=self.sim_initial,
                         max_state=self.sim_max_state)


# section -> (config attribute, file key) mapping for the TOML-like file
_SECTIONS = {
    "global": ["seed", "out_dir", "format", "threads", "asset"],
    "lognormal": ["theta_floor"],
    "decompose": ["pattern_method", "window_days", "trailing"],
    "diagnostics": ["max_lag", "markov_lag", "markov_bins", "markov_refine",
                    "pawula_tau", "pawula_bins", "segmented_spectra"],
    "km": ["km_bins", "km_taus", "km_min_count", "km_centered", "km_convention"],
    "surfaces": ["refine", "domain_pad"],
    "sim": ["sim_dt", "sim_steps", "sim_subsample", "sim_max_state", "sim_initial"],
    "moments": ["moment_orders", "moment_hist_bins"],
}
_INGEST_KEYS = [f.name for f in fields(IngestConfig)]


def config_to_dict(cfg: PipelineConfig) -> dict:
    out: dict = {}
    for section, keys in _SECTIONS.items():
        sec = {}
        for key in keys:
            value = getattr(cfg, key)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = list(value)
            sec[key] = value
        out[section] = sec
    out["ingest"] = {k: getattr(cfg.ingest, k) for k in _INGEST_KEYS}
    return out


def config_from_dict(data: dict) -> PipelineConfig:
    kwargs: dict = {}
    known = {f.name for f in fields(PipelineConfig)}
    try:
        return _build_config(data, kwargs, known)
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from exc


def _build_config(data, kwargs, known):
    for section, content in data.items():
        if section == "ingest":
            try:
                kwargs["ingest"] = IngestConfig(**content)
            except TypeError as exc:
                raise InputError(f"bad [ingest] config: {exc}") from exc
            continue
        if section not in _SECTIONS:
            raise InputError(f"unknown config section [{section}]")
        for key, value in content.items():
            if key not in _SECTIONS[section] or key not in known:
                raise InputError(f"unknown config key {section}.{key}")
            kwargs[key] = value
    return PipelineConfig(**kwargs)


def dump_config(cfg: PipelineConfig, path) -> None:
    data = config_to_dict(cfg)
    with open(path, "w", encoding="utf-8") as fh:
        for section in sorted(data):
            fh.write(f"[{section}]\n")
            for key in sorted(data[section]):
                fh.write(f"{key} = {json.dumps(data[section][key])}\n")
            fh.write("\n")


def parse_config_file(path) -> PipelineConfig:
    data: dict = {}
    section = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                data.setdefault(section, {})
                continue
            if "=" not in line or section is None:
                raise InputError(f"{path}:{lineno}: expected 'key = value' inside a section")
            key, _, value = line.partition("=")
            try:
                data[section][key.strip()] = json.loads(value.strip())
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: bad value for {key.strip()!r}: {exc}") from exc
    return config_from_dict(data)


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    data = config_to_dict(cfg)
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise InputError(f"--set expects section.key=value, got {item!r}")
        target, _, value = item.partition("=")
        section, _, key = target.strip().partition(".")
        try:
            parsed = json.loads(value.strip())
        except json.JSONDecodeError:
            parsed = value.strip()
        data.setdefault(section, {})[key] = parsed
    cfg = config_from_dict(data)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out_dir is not None:
        cfg = replace(cfg, out_dir=args.out_dir)
    if args.format is not None:
        cfg = replace(cfg, format=args.format)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _load_config(args) -> PipelineConfig:
    cfg = parse_config_file(args.config) if args.config else PipelineConfig()
    return _apply_overrides(cfg, args)


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- stages -----------------------------------------------------------------

def stage_fit(input_path, cfg: PipelineConfig, out: Path) -> ParamSeries:
    ticks = load_ticks(input_path, format=cfg.format)
    windows, skip_log = windowize(ticks, cfg.ingest, asset=cfg.asset)
    if not windows:
        raise IngestError("no windows")
    series, fit_skips = fit_all(windows, cfg.ingest.slots_per_day,
                                t_d_offset=cfg.ingest.t_d_offset,
                                theta_floor=cfg.theta_floor, threads=cfg.threads)
    series.to_csv(out / "params.csv")
    write_jsonl(out / "skip_log.jsonl", skip_log + fit_skips)
    return series


def stage_decompose(series: ParamSeries, cfg: PipelineConfig, out: Path):
    patterns_global = dec.daily_pattern(series, dec.GLOBAL_MEAN)
    if cfg.pattern_method == dec.MOVING_MEAN:
        patterns = dec.daily_pattern(series, dec.MOVING_MEAN,
                                     window_days=cfg.window_days,
                                     trailing=cfg.trailing)
    else:
        patterns = patterns_global
    cubic = {"phi": dec.fit_cubic(patterns_global[0]).to_dict(),
             "theta": dec.fit_cubic(patterns_global[1]).to_dict()}
    write_json(out / "cubic_fits.json", cubic)
    for name, pat in (("phi", patterns_global[0]), ("theta", patterns_global[1])):
        with open(out / f"pattern_{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("slot,mean\n")
            for slot, val in enumerate(pat.slot_means):
                fh.write(f"{slot},{float(val)!r}\n")
    fl, info = dec.detrend(series, patterns, sigma=cfg.ingest.outlier_sigma)
    fl.to_csv(out / "fluctuations.csv")
    write_json(out / "detrend.json", info)
    return patterns_global, fl


def _spectrum_input(fl_index, values, slots_per_day, cfg: PipelineConfig):
    if cfg.segmented_spectra or slots_per_day <= 0:
        return np.asarray(values, dtype=float)
    open_slot = cfg.ingest.t_d_offset + 54
    filled, _ = diag.wallclock_series(fl_index, values, slots_per_day,
                                      open_slot=open_slot)
    return filled


def stage_diagnose(fl, cfg: PipelineConfig, out: Path) -> dict:
    summary: dict = {}
    for name, values in (("phi", fl.phi_f), ("theta", fl.theta_f)):
        filled = _spectrum_input(fl.window_index, values, fl.slots_per_day, cfg)
        freq, power = diag.power_spectrum(filled)
        write_plot_data(out / f"spectrum_{name}.dat",
                        [("frequency", freq), ("power", power)])
        max_lag = min(cfg.max_lag, len(values) // 4)
        r = diag.acf(values, max_lag)
        write_plot_data(out / f"acf_{name}.dat",
                        [("lag", np.arange(max_lag + 1).astype(float)), ("acf", r)])
        try:
            fit = diag.acf_exponential_fit(values, max_lag)
            summary[f"acf_{name}"] = {"beta": fit.beta, "xi": fit.xi,
                                      "r2": fit.r_squared, "lags": fit.n_lags_used}
        except VplError as exc:
            summary[f"acf_{name}"] = {"error": str(exc)}
        mk = diag.markov_test(values, lag=cfg.markov_lag, bins=cfg.markov_bins,
                              x2_refine=cfg.markov_refine)
        summary[f"markov_{name}"] = {"t_ratio": mk.t_ratio, "cells": mk.n_cells,
                                     "lag": mk.lag}
        pw = diag.pawula_check(values, tau=cfg.pawula_tau, bins=cfg.pawula_bins)
        write_plot_data(out / f"pawula_{name}.dat",
                        [("center", pw.centers), ("d4", pw.d4), ("ratio", pw.ratio)])
        summary[f"pawula_{name}"] = {"mean_ratio": pw.mean_ratio}
    gauss = diag.joint_gaussian_summary(fl)
    summary["gaussian"] = {"mu": gauss.mu.tolist(),
                           "sigma": gauss.sigma.tolist(),
                           "determinant": gauss.determinant,
                           "correlation": gauss.correlation}
    write_json(out / "diagnostics.json", summary)
    return summary


def stage_km(fl, cfg: PipelineConfig, out: Path):
    grid, _fields, km0 = kmest.estimate_km(
        fl, bins_per_axis=cfg.km_bins, taus=cfg.km_taus,
        min_count=cfg.km_min_count, centered=cfg.km_centered,
        convention=cfg.km_convention)
    km0.to_csv(out / "km_field.csv")
    for key in ("d1_phi", "d1_theta", "d2_pp", "d2_pt", "d2_tt"):
        write_plot_data(out / f"km_{key}.dat",
                        [("phi", km0.center_phi), ("theta", km0.center_theta),
                         (key, getattr(km0, key))])
    return km0


def stage_surfaces(km0, cfg: PipelineConfig, out: Path, fl=None) -> CoeffSurfaces:
    surf = fit_surfaces(km0, domain_pad=cfg.domain_pad)
    if cfg.refine and fl is not None:
        surf = refine_surfaces(surf, fl.phi_f, fl.theta_f, seed=cfg.seed)
    surf.to_file(out / "surfaces.json")
    return surf


def stage_simulate(surf: CoeffSurfaces, cfg: PipelineConfig, out: Path):
    path = simulate(surf, cfg.sim_config())
    path.to_fluctuations().to_csv(out / "sim_path.csv")
    write_json(out / "sim_meta.json", {"seed": path.seed,
                                       "surfaces_fingerprint": path.surfaces_fingerprint,
                                       "dt": path.dt, "subsample": path.subsample})
    return path


def stage_moments(series: ParamSeries, patterns, sim_fl, cfg: PipelineConfig,
                  out: Path) -> dict:
    """Empirical vs model moment distributions per order."""
    sim_on_grid = dataclasses.replace(sim_fl, slots_per_day=series.slots_per_day,
                                      window_index=np.arange(len(sim_fl), dtype=np.int64))
    model_params = moments.recompose(patterns, sim_on_grid)
    comparison = {}
    emp_rows = []
    model_rows = []
    for n in cfg.moment_orders:
        emp = moments.empirical_moments(series, n)
        model = moments.empirical_moments(model_params, n)
        model = moments.MomentSeries(order=n, window_index=model.window_index,
                                     values=model.values, source="model_direct")
        cmp_res = moments.moment_distributions(emp, model, bins=cfg.moment_hist_bins)
        comparison[str(n)] = cmp_res.to_dict()
        centers = np.sqrt(cmp_res.grid[:-1] * cmp_res.grid[1:])
        write_plot_data(out / f"moment_pdf_n{n}.dat",
                        [("value", centers), ("pdf_empirical", cmp_res.pdf_a),
                         ("pdf_model", cmp_res.pdf_b)])
        emp_rows.append(emp)
        model_rows.append(model)
    _write_moment_csv(out / "moments_empirical.csv", emp_rows)
    _write_moment_csv(out / "moments_model.csv", model_rows)
    write_json(out / "moment_comparison.json", comparison)
    return comparison


def _write_moment_csv(path, series_list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("window_index,n,value,source\n")
        for ms in series_list:
            for i in range(len(ms)):
                fh.write(f"{ms.window_index[i]},{ms.order},{float(ms.values[i])!r},{ms.source}\n")


# -- commands ----------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    stage_fit(args.input, cfg, out)
    return 0


def cmd_decompose(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    series = ParamSeries.from_csv(args.params)
    stage_decompose(series, cfg, out)
    return 0


def cmd_diagnose(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    fl = dec.FluctuationSeries.from_csv(args.fluctuations)
    stage_diagnose(fl, cfg, out)
    return 0


def cmd_km(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    fl = dec.FluctuationSeries.from_csv(args.fluctuations)
    stage_km(fl, cfg, out)
    return 0


def cmd_surfaces(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    fl = dec.FluctuationSeries.from_csv(args.fluctuations)
    km0 = stage_km(fl, cfg, out)
    stage_surfaces(km0, cfg, out, fl=fl)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    surf = CoeffSurfaces.from_file(args.surfaces)
    stage_simulate(surf, cfg, out)
    return 0


def cmd_moments(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    series = ParamSeries.from_csv(args.params)
    sim_fl = dec.FluctuationSeries.from_csv(args.sim)
    patterns = dec.daily_pattern(series, dec.GLOBAL_MEAN)
    stage_moments(series, patterns, sim_fl, cfg, out)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    stage = "fit"
    try:
        series = stage_fit(args.input, cfg, out)
        stage = "decompose"
        patterns_global, fl = stage_decompose(series, cfg, out)
        stage = "diagnose"
        stage_diagnose(fl, cfg, out)
        stage = "km"
        km0 = stage_km(fl, cfg, out)
        stage = "surfaces"
        surf = stage_surfaces(km0, cfg, out, fl=fl)
        stage = "simulate"
        path = stage_simulate(surf, cfg, out)
        stage = "moments"
        stage_moments(series, patterns_global, path.to_fluctuations(), cfg, out)
    except VplError as exc:
        exc.args = (f"stage {stage} failed: {exc}",)
        raise
    config_dict = config_to_dict(cfg)
    # execution details that cannot change the outputs stay out of the manifest
    config_dict["global"] = {k: v for k, v in config_dict["global"].items()
                             if k not in ("threads", "out_dir")}
    write_manifest(out / "manifest.json", out, {"input": args.input}, config_dict)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML-like config file")
    common.add_argument("--seed", type=int, help="global random seed")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--format", choices=("csv", "jsonl"), help="tick input format")
    common.add_argument("--threads", type=int, help="parallelism cap")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value")

    parser = argparse.ArgumentParser(prog="vplangevin",
                                     description="Volume-price Langevin toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="ingest ticks, fit per-window parameters")
    p.add_argument("input")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("decompose", parents=[common], help="daily patterns and fluctuations")
    p.add_argument("params")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("diagnose", parents=[common], help="statistical diagnostics")
    p.add_argument("fluctuations")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("km", parents=[common], help="conditional-moment estimation")
    p.add_argument("fluctuations")
    p.set_defaults(func=cmd_km)

    p = sub.add_parser("surfaces", parents=[common], help="fit drift/noise surfaces")
    p.add_argument("fluctuations")
    p.set_defaults(func=cmd_surfaces)

    p = sub.add_parser("simulate", parents=[common], help="integrate the Langevin system")
    p.add_argument("surfaces")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("moments", parents=[common], help="moment reconstruction and comparison")
    p.add_argument("params")
    p.add_argument("sim")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("pipeline", parents=[common], help="run the full chain")
    p.add_argument("input")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VplError as exc:
        print(f"vplangevin: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"vplangevin: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
