"""Raw asset-data ingestion: parsing, cleaning, windowing.

Input files carry per-tick ``asset, timestamp, price, volume`` records (CSV
with that header, or JSONL with those keys). Timestamps are either integer
epoch seconds or ISO-8601, auto-detected once per file. Ticks inside each
fixed-width intraday window are pooled across assets into the window's
volume-price sample s = price * volume.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import FitError, IngestError, InputError

DAY_SECONDS = 86400


@dataclass(frozen=True)
class TickRecord:
    asset_id: str
    timestamp: int          # epoch seconds, UTC
    price: float
    volume: float


@dataclass
class IngestConfig:
    window_width_s: int = 600
    trading_open: str = "09:30"
    trading_close: str = "16:00"
    outlier_sigma: float = 5.0
    min_values_per_window: int = 10
    error_day_fraction: float = 0.2
    clip_raw: bool = False

    def __post_init__(self):
        if self.window_width_s <= 0:
            raise InputError("window_width_s must be positive")
        if self.outlier_sigma <= 0:
            raise InputError("outlier_sigma must be positive")
        if self.min_values_per_window < 2:
            raise InputError("min_values_per_window must be >= 2")
        if not 0 < self.error_day_fraction <= 1:
            raise InputError("error_day_fraction must be in (0, 1]")
        if self.trading_seconds % self.window_width_s != 0:
            raise InputError(
                f"window width {self.window_width_s}s does not divide the "
                f"trading day ({self.trading_seconds}s) evenly")

    @staticmethod
    def _tod_seconds(hhmm: str) -> int:
        try:
            hh, mm = hhmm.split(":")
            sec = int(hh) * 3600 + int(mm) * 60
        except ValueError as exc:
            raise InputError(f"bad time-of-day {hhmm!r}") from exc
        if not 0 <= sec < DAY_SECONDS:
            raise InputError(f"time-of-day {hhmm!r} out of range")
        return sec

    @property
    def open_seconds(self) -> int:
        return self._tod_seconds(self.trading_open)

    @property
    def close_seconds(self) -> int:
        return self._tod_seconds(self.trading_close)

    @property
    def trading_seconds(self) -> int:
        sec = self.close_seconds - self.open_seconds
        if sec <= 0:
            raise InputError("trading_close must be after trading_open")
        return sec

    @property
    def slots_per_day(self) -> int:
        return self.trading_seconds // self.window_width_s

    @property
    def t_d_offset(self) -> int:
        """Offset mapping intraday slot -> centred intraday time t_d.

        t_d counts windows since 09:00 minus 54 window widths; for the default
        10-minute windows opening at 09:30 this is slot + 3.
        """
        return self.open_seconds // self.window_width_s - (54 * 600) // self.window_width_s


@dataclass
class WindowSample:
    window_index: int
    intraday_slot: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


def _parse_timestamp_mode(raw: str) -> str:
    try:
        int(raw)
        return "epoch"
    except ValueError:
        return "iso"


def _timestamp(raw: str, mode: str) -> int:
    if mode == "epoch":
        return int(raw)
    text = raw.replace("Z", "+00:00")
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _validate_record(asset, ts, price, volume, lineno, path):
    if not asset:
        raise IngestError(f"{path}:{lineno}: empty asset id")
    if not math.isfinite(price) or price <= 0:
        raise IngestError(f"{path}:{lineno}: price must be > 0, got {price}")
    if not math.isfinite(volume) or volume < 0:
        raise IngestError(f"{path}:{lineno}: volume must be >= 0, got {volume}")
    return TickRecord(asset, ts, price, volume)


def load_ticks(path, format: str = "csv") -> list[TickRecord]:
    """Parse a tick file; returns records sorted by (asset_id, timestamp).

    Malformed rows, non-positive prices and duplicate (asset, timestamp)
    pairs are errors naming the offending line.
    """
    if format not in ("csv", "jsonl"):
        raise InputError(f"unknown format {format!r}")
    records: list[TickRecord] = []
    mode = None
    if format == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return []
            missing = {"asset", "timestamp", "price", "volume"} - set(reader.fieldnames)
            if missing:
                raise IngestError(f"{path}: missing CSV columns {sorted(missing)}")
            for row in reader:
                lineno = reader.line_num
                try:
                    raw_ts = row["timestamp"].strip()
                    if mode is None:
                        mode = _parse_timestamp_mode(raw_ts)
                    ts = _timestamp(raw_ts, mode)
                    price = float(row["price"])
                    volume = float(row["volume"])
                    asset = row["asset"].strip()
                except (TypeError, ValueError, AttributeError, KeyError) as exc:
                    raise IngestError(f"{path}:{lineno}: malformed row ({exc})") from exc
                records.append(_validate_record(asset, ts, price, volume, lineno, path))
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    raw_ts = str(obj["timestamp"])
                    if mode is None:
                        mode = _parse_timestamp_mode(raw_ts)
                    ts = _timestamp(raw_ts, mode)
                    price = float(obj["price"])
                    volume = float(obj["volume"])
                    asset = str(obj["asset"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise IngestError(f"{path}:{lineno}: malformed row ({exc})") from exc
                records.append(_validate_record(asset, ts, price, volume, lineno, path))
    records.sort(key=lambda r: (r.asset_id, r.timestamp))
    for prev, cur in zip(records, records[1:]):
        if prev.asset_id == cur.asset_id and prev.timestamp == cur.timestamp:
            raise IngestError(
                f"{path}: duplicate record for asset {cur.asset_id!r} "
                f"at timestamp {cur.timestamp}")
    return records


def windowize(ticks: list[TickRecord], cfg: IngestConfig,
              asset: str | None = None) -> tuple[list[WindowSample], list[dict]]:
    """Group volume-price values into trading-hours windows.

    Windows outside trading hours are dropped; zero-volume ticks are excluded
    (their log volume-price is undefined); windows with fewer than
    ``cfg.min_values_per_window`` values are dropped into the skip log; days
    whose dropped-window fraction exceeds ``cfg.error_day_fraction`` are
    discarded entirely. ``asset`` restricts the pool to a single asset
    (per-asset mode).

    Returns (windows sorted by window_index, skip log entries).
    """
    spd = cfg.slots_per_day
    open_s = cfg.open_seconds
    close_s = cfg.close_seconds
    width = cfg.window_width_s
    skip_log: list[dict] = []
    buckets: dict[tuple[int, int], list[float]] = {}
    n_zero_volume = 0
    for rec in ticks:
        if asset is not None and rec.asset_id != asset:
            continue
        tod = rec.timestamp % DAY_SECONDS
        if not open_s <= tod < close_s:
            continue
        value = rec.price * rec.volume
        # zero volume, or a product underflowing to zero: log s is undefined
        if value <= 0.0:
            n_zero_volume += 1
            continue
        day = rec.timestamp // DAY_SECONDS
        slot = (tod - open_s) // width
        buckets.setdefault((day, slot), []).append(value)
    if n_zero_volume:
        skip_log.append({"reason": "zero_volume_ticks", "count": n_zero_volume})
    if not buckets:
        return [], skip_log

    day0 = min(day for day, _ in buckets)
    good: dict[int, list[tuple[int, list[float]]]] = {}
    dropped: dict[int, int] = {}
    n_raw_clipped = 0
    for (day, slot), values in sorted(buckets.items()):
        if cfg.clip_raw and len(values) >= 2:
            # opt-in raw-level cleaning, applied in log space where the
            # volume-price sample is near-Gaussian
            res = clip_outliers(np.log(values), cfg.outlier_sigma)
            if res.n_removed:
                n_raw_clipped += res.n_removed
                values = [v for v, keep in zip(values, res.mask) if keep]
        if len(values) < cfg.min_values_per_window:
            dropped[day] = dropped.get(day, 0) + 1
            skip_log.append({
                "reason": "too_few_values",
                "window_index": int((day - day0) * spd + slot),
                "count": len(values),
            })
            continue
        good.setdefault(day, []).append((slot, values))

    if n_raw_clipped:
        skip_log.append({"reason": "raw_clipped_values", "count": n_raw_clipped})

    windows: list[WindowSample] = []
    for day in sorted(set(good) | set(dropped)):
        # only windows that held data but were dropped mark an error day;
        # slots with no ticks at all are sparse coverage, not errors
        n_dropped = dropped.get(day, 0)
        if n_dropped / spd > cfg.error_day_fraction:
            if day in good:
                skip_log.append({"reason": "error_day", "day": int(day - day0),
                                 "dropped_windows": int(n_dropped)})
                del good[day]
            continue
        for slot, values in good.get(day, ()):
            windows.append(WindowSample(
                window_index=int((day - day0) * spd + slot),
                intraday_slot=int(slot),
                values=np.array(values, dtype=float)))
    windows.sort(key=lambda w: w.window_index)
    return windows, skip_log


@dataclass
class ClipResult:
    values: np.ndarray
    mask: np.ndarray        # True where the input point was kept
    n_removed: int


def clip_outliers(series, sigma: float) -> ClipResult:
    """Keep points within ``mean +- sigma * std`` of the input series.

    A zero-variance series is returned unchanged. Removing every point is an
    error (pathological input).
    """
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        raise InputError("clip_outliers: empty series")
    if sigma <= 0:
        raise InputError("clip_outliers: sigma must be positive")
    mean = values.mean()
    std = values.std()
    if std == 0.0:
        return ClipResult(values.copy(), np.ones(values.size, dtype=bool), 0)
    mask = np.abs(values - mean) <= sigma * std
    if not mask.any():
        raise FitError("clip_outliers removed every point")
    return ClipResult(values[mask], mask, int(values.size - mask.sum()))
