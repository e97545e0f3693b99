"""From raw imagery archives to composite satellite rasters and daily ground NDVI."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path

import numpy as np

from . import fileio
from .errors import DimensionMismatchError, EmptyRegionError, IngestionError
from .raster import PixelMask, Raster, check_mask, mean_ndvi
from .timeseries import NdviSeries

logger = logging.getLogger(__name__)

COMPOSITE_DAYS = 8
COMPOSITE_RULES = ("most-recent-valid", "per-pixel-median")
GROUND_WINDOW = (time(11, 0), time(13, 0))
CLOUD_QUANTILE = 0.9
CLOUD_MIN_BRIGHTNESS = 0.7  # fraction of full scale
MANIFEST_COLUMNS = ("timestamp", "file-path", "nir-file-path", "source")
SOURCES = ("satellite", "ground")


@dataclass(frozen=True)
class ObservationRecord:
    """One timestamped image, held in memory or loaded from disk on demand."""

    timestamp: datetime
    source: str
    raster: Raster | None = None
    path: Path | None = None
    nir_path: Path | None = None
    band_names: tuple[str, ...] = fileio.DEFAULT_SATELLITE_BANDS
    scale: float | None = None
    cloud: str | None = None  # None, "external" (sidecar mask) or "builtin"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise IngestionError(f"unknown source {self.source!r}; expected one of {SOURCES}")
        if self.raster is None and self.path is None:
            raise IngestionError("record needs a raster or a file path")

    @property
    def day(self) -> date:
        return self.timestamp.date()

    def load(self) -> Raster:
        if self.raster is not None:
            return self.raster
        if self.source == "ground":
            if self.nir_path is None:
                raise IngestionError(f"ground record {self.path} has no NIR file")
            return fileio.read_ground(self.path, self.nir_path, self.scale or 255.0)
        raster = fileio.read_raster(self.path, self.band_names, self.scale or 1.0)
        return raster if self.cloud is None else mask_clouds(raster, self.path, self.cloud)

    def describe(self) -> str:
        return f"{self.source} record {self.timestamp.isoformat()} ({self.path or 'in-memory'})"


@dataclass
class CompositeWindow:
    start_date: date
    length_days: int = COMPOSITE_DAYS
    members: list[ObservationRecord] = field(default_factory=list)

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=self.length_days)

    def __contains__(self, record: ObservationRecord) -> bool:
        return self.start_date <= record.day < self.end_date


def dedupe(records):
    """Drop repeated timestamps, keeping the first occurrence."""
    seen = set()
    out = []
    for r in records:
        if r.timestamp not in seen:
            seen.add(r.timestamp)
            out.append(r)
    return out


def _check_sorted(records) -> None:
    try:
        for a, b in zip(records, records[1:]):
            if b.timestamp < a.timestamp:
                raise IngestionError(
                    f"records not sorted: {b.describe()} comes after {a.timestamp.isoformat()}")
    except TypeError as exc:
        raise IngestionError(f"cannot compare timestamps (mixed time-zone awareness?): {exc}") from exc


def composite_8day(records, start: date, end: date, rule: str = "most-recent-valid",
                   length_days: int = COMPOSITE_DAYS) -> list[tuple[date, Raster]]:
    """Composite records into fixed windows ``[start + k*length, start + (k+1)*length)``.

    Only windows with at least one member produce output; records on or after
    ``end`` are ignored. Output validity is the union of member validity.
    """
    if rule not in COMPOSITE_RULES:
        raise IngestionError(f"unknown composite rule {rule!r}; expected one of {COMPOSITE_RULES}")
    if not start < end:
        raise IngestionError(f"empty composite range {start}..{end}")
    records = dedupe(records)
    _check_sorted(records)

    windows: dict[int, CompositeWindow] = {}
    for r in records:
        if not start <= r.day < end:
            continue
        k = (r.day - start).days // length_days
        win = windows.setdefault(k, CompositeWindow(start + timedelta(days=k * length_days), length_days))
        win.members.append(r)
    return [(windows[k].start_date, composite_window(windows[k], rule)) for k in sorted(windows)]


def composite_window(window: CompositeWindow, rule: str = "most-recent-valid") -> Raster:
    rasters = [m.load() for m in window.members]
    first = rasters[0]
    for rec, ras in zip(window.members[1:], rasters[1:]):
        if ras.shape != first.shape or set(ras.bands) != set(first.bands):
            raise DimensionMismatchError(
                f"{rec.describe()} has shape {ras.shape} / bands {sorted(ras.bands)}, "
                f"window {window.start_date} started with {first.shape} / {sorted(first.bands)}")
        if ras.scale != first.scale:
            raise IngestionError(f"{rec.describe()} declares scale {ras.scale}, expected {first.scale}")
    if len(rasters) == 1:
        return first

    valid = np.logical_or.reduce([r.valid for r in rasters])
    bands = {}
    for name in first.bands:
        if rule == "most-recent-valid":
            out = np.zeros(first.shape)
            for r in rasters:
                out[r.valid] = r.bands[name][r.valid]
        else:
            stack = np.stack([np.where(r.valid, r.bands[name], np.nan) for r in rasters])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out = np.nanmedian(stack, axis=0)
            out[~valid] = 0.0
        bands[name] = out
    return Raster(bands, valid, first.scale, {"window": window.start_date.isoformat(),
                                              "members": len(rasters)})


def apply_cloud_mask(raster: Raster, cloud: PixelMask) -> Raster:
    """Invalidate cloudy pixels; band values are left as they are."""
    cloud = check_mask(raster, cloud)
    return raster.with_valid(raster.valid & ~cloud)


def detect_clouds(raster: Raster, quantile: float = CLOUD_QUANTILE,
                  min_brightness: float = CLOUD_MIN_BRIGHTNESS) -> PixelMask:
    """Brightness heuristic: cloudy where the darkest of R, G, B reaches both the
    ``quantile`` of that quantity over the image and ``min_brightness`` of full scale.
    """
    darkest = np.minimum.reduce([raster.to_8bit(b) for b in ("red", "green", "blue")])
    if not raster.valid.any():
        return np.zeros(raster.shape, dtype=bool)
    level = max(min_brightness * 255.0, float(np.quantile(darkest[raster.valid], quantile)))
    return raster.valid & (darkest >= level)


def cloud_sidecar(path) -> Path:
    """``scene.tif`` -> ``scene.cloud.png``."""
    return Path(path).with_suffix(".cloud.png")


def mask_clouds(raster: Raster, path, detector: str = "external") -> Raster:
    """Apply the sidecar cloud mask of ``path`` or the built-in detector."""
    if detector == "builtin":
        return apply_cloud_mask(raster, detect_clouds(raster))
    if detector != "external":
        raise IngestionError(f"unknown cloud detector {detector!r}")
    sidecar = cloud_sidecar(path)
    if not sidecar.exists():
        raise IngestionError(f"missing cloud mask {sidecar} for {path}")
    return apply_cloud_mask(raster, fileio.read_mask(sidecar))


def ground_window_filter(records, window_start: time = GROUND_WINDOW[0],
                         window_end: time = GROUND_WINDOW[1]):
    """Keep records whose local time of day lies in ``[window_start, window_end]``."""
    if not window_start < window_end:
        raise ValueError("window_start must precede window_end")
    return [r for r in records if window_start <= r.timestamp.time().replace(tzinfo=None) <= window_end]


def ground_daily_series(records, mask: PixelMask | None = None) -> NdviSeries:
    """Daily mean of per-image mean NDVI; images are weighted equally."""
    by_day: dict[date, list[float]] = {}
    for r in records:
        by_day.setdefault(r.day, [])
        try:
            by_day[r.day].append(mean_ndvi(r.load(), mask))
        except EmptyRegionError as exc:
            logger.debug("skipping %s: %s", r.describe(), exc)
    days, values = [], []
    for d in sorted(by_day):
        vals = by_day[d]
        if not vals:
            logger.warning("dropping %s: no image had usable pixels inside the ground mask", d)
            continue
        days.append(d)
        values.append(math.fsum(vals) / len(vals))
    return NdviSeries(days, values)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def parse_timestamp(text: str) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise IngestionError(f"bad ISO-8601 timestamp {text!r}") from exc


def read_manifest(path, band_names=fileio.DEFAULT_SATELLITE_BANDS, scale: float | None = None,
                  source: str | None = None, cloud: str | None = None) -> list[ObservationRecord]:
    """Read a manifest CSV into lazily loaded records, sorted by timestamp.

    Relative file paths are resolved against the manifest's directory.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"timestamp", "file-path", "source"} - set(reader.fieldnames or ())
            if missing:
                raise IngestionError(f"{path}: manifest lacks columns {sorted(missing)}")
            rows = list(reader)
    except OSError as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from exc

    base = path.parent
    records = []
    for lineno, row in enumerate(rows, start=2):
        src = row["source"].strip()
        if source is not None and src != source:
            raise IngestionError(f"{path}:{lineno}: expected source {source!r}, got {src!r}")
        nir = (row.get("nir-file-path") or "").strip()
        try:
            rec = ObservationRecord(
                parse_timestamp(row["timestamp"]), src,
                path=base / row["file-path"].strip(),
                nir_path=base / nir if nir else None,
                band_names=tuple(band_names), scale=scale,
                cloud=cloud if src == "satellite" else None)
        except IngestionError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from None
        if rec.source == "ground" and rec.nir_path is None:
            raise IngestionError(f"{path}:{lineno}: ground rows need nir-file-path")
        records.append(rec)
    try:
        records.sort(key=lambda r: r.timestamp)
    except TypeError as exc:
        raise IngestionError(f"{path}: mixed time-zone aware and naive timestamps") from exc
    return records


def write_manifest(path, rows) -> None:
    """``rows``: iterable of ``(timestamp, file_path, nir_path_or_None, source)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for ts, fp, nir, src in rows:
            w.writerow([ts.isoformat(), str(fp), "" if nir is None else str(nir), src])
