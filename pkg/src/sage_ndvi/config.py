"""Run configuration: one YAML file per evaluation, validated up front.

Relative paths are resolved against the directory holding the config file.
Validation collects every problem before raising, so a single run reports all
bad fields at once.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date, time
from pathlib import Path

import yaml

from . import fileio
from .errors import ConfigError
from .ingestion import COMPOSITE_RULES, GROUND_WINDOW
from .raster import DCP_PATCH_RADIUS, DCP_THRESHOLD
from .timeseries import MIN_PROMINENCE, MIN_SEPARATION_DAYS, SMOOTH_HALF_WIDTH

SCHEMA_VERSION = 1
DEFAULT_H = 0.1
CLOUD_DETECTORS = ("external", "builtin")
DEHAZER_MODES = ("external-rasters", "identity")


@dataclass(frozen=True)
class DehazerBinding:
    mode: str = "identity"
    manifest: Path | None = None


@dataclass(frozen=True)
class RunConfig:
    site: str
    start: date
    end: date  # inclusive
    satellite_manifest: Path
    ground_manifest: Path
    ground_mask: Path | None = None
    satellite_aoi_mask: Path | None = None
    satellite_bands: tuple[str, ...] = fileio.DEFAULT_SATELLITE_BANDS
    satellite_scale: float = 1.0
    ground_scale: float = 255.0
    composite_rule: str = "most-recent-valid"
    cloud_detector: str = "external"
    ground_window: tuple[time, time] = GROUND_WINDOW
    smooth_half_width: int = SMOOTH_HALF_WIDTH
    min_prominence: float = MIN_PROMINENCE
    min_separation_days: int = MIN_SEPARATION_DAYS
    threshold_h: float = DEFAULT_H
    dehazer: DehazerBinding = DehazerBinding()
    output_dir: Path = Path("sage_out")
    dcp_patch_radius: int = DCP_PATCH_RADIUS
    dcp_threshold: float = DCP_THRESHOLD

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        cfg = replace(self, **kw)
        if cfg.threshold_h <= 0:
            raise ConfigError("invalid override", [f"threshold_h: must be > 0, got {cfg.threshold_h}"])
        return cfg


_TOP_KEYS = {"schema_version", "site", "date_range", "satellite", "ground", "series",
             "threshold_h", "dehazer", "output_dir", "dcp"}
_SECTION_KEYS = {
    "date_range": {"start", "end"},
    "satellite": {"manifest", "bands", "scale", "composite_rule", "cloud_detector", "aoi_mask"},
    "ground": {"manifest", "mask", "window", "scale"},
    "series": {"smooth_half_width", "min_prominence", "min_separation_days"},
    "dehazer": {"mode", "manifest"},
    "dcp": {"patch_radius", "threshold"},
}


class _Checker:
    def __init__(self, base: Path):
        self.base = base
        self.problems: list[str] = []

    def fail(self, name, why):
        self.problems.append(f"{name}: {why}")

    def section(self, raw, key):
        sec = raw.get(key, {})
        if sec is None:
            return {}
        if not isinstance(sec, dict):
            self.fail(key, "must be a mapping")
            return {}
        for extra in sorted(set(sec) - _SECTION_KEYS[key]):
            self.fail(f"{key}.{extra}", "unknown key")
        return sec

    def path(self, name, value, *, required=True, must_exist=True):
        if value is None:
            if required:
                self.fail(name, "is required")
            return None
        if not isinstance(value, str):
            self.fail(name, f"must be a path string, got {value!r}")
            return None
        p = Path(value)
        p = p if p.is_absolute() else self.base / p
        if must_exist and not p.exists():
            self.fail(name, f"file not found: {p}")
        return p

    def number(self, name, value, default, *, integer=False, positive=False, nonneg=False):
        if value is None:
            return default
        kind = int if integer else (int, float)
        if isinstance(value, bool) or not isinstance(value, kind):
            self.fail(name, f"must be {'an integer' if integer else 'a number'}, got {value!r}")
            return default
        if positive and not value > 0:
            self.fail(name, f"must be > 0, got {value}")
        if nonneg and value < 0:
            self.fail(name, f"must be >= 0, got {value}")
        return value

    def choice(self, name, value, default, options):
        if value is None:
            return default
        if value not in options:
            self.fail(name, f"must be one of {list(options)}, got {value!r}")
            return default
        return value

    def day(self, name, value):
        if isinstance(value, date):
            return value
        try:
            return date.fromisoformat(str(value))
        except ValueError:
            self.fail(name, f"must be an ISO date, got {value!r}")
            return None

    def clock(self, name, value):
        try:
            return time.fromisoformat(str(value))
        except ValueError:
            self.fail(name, f"must be HH:MM, got {value!r}")
            return None


def parse_config(raw: dict, base: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a YAML mapping")
    c = _Checker(base)
    if raw.get("schema_version") != SCHEMA_VERSION:
        c.fail("schema_version", f"must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    for extra in sorted(set(raw) - _TOP_KEYS):
        c.fail(extra, "unknown key")

    site = raw.get("site", "site")
    if not isinstance(site, str) or not site:
        c.fail("site", "must be a non-empty string")

    dr = c.section(raw, "date_range")
    start = end = None
    for key in ("start", "end"):
        if dr.get(key) is None:
            c.fail(f"date_range.{key}", "is required")
    if dr.get("start") is not None:
        start = c.day("date_range.start", dr["start"])
    if dr.get("end") is not None:
        end = c.day("date_range.end", dr["end"])
    if start and end and end < start:
        c.fail("date_range", f"end {end} precedes start {start}")

    sat = c.section(raw, "satellite")
    sat_manifest = c.path("satellite.manifest", sat.get("manifest"))
    bands = sat.get("bands", list(fileio.DEFAULT_SATELLITE_BANDS))
    if not (isinstance(bands, list) and all(isinstance(b, str) for b in bands)) or len(set(bands)) != len(bands):
        c.fail("satellite.bands", "must be a list of distinct band names")
        bands = list(fileio.DEFAULT_SATELLITE_BANDS)
    elif not {"red", "nir"} <= set(bands):
        c.fail("satellite.bands", "must include 'red' and 'nir'")
    sat_scale = c.number("satellite.scale", sat.get("scale"), 1.0, positive=True)
    rule = c.choice("satellite.composite_rule", sat.get("composite_rule"), "most-recent-valid", COMPOSITE_RULES)
    detector = c.choice("satellite.cloud_detector", sat.get("cloud_detector"), "external", CLOUD_DETECTORS)
    aoi = c.path("satellite.aoi_mask", sat.get("aoi_mask"), required=False)

    gr = c.section(raw, "ground")
    gr_manifest = c.path("ground.manifest", gr.get("manifest"))
    gr_mask = c.path("ground.mask", gr.get("mask"), required=False)
    gr_scale = c.number("ground.scale", gr.get("scale"), 255.0, positive=True)
    window = GROUND_WINDOW
    if gr.get("window") is not None:
        w = gr["window"]
        if not (isinstance(w, list) and len(w) == 2):
            c.fail("ground.window", "must be a [start, end] pair of HH:MM times")
        else:
            lo, hi = c.clock("ground.window[0]", w[0]), c.clock("ground.window[1]", w[1])
            if lo and hi:
                if not lo < hi:
                    c.fail("ground.window", f"start {lo} must precede end {hi}")
                window = (lo, hi)

    ser = c.section(raw, "series")
    half = c.number("series.smooth_half_width", ser.get("smooth_half_width"), SMOOTH_HALF_WIDTH,
                    integer=True, nonneg=True)
    prom = c.number("series.min_prominence", ser.get("min_prominence"), MIN_PROMINENCE, positive=True)
    sep = c.number("series.min_separation_days", ser.get("min_separation_days"), MIN_SEPARATION_DAYS,
                   integer=True, nonneg=True)
    h = c.number("threshold_h", raw.get("threshold_h"), DEFAULT_H, positive=True)

    dh = c.section(raw, "dehazer")
    mode = c.choice("dehazer.mode", dh.get("mode"), "identity", DEHAZER_MODES)
    dh_manifest = c.path("dehazer.manifest", dh.get("manifest"), required=(mode == "external-rasters"))

    dcp = c.section(raw, "dcp")
    radius = c.number("dcp.patch_radius", dcp.get("patch_radius"), DCP_PATCH_RADIUS, integer=True, nonneg=True)
    dcp_thr = c.number("dcp.threshold", dcp.get("threshold"), DCP_THRESHOLD)

    out = c.path("output_dir", raw.get("output_dir", "sage_out"), must_exist=False)

    if c.problems:
        raise ConfigError(f"invalid configuration ({len(c.problems)} problem(s))", c.problems)
    return RunConfig(
        site=site, start=start, end=end,
        satellite_manifest=sat_manifest, ground_manifest=gr_manifest,
        ground_mask=gr_mask, satellite_aoi_mask=aoi,
        satellite_bands=tuple(bands), satellite_scale=float(sat_scale), ground_scale=float(gr_scale),
        composite_rule=rule, cloud_detector=detector, ground_window=window,
        smooth_half_width=half, min_prominence=float(prom), min_separation_days=sep,
        threshold_h=float(h), dehazer=DehazerBinding(mode, dh_manifest), output_dir=out,
        dcp_patch_radius=radius, dcp_threshold=float(dcp_thr),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(raw, path.parent.resolve())
