"""Synthetic satellite/ground scenarios with known clean signals and injected haze.

The ground signal is an alfalfa-like sawtooth: linear regrowth from
``base_ndvi`` up to ``peak_ndvi``, dropping back to base at each cut date.
Satellite values sample the noise-free signal every 8 days through an affine
sensor map; haze subtracts a fixed amount of NDVI on chosen dates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path

import numpy as np
import yaml

from . import fileio
from .errors import ConfigError
from .ingestion import COMPOSITE_DAYS, cloud_sidecar, write_manifest
from .raster import Raster
from .timeseries import NdviSeries

SCHEMA_VERSION = 1
GROUND_TIMES = (time(11, 0), time(11, 30), time(12, 0), time(12, 30))
# off-window frames carry a shadow bias that the 11:00-13:00 filter must remove
OFF_WINDOW_TIMES = (time(8, 30), time(16, 30))
OFF_WINDOW_BIAS = -0.25
SATELLITE_TIME = time(10, 40)


@dataclass(frozen=True)
class PhenologyScenario:
    seed: int
    season_start: date
    season_end: date
    cut_dates: tuple[date, ...]
    base_ndvi: float = 0.2
    peak_ndvi: float = 0.8
    ground_noise_sd: float = 0.01
    haze_events: tuple[tuple[date, float], ...] = ()
    sensor_gain: float = 1.0
    sensor_bias: float = 0.0
    raster_size: int = 8
    dehazers: dict = field(default_factory=lambda: {"restore": 1.0})

    def validate(self) -> None:
        problems = []
        if not self.season_start < self.season_end:
            problems.append(f"season: start {self.season_start} must precede end {self.season_end}")
        if not -1 <= self.base_ndvi < self.peak_ndvi <= 1:
            problems.append("base_ndvi/peak_ndvi: need -1 <= base < peak <= 1")
        for d in self.cut_dates:
            if not self.season_start < d <= self.season_end:
                problems.append(f"cut_dates: {d} lies outside the season")
        if list(self.cut_dates) != sorted(set(self.cut_dates)):
            problems.append("cut_dates: must be strictly increasing")
        windows = set()
        for d, mag in self.haze_events:
            if not self.season_start <= d <= self.season_end:
                problems.append(f"haze_events: {d} lies outside the season")
            if mag <= 0:
                problems.append(f"haze_events: magnitude at {d} must be positive")
            w = (d - self.season_start).days // COMPOSITE_DAYS
            if w in windows:
                problems.append(f"haze_events: two events fall in the 8-day window of {d}")
            windows.add(w)
        if self.ground_noise_sd < 0:
            problems.append("ground_noise_sd: must be >= 0")
        if self.sensor_gain <= 0:
            problems.append("sensor_offset.gain: must be > 0")
        if self.raster_size < 4:
            problems.append("raster_size: must be >= 4")
        for name, frac in self.dehazers.items():
            if not 0 <= frac <= 1:
                problems.append(f"dehazers.{name}: restoration fraction must lie in [0, 1]")
        if problems:
            raise ConfigError("invalid scenario", problems)


@dataclass
class ScenarioData:
    ground_records: list[tuple[datetime, float]]
    ground_daily: NdviSeries
    clean: NdviSeries
    hazy: NdviSeries
    hazed_indices: list[int]

    def truth(self) -> dict:
        return {
            "hazed_indices": self.hazed_indices,
            "hazed_dates": [self.clean.dates[i].isoformat() for i in self.hazed_indices],
            "satellite_dates": [d.isoformat() for d in self.clean.dates],
            "clean": self.clean.values.tolist(),
            "hazy": self.hazy.values.tolist(),
        }


def sawtooth(spec: PhenologyScenario, day: date) -> float:
    knots = [spec.season_start, *spec.cut_dates]
    prev = max(k for k in knots if k <= day)
    later = [k for k in spec.cut_dates if k > day]
    nxt = later[0] if later else spec.season_end + timedelta(days=1)
    frac = (day - prev).days / (nxt - prev).days
    return spec.base_ndvi + (spec.peak_ndvi - spec.base_ndvi) * frac


def satellite_dates(spec: PhenologyScenario) -> list[date]:
    n = (spec.season_end - spec.season_start).days // COMPOSITE_DAYS + 1
    return [spec.season_start + timedelta(days=COMPOSITE_DAYS * i) for i in range(n)]


def gen_scenario(spec: PhenologyScenario) -> ScenarioData:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_days = (spec.season_end - spec.season_start).days + 1
    days = [spec.season_start + timedelta(days=i) for i in range(n_days)]
    noise = rng.normal(0.0, spec.ground_noise_sd, n_days) if spec.ground_noise_sd else np.zeros(n_days)
    daily = np.clip([sawtooth(spec, d) for d in days] + noise, -1.0, 1.0)

    records = []
    for d, value in zip(days, daily):
        for t in OFF_WINDOW_TIMES[:1]:
            records.append((datetime.combine(d, t), float(np.clip(value + OFF_WINDOW_BIAS, -1, 1))))
        records.extend((datetime.combine(d, t), float(value)) for t in GROUND_TIMES)
        for t in OFF_WINDOW_TIMES[1:]:
            records.append((datetime.combine(d, t), float(np.clip(value + OFF_WINDOW_BIAS, -1, 1))))

    sat_days = satellite_dates(spec)
    clean = np.array([spec.sensor_gain * sawtooth(spec, d) + spec.sensor_bias for d in sat_days])
    hazy = clean.copy()
    hazed = []
    for d, mag in spec.haze_events:
        i = (d - spec.season_start).days // COMPOSITE_DAYS
        hazy[i] -= mag
        hazed.append(i)
    if clean.min() < -1 or clean.max() > 1 or hazy.min() < -1:
        raise ConfigError("scenario produces satellite NDVI outside [-1, 1]; adjust sensor_offset or haze")
    return ScenarioData(records, NdviSeries(days, daily), NdviSeries(sat_days, clean),
                        NdviSeries(sat_days, hazy), sorted(hazed))


def partial_restore(hazy: NdviSeries, clean: NdviSeries, fraction: float) -> NdviSeries:
    """A dehazer that closes ``fraction`` of the gap to the clean series."""
    return NdviSeries(hazy.dates, hazy.values + fraction * (clean.values - hazy.values))


def render_rasters(series_value: float, size: int = 8, scale: float = 1.0) -> Raster:
    """Uniform raster whose NDVI is exactly ``series_value``."""
    if not -1 <= series_value <= 1:
        raise ValueError("NDVI must lie in [-1, 1]")
    shape = (size, size)
    bands = {
        "nir": np.full(shape, (1 + series_value) / 2 * scale),
        "red": np.full(shape, (1 - series_value) / 2 * scale),
        "green": np.full(shape, 0.3 * scale),
        "blue": np.full(shape, 0.2 * scale),
    }
    return Raster(bands, None, scale)


# ---------------------------------------------------------------------------
# Scenario files and on-disk datasets
# ---------------------------------------------------------------------------

def _day(value, name, problems):
    try:
        return value if isinstance(value, date) else date.fromisoformat(str(value))
    except ValueError:
        problems.append(f"{name}: not an ISO date: {value!r}")
        return None


def parse_scenario(raw: dict) -> PhenologyScenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario file must be a YAML mapping")
    problems = []
    if raw.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version: must be {SCHEMA_VERSION}")
    season = raw.get("season") or {}
    start = _day(season.get("start"), "season.start", problems)
    end = _day(season.get("end"), "season.end", problems)
    cuts = tuple(_day(c, "cut_dates", problems) for c in raw.get("cut_dates", []))
    events = []
    for ev in raw.get("haze_events", []):
        if not isinstance(ev, dict) or "date" not in ev or "magnitude" not in ev:
            problems.append(f"haze_events: each event needs date and magnitude, got {ev!r}")
            continue
        events.append((_day(ev["date"], "haze_events.date", problems), float(ev["magnitude"])))
    offset = raw.get("sensor_offset") or {}
    if problems:
        raise ConfigError("invalid scenario", problems)
    try:
        spec = PhenologyScenario(
            seed=int(raw.get("seed", 0)), season_start=start, season_end=end, cut_dates=cuts,
            base_ndvi=float(raw.get("base_ndvi", 0.2)), peak_ndvi=float(raw.get("peak_ndvi", 0.8)),
            ground_noise_sd=float(raw.get("ground_noise_sd", 0.01)), haze_events=tuple(events),
            sensor_gain=float(offset.get("gain", 1.0)), sensor_bias=float(offset.get("bias", 0.0)),
            raster_size=int(raw.get("raster_size", 8)),
            dehazers={str(k): float(v) for k, v in (raw.get("dehazers") or {"restore": 1.0}).items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from None
    spec.validate()
    return spec


def load_scenario(path) -> PhenologyScenario:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_scenario(raw)


def _satellite_raster(value: float, size: int, cloudy: bool) -> tuple[Raster, np.ndarray]:
    r = render_rasters(value, size)
    cloud = np.zeros(r.shape, dtype=bool)
    if cloudy:
        cloud[: size // 4, : size // 4] = True
        for b in r.bands.values():
            b[cloud] = 0.9
    return r, cloud


def _ground_raster(value: float, size: int) -> Raster:
    r = render_rasters(value, size)
    # sky rows: bright, low-NIR pixels the refined mask must exclude
    sky = slice(0, max(1, size // 4))
    r.bands["red"][sky] = 0.55
    r.bands["green"][sky] = 0.7
    r.bands["blue"][sky] = 0.95
    r.bands["nir"][sky] = 0.2
    return r


def write_dataset(spec: PhenologyScenario, outdir) -> dict:
    """Render a scenario to rasters, manifests, a ground mask, truth and run configs."""
    data = gen_scenario(spec)
    out = Path(outdir)
    size = spec.raster_size
    (out / "satellite").mkdir(parents=True, exist_ok=True)
    (out / "ground").mkdir(exist_ok=True)

    sat_rows = []
    for i, (d, value) in enumerate(zip(data.hazy.dates, data.hazy.values)):
        raster, cloud = _satellite_raster(float(value), size, cloudy=(i % 3 == 1))
        rel = Path("satellite") / f"S2_{d:%Y%m%d}.tif"
        fileio.write_geotiff(out / rel, raster)
        fileio.write_mask(cloud_sidecar(out / rel), cloud)
        sat_rows.append((datetime.combine(d, SATELLITE_TIME), rel, None, "satellite"))
    write_manifest(out / "satellite_manifest.csv", sat_rows)

    for name, frac in sorted(spec.dehazers.items()):
        restored = partial_restore(data.hazy, data.clean, frac)
        folder = out / f"dehazed_{name}"
        folder.mkdir(exist_ok=True)
        rows = []
        for i, (d, value) in enumerate(zip(restored.dates, restored.values)):
            raster, cloud = _satellite_raster(float(value), size, cloudy=(i % 3 == 1))
            fname = f"S2_{d:%Y%m%d}.tif"
            fileio.write_geotiff(folder / fname, raster.with_valid(~cloud))
            rows.append((datetime.combine(d, SATELLITE_TIME), fname, None, "satellite"))
        write_manifest(folder / "manifest.csv", rows)

    gr_rows = []
    for ts, value in data.ground_records:
        raster = _ground_raster(value, size)
        stem = f"ground/{ts:%Y%m%d_%H%M}"
        fileio.write_rgb(out / f"{stem}.png", raster)
        fileio.write_band(out / f"{stem}_nir.png", raster, "nir")
        gr_rows.append((ts, f"{stem}.png", f"{stem}_nir.png", "ground"))
    write_manifest(out / "ground_manifest.csv", gr_rows)
    mask = np.ones((size, size), dtype=bool)
    mask[: max(1, size // 4)] = False
    fileio.write_mask(out / "ground_mask.png", mask)

    truth = data.truth()
    truth["dehazers"] = {k: spec.dehazers[k] for k in sorted(spec.dehazers)}
    (out / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    configs = {}
    for name in sorted(spec.dehazers):
        cfg = {
            "schema_version": 1,
            "site": "synthetic",
            "date_range": {"start": spec.season_start.isoformat(), "end": spec.season_end.isoformat()},
            "satellite": {"manifest": "satellite_manifest.csv", "cloud_detector": "external"},
            "ground": {"manifest": "ground_manifest.csv", "mask": "ground_mask.png"},
            "dehazer": {"mode": "external-rasters", "manifest": f"dehazed_{name}/manifest.csv"},
            "output_dir": f"report_{name}",
        }
        path = out / f"evaluate_{name}.yaml"
        path.write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")
        configs[name] = path
    return {"configs": configs, "data": data}
