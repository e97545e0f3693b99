"""SAGE-NDVI: satellite-to-ground NDVI error of hazy and dehazed imagery.

The sequence-level core is :func:`evaluate_series`; :func:`evaluate` wires it
to manifests, masks and a dehazer binding.

Significance ``|u_i - u_phi_i| > h`` is tested on *normalized* values, with
the hazy series scaled by the dehazed series' min-max parameters. ``h`` is
therefore expressed in units of the dehazed series' range.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta

import numpy as np

from . import fileio
from .alignment import AlignmentMatrix, dtw_align, matched_columns
from .config import RunConfig
from .errors import (DimensionMismatchError, EmptyRegionError, IngestionError,
                     NoSignificantTimestampsError, SageError)
from .ingestion import COMPOSITE_DAYS, composite_8day, ground_daily_series, ground_window_filter, read_manifest
from .raster import RGB, Raster, haze_score, mean_ndvi
from .timeseries import (ExtremaSeries, NdviSeries, ScaleParams, detect_extrema, minmax_params,
                         normalize, smooth)

logger = logging.getLogger(__name__)


@dataclass
class TimestampDiagnostic:
    date: str
    u_raw: float
    u_phi_raw: float
    u: float
    u_phi: float
    significant: bool
    matched: list[int]
    matched_phi: list[int]
    matched_v: list[float]
    matched_v_phi: list[float]
    hazy_error: float
    dehazed_error: float
    haze_score: float | None = None


@dataclass
class SageReport:
    e_bar: float
    e_phi_bar: float
    k: int
    threshold_h: float
    per_timestamp: list[TimestampDiagnostic]
    u_phi_params: ScaleParams
    v_params: ScaleParams
    extrema: list[dict] = field(default_factory=list)
    alignment_cost: float = 0.0
    alignment_cost_phi: float = 0.0
    site: str | None = None
    alignments: tuple[AlignmentMatrix, AlignmentMatrix] | None = field(
        default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(replace(self, alignments=None))
        del d["alignments"]
        d["u_phi_params"] = {"min": self.u_phi_params.min, "max": self.u_phi_params.max}
        d["v_params"] = {"min": self.v_params.min, "max": self.v_params.max}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def per_timestamp_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "u_raw", "u_phi_raw", "u", "u_phi", "significant",
                    "matched", "matched_phi", "hazy_error", "dehazed_error", "haze_score"])
        for t in self.per_timestamp:
            w.writerow([t.date, repr(t.u_raw), repr(t.u_phi_raw), repr(t.u), repr(t.u_phi),
                        int(t.significant), " ".join(map(str, t.matched)),
                        " ".join(map(str, t.matched_phi)), repr(t.hazy_error),
                        repr(t.dehazed_error), "" if t.haze_score is None else repr(t.haze_score)])
        return buf.getvalue()

    def summary_line(self) -> str:
        return f"SAGE-NDVI e={self.e_bar:.6f} e_phi={self.e_phi_bar:.6f} k={self.k}"


# ---------------------------------------------------------------------------
# Core of the metric
# ---------------------------------------------------------------------------

def significant_indices(u_norm, u_phi_norm, h: float) -> list[int]:
    """Indices where the dehazer moved normalized NDVI by strictly more than ``h``."""
    u = np.asarray(u_norm, dtype=np.float64)
    up = np.asarray(u_phi_norm, dtype=np.float64)
    if u.shape != up.shape:
        raise DimensionMismatchError(f"u and u_phi lengths differ: {u.size} vs {up.size}")
    if h <= 0:
        raise ValueError("h must be positive")
    return np.flatnonzero(np.abs(u - up) > h).tolist()


def _row_error(value: float, v: np.ndarray, cols: list[int]) -> float:
    return math.fsum(abs(value - v[q]) for q in cols) / len(cols)


def _check_alignment(A: AlignmentMatrix, n: int, m: int, name: str) -> None:
    if A.cells.shape != (n, m):
        raise DimensionMismatchError(f"{name} is {A.cells.shape}, expected {(n, m)}")


def sage_errors(u_norm, u_phi_norm, v_norm, A: AlignmentMatrix, A_phi: AlignmentMatrix,
                h: float) -> tuple[float, float, int]:
    """Mean hazy and dehazed errors against DTW-matched ground values.

    Returns ``(e_bar, e_phi_bar, k)``; only timestamps where the dehazer made
    a significant change contribute.
    """
    u = np.asarray(u_norm, dtype=np.float64)
    up = np.asarray(u_phi_norm, dtype=np.float64)
    v = np.asarray(v_norm, dtype=np.float64)
    sig = significant_indices(u, up, h)
    _check_alignment(A, len(u), len(v), "A")
    _check_alignment(A_phi, len(up), len(v), "A_phi")
    if not sig:
        raise NoSignificantTimestampsError(
            "no significant timestamps", max_difference=float(np.max(np.abs(u - up), initial=0.0)),
            threshold=h)
    e = e_phi = 0.0
    for i in sig:
        e += _row_error(u[i], v, matched_columns(A, i))
        e_phi += _row_error(up[i], v, matched_columns(A_phi, i))
    k = len(sig)
    return e / k, e_phi / k, k


def ground_extrema(ground: NdviSeries, half_width: int, min_prominence: float,
                   min_separation_days: int) -> ExtremaSeries:
    return detect_extrema(smooth(ground, half_width), min_prominence, min_separation_days)


def _staged(stage, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except SageError as exc:
        exc.stage = exc.stage or stage
        raise


def evaluate_series(u_raw: NdviSeries, u_phi_raw: NdviSeries, ground: NdviSeries, *,
                    h: float = 0.1, smooth_half_width: int = 3, min_prominence: float = 0.05,
                    min_separation_days: int = 20, haze_scores=None,
                    site: str | None = None) -> SageReport:
    """Run the metric from raw NDVI sequences onward."""
    if u_raw.dates != u_phi_raw.dates:
        raise DimensionMismatchError("hazy and dehazed series must share dates", stage="inputs")
    extrema = _staged("extrema", ground_extrema, ground, smooth_half_width, min_prominence,
                      min_separation_days)

    v_params = _staged("normalize-v", minmax_params, extrema.as_series())
    phi_params = _staged("normalize-u_phi", minmax_params, u_phi_raw)
    v = normalize(extrema.as_series(), v_params).values
    u_phi = normalize(u_phi_raw, phi_params).values
    u = normalize(u_raw, phi_params).values

    A = _staged("align", dtw_align, u, v)
    A_phi = _staged("align", dtw_align, u_phi, v)
    e_bar, e_phi_bar, k = _staged("errors", sage_errors, u, u_phi, v, A, A_phi, h)

    sig = set(significant_indices(u, u_phi, h))
    rows = []
    for i, d in enumerate(u_raw.dates):
        q, q_phi = matched_columns(A, i), matched_columns(A_phi, i)
        rows.append(TimestampDiagnostic(
            date=d.isoformat(), u_raw=float(u_raw.values[i]), u_phi_raw=float(u_phi_raw.values[i]),
            u=float(u[i]), u_phi=float(u_phi[i]), significant=i in sig,
            matched=q, matched_phi=q_phi,
            matched_v=[float(v[j]) for j in q], matched_v_phi=[float(v[j]) for j in q_phi],
            hazy_error=_row_error(u[i], v, q), dehazed_error=_row_error(u_phi[i], v, q_phi),
            haze_score=None if haze_scores is None else haze_scores[i]))
    ext = [{"date": dd.isoformat(), "value": float(val), "normalized": float(nv), "kind": kind}
           for (dd, val, kind), nv in zip(extrema.entries, v)]
    return SageReport(e_bar, e_phi_bar, k, h, rows, phi_params, v_params, ext,
                      A.total_cost, A_phi.total_cost, site, (A, A_phi))


def recompute_errors(report: SageReport) -> tuple[float, float]:
    """ē and ē^φ rebuilt from the per-timestamp rows, in the same order."""
    e = e_phi = 0.0
    for t in report.per_timestamp:
        if t.significant:
            e += t.hazy_error
            e_phi += t.dehazed_error
    return e / report.k, e_phi / report.k


# ---------------------------------------------------------------------------
# File-level pipeline
# ---------------------------------------------------------------------------

@dataclass
class PreparedInputs:
    u_raw: NdviSeries
    u_phi_raw: NdviSeries
    ground: NdviSeries
    haze_scores: list[float | None]
    composites: list[tuple[date, Raster]] = field(default_factory=list, repr=False)


def satellite_composites(config: RunConfig) -> list[tuple[date, Raster]]:
    records = read_manifest(config.satellite_manifest, config.satellite_bands, config.satellite_scale,
                            source="satellite", cloud=config.cloud_detector)
    return composite_8day(records, config.start, config.end + timedelta(days=1), config.composite_rule)


def _dehazed_rasters(config: RunConfig, composites) -> list[Raster]:
    binding = config.dehazer
    if binding.mode == "identity":
        return [r for _, r in composites]
    records = read_manifest(binding.manifest, config.satellite_bands, config.satellite_scale,
                            source="satellite")
    out = []
    for start, hazy in composites:
        end = start + timedelta(days=COMPOSITE_DAYS)
        match = [r for r in records if start <= r.day < end]
        if len(match) != 1:
            raise IngestionError(
                f"dehazer manifest {binding.manifest} has {len(match)} rasters for the window "
                f"starting {start}; expected exactly one")
        dehazed = match[0].load()
        if dehazed.shape != hazy.shape:
            raise DimensionMismatchError(
                f"dehazed raster {match[0].path} is {dehazed.shape}, hazy composite is {hazy.shape}")
        # the model only sees cloud-free pixels
        out.append(dehazed.with_valid(dehazed.valid & hazy.valid))
    return out


def prepare_inputs(config: RunConfig) -> PreparedInputs:
    """Everything up to the three raw NDVI sequences."""
    composites = _staged("satellite", satellite_composites, config)
    if not composites:
        raise IngestionError(f"no satellite records between {config.start} and {config.end}",
                             stage="satellite")
    dehazed = _staged("dehazer", _dehazed_rasters, config, composites)
    aoi = None if config.satellite_aoi_mask is None else fileio.read_mask(config.satellite_aoi_mask)

    dates, u, u_phi, scores = [], [], [], []
    for (d, hazy), clear in zip(composites, dehazed):
        try:
            ui = _staged("satellite-ndvi", mean_ndvi, hazy, aoi)
            upi = _staged("dehazed-ndvi", mean_ndvi, clear, aoi)
        except EmptyRegionError as exc:
            logger.warning("dropping satellite window %s: %s", d, exc)
            continue
        dates.append(d)
        u.append(ui)
        u_phi.append(upi)
        rgb = all(b in hazy.bands for b in RGB)
        scores.append(haze_score(hazy, config.dcp_patch_radius) if rgb else None)

    def ground():
        records = read_manifest(config.ground_manifest, scale=config.ground_scale, source="ground")
        records = [r for r in records if config.start <= r.day <= config.end]
        records = ground_window_filter(records, *config.ground_window)
        mask = None if config.ground_mask is None else fileio.read_mask(config.ground_mask)
        return ground_daily_series(records, mask)

    return PreparedInputs(NdviSeries(dates, u), NdviSeries(dates, u_phi),
                          _staged("ground", ground), scores, composites)


def evaluate(config: RunConfig, inputs: PreparedInputs | None = None) -> SageReport:
    """Full pipeline: manifests and masks in, :class:`SageReport` out."""
    inputs = inputs or prepare_inputs(config)
    return evaluate_series(
        inputs.u_raw, inputs.u_phi_raw, inputs.ground, h=config.threshold_h,
        smooth_half_width=config.smooth_half_width, min_prominence=config.min_prominence,
        min_separation_days=config.min_separation_days, haze_scores=inputs.haze_scores,
        site=config.site)
