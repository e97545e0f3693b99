"""Dated NDVI sequences: denoising, peak/trough extraction and min-max scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks, peak_prominences

from .errors import DegenerateRangeError, FlatSeriesError

SMOOTH_HALF_WIDTH = 3
MIN_PROMINENCE = 0.05
MIN_SEPARATION_DAYS = 20


def _check_dates(dates) -> None:
    for a, b in zip(dates, dates[1:]):
        if not a < b:
            raise ValueError(f"dates must be strictly increasing ({a} then {b})")


@dataclass(frozen=True)
class NdviSeries:
    dates: tuple[date, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or len(self.values) != len(self.dates):
            raise ValueError("dates and values must be 1-D and the same length")
        _check_dates(self.dates)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def entries(self) -> list[tuple[date, float]]:
        return list(zip(self.dates, self.values.tolist()))

    def scaled(self, factor: float) -> "NdviSeries":
        return NdviSeries(self.dates, self.values * factor)


@dataclass(frozen=True)
class ExtremaSeries:
    """Alternating trough/peak subsequence of a ground series."""

    dates: tuple[date, ...]
    values: np.ndarray
    kinds: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if not len(self.dates) == len(self.values) == len(self.kinds):
            raise ValueError("dates, values and kinds must have equal length")
        _check_dates(self.dates)
        for a, b in zip(self.kinds, self.kinds[1:]):
            if a == b:
                raise ValueError("peaks and troughs must alternate")

    def __len__(self) -> int:
        return len(self.dates)

    def as_series(self) -> NdviSeries:
        return NdviSeries(self.dates, self.values)

    @property
    def entries(self) -> list[tuple[date, float, str]]:
        return list(zip(self.dates, self.values.tolist(), self.kinds))


@dataclass(frozen=True)
class ScaleParams:
    min: float
    max: float

    def __post_init__(self):
        if self.max < self.min:
            raise ValueError("max must be >= min")

    @property
    def span(self) -> float:
        return self.max - self.min


def smooth(series: NdviSeries, half_width: int = SMOOTH_HALF_WIDTH) -> NdviSeries:
    """Centered moving average, truncated at the ends.

    Each window mean is taken relative to its first element so that a
    constant run is reproduced bit-exactly.
    """
    if half_width < 0:
        raise ValueError("half_width must be >= 0")
    x = series.values
    n = len(x)
    if half_width == 0 or n == 0:
        return NdviSeries(series.dates, x.copy())
    out = np.empty(n)
    for i in range(n):
        w = x[max(0, i - half_width): i + half_width + 1]
        out[i] = w[0] + math.fsum(w - w[0]) / len(w)
    return NdviSeries(series.dates, out)


def detect_extrema(series: NdviSeries, min_prominence: float = MIN_PROMINENCE,
                   min_separation_days: int = MIN_SEPARATION_DAYS) -> ExtremaSeries:
    """Reduce a series to alternating troughs and peaks.

    Peaks are interior local maxima whose topographic prominence reaches
    ``min_prominence``. Among peaks closer than ``min_separation_days`` the
    taller one wins. A trough is the minimum before the first peak, between
    each pair of consecutive peaks, and after the last peak, so the output
    always reads trough, peak, trough, ..., peak, trough.
    """
    if min_prominence <= 0:
        raise ValueError("min_prominence must be positive")
    x = series.values
    candidates, _ = find_peaks(x)
    if len(candidates):
        prom = peak_prominences(x, candidates)[0]
        candidates = candidates[prom >= min_prominence]
    if len(candidates) == 0:
        raise FlatSeriesError(
            f"no peak with prominence >= {min_prominence:g} in the ground series "
            f"({len(x)} days, range {np.ptp(x) if len(x) else 0:.4g}); lower min_prominence")

    sep = timedelta(days=min_separation_days)
    kept: list[int] = []
    # tallest first; ties go to the earlier date
    for idx in sorted(candidates.tolist(), key=lambda i: (-x[i], i)):
        if all(abs(series.dates[idx] - series.dates[k]) >= sep for k in kept):
            kept.append(idx)
    kept.sort()

    bounds = [0] + [p + 1 for p in kept]
    ends = kept + [len(x)]
    indices, kinds = [], []
    for seg, (lo, hi) in enumerate(zip(bounds, ends)):
        indices.append(lo + int(np.argmin(x[lo:hi])))
        kinds.append("trough")
        if seg < len(kept):
            indices.append(kept[seg])
            kinds.append("peak")
    return ExtremaSeries([series.dates[i] for i in indices], x[indices], kinds)


def minmax_params(series: NdviSeries) -> ScaleParams:
    if len(series) < 2:
        raise DegenerateRangeError(f"min-max scaling needs >= 2 values, got {len(series)}")
    lo, hi = float(series.values.min()), float(series.values.max())
    if hi == lo:
        raise DegenerateRangeError(f"all {len(series)} values equal {lo:g}; cannot min-max scale")
    return ScaleParams(lo, hi)


def normalize(series: NdviSeries, params: ScaleParams) -> NdviSeries:
    """Affine map ``(value - min) / (max - min)``.

    With another series' parameters the output may leave [0, 1]; that is how
    the hazy series keeps its offset from the dehazed one.
    """
    if params.span == 0:
        raise DegenerateRangeError(f"degenerate scale parameters {params}")
    return NdviSeries(series.dates, (series.values - params.min) / params.span)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_series_csv(path, series: NdviSeries | ExtremaSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(series, ExtremaSeries):
            w.writerow(["date", "value", "kind"])
            for d, v, k in series.entries:
                w.writerow([d.isoformat(), repr(v), k])
        else:
            w.writerow(["date", "value"])
            for d, v in series.entries:
                w.writerow([d.isoformat(), repr(v)])


def read_series_csv(path) -> NdviSeries | ExtremaSeries:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    dates = [date.fromisoformat(r["date"]) for r in rows]
    values = [float(r["value"]) for r in rows]
    if rows and "kind" in rows[0]:
        return ExtremaSeries(dates, values, [r["kind"] for r in rows])
    return NdviSeries(dates, values)
