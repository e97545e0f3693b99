"""Pixel-level primitives: NDVI, validity masks, dark channel haze scoring, PSNR and SSIM.

Band grids are ``float64`` arrays of shape ``(height, width)``. A raster
declares the value of full-scale intensity in ``scale`` (1.0 for reflectance,
255 for 8-bit camera frames); the dark channel and comparator metrics work on
the 0-255 scale regardless of source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import ConfigError, DimensionMismatchError, EmptyRegionError

#: Boolean grid with the raster's shape. ``True`` selects a pixel.
PixelMask = np.ndarray

RGB = ("red", "green", "blue")
DCP_PATCH_RADIUS = 7
DCP_THRESHOLD = 20.0
SSIM_WINDOW = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class Raster:
    """Multi-band pixel grid with a per-pixel validity flag."""

    bands: dict[str, np.ndarray]
    valid: np.ndarray | None = None
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.bands:
            raise ValueError("raster needs at least one band")
        shapes = {name: np.shape(b) for name, b in self.bands.items()}
        shape = next(iter(shapes.values()))
        if len(shape) != 2 or any(s != shape for s in shapes.values()):
            raise DimensionMismatchError(f"band grids must share one 2-D shape, got {shapes}")
        self.bands = {name: np.asarray(b, dtype=np.float64) for name, b in self.bands.items()}
        if self.valid is None:
            self.valid = np.ones(shape, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != shape:
            raise DimensionMismatchError(
                f"validity grid {self.valid.shape} does not match bands {shape}")
        for name, b in self.bands.items():
            if not np.all(np.isfinite(b[self.valid])):
                raise ValueError(f"band {name!r} has non-finite values in valid pixels")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def height(self) -> int:
        return self.valid.shape[0]

    @property
    def width(self) -> int:
        return self.valid.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    def band(self, name: str) -> np.ndarray:
        try:
            return self.bands[name]
        except KeyError:
            raise ConfigError(
                f"raster has no {name!r} band (available: {sorted(self.bands)})") from None

    def with_valid(self, valid: np.ndarray) -> "Raster":
        return Raster(dict(self.bands), valid, self.scale, dict(self.meta))

    def to_8bit(self, name: str) -> np.ndarray:
        """Band values rescaled to the 0-255 intensity range (unclipped)."""
        b = self.band(name)
        return b if self.scale == 255.0 else b * (255.0 / self.scale)


def check_mask(raster: Raster, mask: PixelMask | None) -> np.ndarray:
    if mask is None:
        return np.ones(raster.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != raster.shape:
        raise DimensionMismatchError(f"mask shape {mask.shape} does not match raster {raster.shape}")
    return mask


# ---------------------------------------------------------------------------
# NDVI
# ---------------------------------------------------------------------------

def ndvi_pixel(nir: float, red: float) -> float | None:
    """(NIR - Red) / (NIR + Red); ``None`` (no-data) when both are zero."""
    if nir < 0 or red < 0:
        raise ValueError("reflectances must be non-negative")
    total = nir + red
    if total == 0:
        return None
    return (nir - red) / total


def ndvi_grid(raster: Raster) -> np.ndarray:
    """Per-pixel NDVI, NaN where the ratio is undefined or the pixel is invalid."""
    nir = raster.band("nir")
    red = raster.band("red")
    total = nir + red
    out = np.full(raster.shape, np.nan)
    ok = raster.valid & (total != 0)
    out[ok] = (nir[ok] - red[ok]) / total[ok]
    return out


def mean_ndvi(raster: Raster, mask: PixelMask | None = None) -> float:
    """Mean NDVI over pixels that are valid, inside ``mask`` and defined."""
    mask = check_mask(raster, mask)
    grid = ndvi_grid(raster)
    use = mask & raster.valid
    defined = use & ~np.isnan(grid)
    n = int(defined.sum())
    if n == 0:
        raise EmptyRegionError(
            "no pixel contributes to mean NDVI",
            total=raster.valid.size, valid=int(raster.valid.sum()),
            in_mask=int(use.sum()), defined=n)
    return math.fsum(grid[defined]) / n


# ---------------------------------------------------------------------------
# Dark channel prior
# ---------------------------------------------------------------------------

def dark_channel(raster: Raster, patch_radius: int = DCP_PATCH_RADIUS) -> np.ndarray:
    """Neighborhood minimum of the per-pixel RGB minimum, on the 0-255 scale.

    Invalid pixels never enter a neighborhood; cells whose whole neighborhood is
    invalid come out as NaN.
    """
    if patch_radius < 0:
        raise ValueError("patch_radius must be >= 0")
    rgb_min = np.minimum.reduce([raster.to_8bit(b) for b in RGB])
    rgb_min = np.where(raster.valid, rgb_min, np.inf)
    size = 2 * patch_radius + 1
    dark = ndimage.minimum_filter(rgb_min, size=size, mode="constant", cval=np.inf)
    dark[np.isinf(dark)] = np.nan
    return dark


def haze_score(raster: Raster, patch_radius: int = DCP_PATCH_RADIUS) -> float:
    """Mean dark channel over valid pixels (0-255 scale)."""
    if not raster.valid.any():
        raise EmptyRegionError("haze score needs valid pixels",
                               total=raster.valid.size, valid=0)
    dark = dark_channel(raster, patch_radius)
    return math.fsum(dark[raster.valid]) / int(raster.valid.sum())


def is_hazy(score: float, threshold: float = DCP_THRESHOLD) -> bool:
    return score > threshold


# ---------------------------------------------------------------------------
# Comparators
# ---------------------------------------------------------------------------

def _paired(a: Raster, b: Raster, bands):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"raster shapes differ: {a.shape} vs {b.shape}")
    if bands is None:
        if set(a.bands) != set(b.bands):
            raise DimensionMismatchError(
                f"band sets differ: {sorted(a.bands)} vs {sorted(b.bands)}")
        bands = sorted(a.bands)
    joint = a.valid & b.valid
    return list(bands), joint


def psnr(a: Raster, b: Raster, peak: float = 255.0, bands=None) -> float:
    """Peak signal-to-noise ratio in dB over jointly valid pixels.

    Returns ``math.inf`` for identical images.
    """
    if peak <= 0:
        raise ValueError("peak must be positive")
    bands, joint = _paired(a, b, bands)
    n = int(joint.sum())
    if n == 0:
        raise EmptyRegionError("no jointly valid pixels for PSNR", total=joint.size)
    sq = [((a.to_8bit(k) - b.to_8bit(k))[joint]) ** 2 for k in bands]
    mse = math.fsum(np.concatenate(sq)) / (n * len(bands))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(a: Raster, b: Raster, window: int = SSIM_WINDOW, k1: float = SSIM_K1,
         k2: float = SSIM_K2, peak: float = 255.0, bands=None) -> float:
    """Mean structural similarity with a uniform square window.

    Local statistics use population moments. Only windows whose pixels are
    all jointly valid contribute. The per-band means are averaged.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    bands, joint = _paired(a, b, bands)
    if min(a.shape) < window:
        raise DimensionMismatchError(f"image {a.shape} is smaller than the {window}x{window} window")
    full = sliding_window_view(joint, (window, window)).all(axis=(-2, -1))
    if not full.any():
        raise EmptyRegionError("no fully valid SSIM window", total=joint.size,
                               valid=int(joint.sum()))
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    per_band = []
    for k in bands:
        x = sliding_window_view(a.to_8bit(k), (window, window))[full]
        y = sliding_window_view(b.to_8bit(k), (window, window))[full]
        mx = x.mean(axis=(-2, -1))
        my = y.mean(axis=(-2, -1))
        dx = x - mx[:, None, None]
        dy = y - my[:, None, None]
        vx = (dx * dx).mean(axis=(-2, -1))
        vy = (dy * dy).mean(axis=(-2, -1))
        cxy = (dx * dy).mean(axis=(-2, -1))
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        per_band.append(math.fsum(s) / s.size)
    return math.fsum(per_band) / len(per_band)
