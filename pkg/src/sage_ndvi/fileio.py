"""Reading and writing rasters and masks.

GeoTIFF goes through ``tifffile`` (the GDAL nodata tag, 42113, is mapped to the
validity grid). Ground camera frames are ordinary RGB images plus a separate
single-band NIR capture.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import tifffile
from PIL import Image

from .errors import DimensionMismatchError, IngestionError
from .raster import Raster

logger = logging.getLogger(__name__)

GDAL_NODATA_TAG = 42113
DEFAULT_SATELLITE_BANDS = ("blue", "green", "red", "nir")
TIFF_SUFFIXES = {".tif", ".tiff"}


def _read_tiff(path: Path) -> tuple[np.ndarray, float | None]:
    """Return a ``(bands, height, width)`` array and the nodata value, if tagged."""
    try:
        with tifffile.TiffFile(path) as tif:
            series = tif.series[0]
            data = series.asarray()
            axes = series.axes
            tag = tif.pages[0].tags.get(GDAL_NODATA_TAG)
    except (OSError, ValueError, tifffile.TiffFileError) as exc:
        raise IngestionError(f"cannot read TIFF {path}: {exc}") from exc
    nodata = None
    if tag is not None:
        try:
            nodata = float(str(tag.value).strip("\x00 "))
        except ValueError:
            logger.warning("ignoring unparsable nodata tag %r in %s", tag.value, path)
    if data.ndim == 2:
        data = data[None]
    elif data.ndim == 3 and axes.endswith("S"):
        data = np.moveaxis(data, -1, 0)
    elif data.ndim != 3:
        raise IngestionError(f"{path}: expected a 2-D or 3-D image, got axes {axes!r}")
    return data, nodata


def read_geotiff(path, band_names=DEFAULT_SATELLITE_BANDS, scale: float = 1.0) -> Raster:
    """Read a multi-band GeoTIFF.

    A pixel is invalid when any band equals the nodata value or is not finite.
    """
    path = Path(path)
    data, nodata = _read_tiff(path)
    if data.shape[0] != len(band_names):
        raise IngestionError(
            f"{path} has {data.shape[0]} bands but {len(band_names)} names were given "
            f"({', '.join(band_names)})")
    data = data.astype(np.float64)
    valid = np.all(np.isfinite(data), axis=0)
    if nodata is not None:
        valid &= ~np.any(data == nodata, axis=0)
    data = np.where(valid, data, 0.0)
    return Raster(dict(zip(band_names, data)), valid, scale, {"path": str(path), "nodata": nodata})


def write_geotiff(path, raster: Raster, band_names=DEFAULT_SATELLITE_BANDS,
                  nodata: float = -9999.0, dtype="float32") -> None:
    stack = np.stack([raster.band(b) for b in band_names]).astype(dtype)
    stack[:, ~raster.valid] = nodata
    tifffile.imwrite(
        path, stack, planarconfig="separate", photometric="minisblack",
        extratags=[(GDAL_NODATA_TAG, "s", 0, repr(float(nodata)), True)])


def _read_image(path: Path) -> np.ndarray:
    if path.suffix.lower() in TIFF_SUFFIXES:
        data, _ = _read_tiff(path)
        return np.moveaxis(data, 0, -1) if data.shape[0] > 1 else data[0]
    try:
        with Image.open(path) as im:
            return np.asarray(im)
    except OSError as exc:
        raise IngestionError(f"cannot read image {path}: {exc}") from exc


def read_ground(rgb_path, nir_path, scale: float = 255.0) -> Raster:
    """Combine an RGB camera frame and its NIR capture into one raster.

    An alpha channel, if present, becomes the validity grid.
    """
    rgb_path, nir_path = Path(rgb_path), Path(nir_path)
    rgb = _read_image(rgb_path)
    nir = _read_image(nir_path)
    if rgb.ndim != 3 or rgb.shape[2] not in (3, 4):
        raise IngestionError(f"{rgb_path}: expected an RGB(A) image, got shape {rgb.shape}")
    if nir.ndim == 3:
        nir = nir[..., 0]
    if nir.shape != rgb.shape[:2]:
        raise DimensionMismatchError(
            f"NIR image {nir_path} {nir.shape} does not match RGB image {rgb_path} {rgb.shape[:2]}")
    valid = rgb[..., 3] > 0 if rgb.shape[2] == 4 else None
    bands = {"red": rgb[..., 0], "green": rgb[..., 1], "blue": rgb[..., 2], "nir": nir}
    return Raster(bands, valid, scale, {"path": str(rgb_path), "nir_path": str(nir_path)})


def read_mask(path) -> np.ndarray:
    """Single-band mask image; nonzero means true."""
    path = Path(path)
    img = _read_image(path)
    if img.ndim == 3:
        img = img[..., 0]
    return img != 0


def write_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path)


def write_rgb(path, raster: Raster) -> None:
    rgb = np.stack([raster.to_8bit(b) for b in ("red", "green", "blue")], axis=-1)
    Image.fromarray(np.clip(np.rint(rgb), 0, 255).astype(np.uint8)).save(path)


def write_band(path, raster: Raster, band: str = "nir") -> None:
    Image.fromarray(np.clip(np.rint(raster.to_8bit(band)), 0, 255).astype(np.uint8)).save(path)


def read_raster(path, band_names=DEFAULT_SATELLITE_BANDS, scale: float = 1.0) -> Raster:
    """Read a satellite-style raster; RGB(A) images become ``red/green/blue``."""
    path = Path(path)
    if path.suffix.lower() in TIFF_SUFFIXES:
        return read_geotiff(path, band_names, scale)
    img = _read_image(path)
    if img.ndim != 3 or img.shape[2] not in (3, 4):
        raise IngestionError(f"{path}: expected an RGB(A) image, got shape {img.shape}")
    valid = img[..., 3] > 0 if img.shape[2] == 4 else None
    bands = {"red": img[..., 0], "green": img[..., 1], "blue": img[..., 2]}
    return Raster(bands, valid, 255.0, {"path": str(path)})
