"""Satellite-to-ground NDVI error metric for remote-sensing dehazing."""

__version__ = "0.1.0"

from .alignment import AlignmentMatrix, dtw_align, dtw_brute_force, matched_columns
from .errors import SageError
from .metric import SageReport, evaluate, evaluate_series, sage_errors, significant_indices
from .raster import Raster, mean_ndvi, ndvi_pixel
from .timeseries import NdviSeries

__all__ = [
    "AlignmentMatrix", "NdviSeries", "Raster", "SageError", "SageReport",
    "dtw_align", "dtw_brute_force", "evaluate", "evaluate_series", "matched_columns",
    "mean_ndvi", "ndvi_pixel", "sage_errors", "significant_indices",
]
