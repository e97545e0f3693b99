"""Exception hierarchy.

Every terminal failure of the pipeline is a :class:`SageError` subclass with a
distinct ``exit_code`` so the command line can report it without a traceback.

=====  ==============================  ===========================================
code   exception                       meaning
=====  ==============================  ===========================================
0      (none)                          success
1      (unexpected)                    bug or unhandled environment failure
3      ConfigError                     invalid config / scenario / missing path
4      IngestionError                  unreadable manifest or raster file
5      EmptyRegionError                no usable pixel in a region
6      FlatSeriesError                 no ground peak passed the prominence filter
7      DegenerateRangeError            min-max scaling range is zero
8      NoSignificantTimestampsError    no timestamp exceeds the threshold ``h``
9      DimensionMismatchError          rasters / masks / sequences disagree in shape
10     AlignmentError                  DTW input invalid (empty, too large for oracle)
=====  ==============================  ===========================================
"""

from __future__ import annotations


class SageError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(SageError):
    exit_code = 3

    def __init__(self, message: str, problems: list[str] | None = None, **kw):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message, **kw)


class IngestionError(SageError):
    exit_code = 4


class EmptyRegionError(SageError):
    """Raised when a reduction has zero contributing pixels."""

    exit_code = 5

    def __init__(self, message: str, *, total: int = 0, valid: int = 0,
                 in_mask: int = 0, defined: int = 0, **kw):
        self.counts = {"total": total, "valid": valid, "in_mask": in_mask, "defined": defined}
        counts = ", ".join(f"{k}={v}" for k, v in self.counts.items())
        super().__init__(f"{message} ({counts})", **kw)


class FlatSeriesError(SageError):
    exit_code = 6


class DegenerateRangeError(SageError):
    exit_code = 7


class NoSignificantTimestampsError(SageError):
    exit_code = 8

    def __init__(self, message: str, *, max_difference: float, threshold: float, **kw):
        self.max_difference = max_difference
        self.threshold = threshold
        super().__init__(
            f"{message}: max |u_i - u_phi_i| = {max_difference:.6g} does not exceed "
            f"h = {threshold:g}; lower h or check that the dehazed inputs differ from the hazy ones",
            **kw,
        )


class DimensionMismatchError(SageError):
    exit_code = 9


class AlignmentError(SageError):
    exit_code = 10


EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in (
        ConfigError,
        IngestionError,
        EmptyRegionError,
        FlatSeriesError,
        DegenerateRangeError,
        NoSignificantTimestampsError,
        DimensionMismatchError,
        AlignmentError,
    )
}
