"""Exception hierarchy.

Every error carries an optional location (source file, row, column or
JSON path) so that CLI output can point at the offending record.
Exit codes are attached per family and used by the command line.
"""

from __future__ import annotations


class PcmError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1

    def __init__(self, reason: str, *, source: str | None = None,
                 row: int | None = None, column: str | None = None):
        self.reason = reason
        self.source = source
        self.row = row
        self.column = column
        super().__init__(self._format())

    def _format(self) -> str:
        loc = []
        if self.source is not None:
            loc.append(str(self.source))
        if self.row is not None:
            loc.append(f"row {self.row}")
        if self.column is not None:
            loc.append(f"column {self.column}")
        prefix = f"{type(self).__name__}"
        if loc:
            prefix += " at " + ", ".join(loc)
        return f"{prefix}: {self.reason}"

    def with_source(self, source: str) -> "PcmError":
        if self.source is None:
            self.source = source
            self.args = (self._format(),)
        return self


# --- input errors (exit code 2) -------------------------------------------

class InputError(PcmError):
    exit_code = 2


class SchemaMismatch(InputError):
    pass


class UnitError(InputError):
    pass


class DuplicateRecord(InputError):
    pass


class TooFewPoints(InputError):
    pass


class NonMonotonicAfterDedup(InputError):
    pass


class ChecksumMismatch(InputError):
    pass


class ManifestError(InputError):
    pass


# --- config errors (exit code 3) ------------------------------------------

class ConfigError(PcmError):
    exit_code = 3


# --- analysis errors (exit code 1) ----------------------------------------

class AnalysisError(PcmError):
    exit_code = 1


class EmptyInput(AnalysisError):
    pass


class NonPositiveMean(AnalysisError):
    pass


class InvalidParams(AnalysisError):
    pass


class MixedLayers(AnalysisError):
    pass


class MixedGeometry(AnalysisError):
    pass


class LayerMismatch(AnalysisError):
    pass


class SheetExceedsTotal(AnalysisError):
    pass


class InsufficientWidths(AnalysisError):
    pass


class DegenerateFit(AnalysisError):
    pass


class TooFewSamples(AnalysisError):
    pass


class AreaExceedsTotal(AnalysisError):
    pass


class NoOhmicRegion(AnalysisError):
    pass


class FitDegenerate(AnalysisError):
    pass


class NonPhysical(AnalysisError):
    pass


class InsufficientSpread(AnalysisError):
    pass


class NoConvergence(AnalysisError):
    pass


class OverlappingBins(AnalysisError):
    pass


class NoTransition(AnalysisError):
    pass


class NonDecaying(AnalysisError):
    pass


class AmbiguousDetuning(AnalysisError):
    pass


class UnphysicalP(AnalysisError):
    pass


class InvalidModel(AnalysisError):
    pass


class EmptyMap(AnalysisError):
    pass
