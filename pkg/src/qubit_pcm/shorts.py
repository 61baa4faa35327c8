"""Metal-structuring variability from shorts and sheet-resistance maps.

A short of design width ``w_D`` and length ``L`` has ``R = R_sq * L / w``
with the fabricated width ``w = w_D - dw``.  Resistance spread of shorts
therefore combines sheet-resistance spread and width spread; removing the
former in variance space leaves the width RSD.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (DegenerateFit, EmptyInput, InsufficientWidths, InvalidParams,
                     LayerMismatch, MixedGeometry, MixedLayers, SheetExceedsTotal)
from .model import Filter, Layer, SheetSample, ShortRecord, ShortStatus, StatSummary, summarize


@dataclass(frozen=True)
class SheetUniformity:
    layer: Layer
    summary: StatSummary
    # (site_index, x_mm, y_mm, R_sq / mean R_sq)
    normalized: tuple[tuple[int, float, float, float], ...]

    def to_dict(self) -> dict:
        return {
            "layer": self.layer.value,
            "summary": self.summary.to_dict(),
            "normalized": [list(t) for t in self.normalized],
        }


def sheet_stats(samples: Sequence[SheetSample], filter: Filter = Filter.NONE) -> SheetUniformity:
    if len(samples) < 2:
        raise EmptyInput(f"need >= 2 sheet samples, got {len(samples)}")
    layers = {s.layer for s in samples}
    if len(layers) > 1:
        raise MixedLayers(f"sheet samples span layers {sorted(l.value for l in layers)}")
    summary = summarize([s.sheet_resistance_ohm_sq for s in samples], filter)
    ordered = sorted(samples, key=lambda s: s.site_index)
    normalized = tuple((s.site_index, s.x_mm, s.y_mm, s.sheet_resistance_ohm_sq / summary.mean)
                       for s in ordered)
    return SheetUniformity(layers.pop(), summary, normalized)


@dataclass(frozen=True)
class WidthVariability:
    layer: Layer
    design_width_nm: float
    rsd_r: float
    rsd_sheet: float
    rsd_w: float
    summary: StatSummary | None = None
    n_not_ok: int = 0

    def to_dict(self) -> dict:
        return {
            "layer": self.layer.value,
            "design_width_nm": self.design_width_nm,
            "rsd_r": self.rsd_r,
            "rsd_sheet": self.rsd_sheet,
            "rsd_w": self.rsd_w,
            "n_not_ok": self.n_not_ok,
            "summary": self.summary.to_dict() if self.summary else None,
        }


def width_rsd_value(rsd_r: float, rsd_sheet: float) -> float:
    """Width RSD left after removing sheet-resistance spread in quadrature."""
    if rsd_sheet < 0 or rsd_r < 0:
        raise InvalidParams("RSDs must be non-negative")
    if rsd_sheet > rsd_r:
        raise SheetExceedsTotal(
            f"sheet RSD {rsd_sheet:.4g} exceeds shorts resistance RSD {rsd_r:.4g}")
    return math.sqrt(rsd_r * rsd_r - rsd_sheet * rsd_sheet)


def width_rsd(shorts: Iterable[ShortRecord], rsd_sheet: float,
              filter: Filter = Filter.IQR_1_5) -> WidthVariability:
    """Width RSD for one population of shorts (one layer, one design width).

    Shorts with status other than OK are dropped and counted.
    """
    shorts = list(shorts)
    if not shorts:
        raise EmptyInput("no shorts given")
    layers = {s.layer for s in shorts}
    if len(layers) > 1:
        raise MixedGeometry(f"shorts span layers {sorted(l.value for l in layers)}")
    geometry = {(s.design_width_nm, s.design_length_um) for s in shorts}
    if len(geometry) > 1:
        raise MixedGeometry(f"shorts span {len(geometry)} (width, length) designs")
    ok = [s.resistance_ohm for s in shorts if s.status is ShortStatus.OK]
    if len(ok) < 2:
        raise EmptyInput(f"need >= 2 OK shorts, got {len(ok)}")
    summary = summarize(ok, filter)
    rsd_w = width_rsd_value(summary.rsd, rsd_sheet)
    return WidthVariability(layers.pop(), shorts[0].design_width_nm, summary.rsd, rsd_sheet,
                            rsd_w, summary, len(shorts) - len(ok))


def area_rsd(be: WidthVariability, te: WidthVariability) -> float:
    if be.layer is not Layer.BE or te.layer is not Layer.TE:
        raise LayerMismatch(f"expected (BE, TE), got ({be.layer.value}, {te.layer.value})")
    return area_rsd_value(be.rsd_w, te.rsd_w)


def area_rsd_value(rsd_w_be: float, rsd_w_te: float) -> float:
    return math.hypot(rsd_w_be, rsd_w_te)


# --------------------------------------------------------------------------
# design-width offset
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WidthGroup:
    """Across-wafer mean resistance of all shorts with one design width."""

    design_width_nm: float
    mean_r: float
    se_r: float
    n: int
    n_excluded: int = 0


@dataclass(frozen=True)
class OffsetFit:
    layer: Layer
    delta_w_nm: float
    delta_w_se_nm: float
    slope: float          # nm * ohm
    r_squared: float
    n_widths: int
    weighted: bool = True

    def to_dict(self) -> dict:
        return {
            "layer": self.layer.value,
            "delta_w_nm": self.delta_w_nm,
            "delta_w_se_nm": self.delta_w_se_nm,
            "slope_nm_ohm": self.slope,
            "r_squared": self.r_squared,
            "n_widths": self.n_widths,
            "weighted": self.weighted,
        }


def group_by_width(shorts: Iterable[ShortRecord], layer: Layer,
                   filter: Filter = Filter.IQR_1_5) -> list[WidthGroup]:
    by_width: dict[float, list[float]] = defaultdict(list)
    dropped: dict[float, int] = defaultdict(int)
    for s in shorts:
        if s.layer is not layer:
            continue
        if s.status is ShortStatus.OK:
            by_width[s.design_width_nm].append(s.resistance_ohm)
        else:
            dropped[s.design_width_nm] += 1
    groups = []
    for w in sorted(by_width):
        values = by_width[w]
        if len(values) < 2:
            continue
        st = summarize(values, filter)
        groups.append(WidthGroup(w, st.mean, st.mean_standard_error, st.n,
                                 st.n_excluded + dropped[w]))
    return groups


def width_offset(groups: Sequence[WidthGroup], layer: Layer, weighted: bool = True) -> OffsetFit:
    """Fit ``w_D = dw + k / R_mean`` across design widths.

    Points are weighted by ``1 / SE(1/R_mean)^2`` when ``weighted``.  The
    standard error of ``dw`` comes from the covariance scaled by the
    reduced chi-square, so it reflects the scatter about the line.
    """
    widths = {g.design_width_nm for g in groups}
    if len(widths) < 3 or len(widths) != len(groups):
        raise InsufficientWidths(f"need >= 3 distinct design widths, got {len(widths)}")
    y = np.array([g.design_width_nm for g in groups], dtype=float)
    x = np.array([1.0 / g.mean_r for g in groups], dtype=float)
    if np.ptp(x) <= 1e-12 * np.max(np.abs(x)):
        raise DegenerateFit("all inverse mean resistances are equal")
    if weighted:
        se_x = np.array([g.se_r / g.mean_r ** 2 for g in groups], dtype=float)
        if np.any(se_x <= 0) or not np.all(np.isfinite(se_x)):
            # zero spread in some group; fall back to equal weights
            wts = np.ones_like(x)
        else:
            wts = 1.0 / se_x ** 2
    else:
        wts = np.ones_like(x)
    # normalizing weights does not change estimates or the scaled covariance
    wts = wts / wts.sum()
    xm = np.sum(wts * x)
    ym = np.sum(wts * y)
    sxx = np.sum(wts * (x - xm) ** 2)
    sxy = np.sum(wts * (x - xm) * (y - ym))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    n = len(y)
    chi2 = float(np.sum(wts * resid ** 2))
    s2 = chi2 / (n - 2)
    # Var(intercept) for weighted LS with weights normalized to sum 1
    var_b = s2 * (1.0 + xm ** 2 / sxx)
    syy = float(np.sum(wts * (y - ym) ** 2))
    r2 = 1.0 - chi2 / syy if syy > 0 else 1.0
    return OffsetFit(layer, float(intercept), float(math.sqrt(max(var_b, 0.0))), float(slope),
                     float(min(max(r2, 0.0), 1.0)), n, weighted)
