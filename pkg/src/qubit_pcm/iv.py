"""IV-trace analysis: power-law regimes and breakthrough voltage.

The sub-breakthrough part of a sweep is described by ``I ~ V^m``.  An
ohmic (direct tunneling) regime with ``m ~ 1`` at low bias is followed by
a superlinear trap-assisted regime with ``m > 2``.  The regimes are
located by a two-segment least-squares search in log-log space; the
junction resistance comes from a zero-intercept fit of I versus V over
the ohmic window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import FitDegenerate, NoOhmicRegion, TooFewSamples
from .model import Filter, IVTrace, StatSummary, summarize

__all__ = [
    "IVConfig", "Regime", "RegimeFit", "Detection", "BreakthroughResult",
    "detect_breakthrough", "segment_and_fit", "analyze_trace", "VbtStats", "vbt_stats",
    "IVTrace",
]


@dataclass(frozen=True)
class IVConfig:
    m_tol: float = 0.15
    trap_min_m: float = 2.0
    jump_ratio: float = 5.0
    noise_floor_a: float = 1e-11
    min_window: int = 4
    min_points: int = 8


class Regime(str, Enum):
    DIRECT = "DIRECT"
    TRAP_ASSISTED = "TRAP_ASSISTED"


@dataclass(frozen=True)
class RegimeFit:
    regime: Regime
    v_lo: float
    v_hi: float
    m: float
    prefactor: float
    r_squared: float
    n_points: int
    r_jj_ohm: float | None = None
    r_jj_mean_ohm: float | None = None   # mean of V/I, cross-check only

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "v_range": [self.v_lo, self.v_hi],
            "m": self.m,
            "prefactor": self.prefactor,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "r_jj_ohm": self.r_jj_ohm,
        }


class Detection(str, Enum):
    CURRENT_JUMP = "CURRENT_JUMP"
    COMPLIANCE_HIT = "COMPLIANCE_HIT"
    NONE = "NONE"


@dataclass(frozen=True)
class BreakthroughResult:
    v_bt: float | None
    detection: Detection
    index: int | None = None    # index of v_bt in the trace

    def to_dict(self) -> dict:
        return {"v_bt": self.v_bt, "detection": self.detection.value}


def detect_breakthrough(trace: IVTrace, config: IVConfig = IVConfig()) -> BreakthroughResult:
    """Last voltage before the first current jump or compliance hit."""
    i = np.abs(trace.i)
    v = trace.voltage_v
    limit = trace.compliance_a * (1 - 1e-9)
    if i[0] >= limit:
        return BreakthroughResult(v[0], Detection.COMPLIANCE_HIT, 0)
    for k in range(len(i) - 1):
        if i[k] > 0 and i[k] >= config.noise_floor_a and i[k + 1] > config.jump_ratio * i[k]:
            return BreakthroughResult(v[k], Detection.CURRENT_JUMP, k)
        if i[k + 1] >= limit:
            return BreakthroughResult(v[k], Detection.COMPLIANCE_HIT, k)
    return BreakthroughResult(None, Detection.NONE, None)


class _Prefix:
    """Prefix sums for O(1) least-squares line fits over index ranges."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        z = np.zeros(1)
        self.n = np.arange(len(x) + 1, dtype=float)
        self.sx = np.concatenate([z, np.cumsum(x)])
        self.sy = np.concatenate([z, np.cumsum(y)])
        self.sxx = np.concatenate([z, np.cumsum(x * x)])
        self.sxy = np.concatenate([z, np.cumsum(x * y)])
        self.syy = np.concatenate([z, np.cumsum(y * y)])

    def sse(self, a: np.ndarray | int, b: np.ndarray | int):
        n = self.n[b] - self.n[a]
        sx = self.sx[b] - self.sx[a]
        sy = self.sy[b] - self.sy[a]
        cxx = self.sxx[b] - self.sxx[a] - sx * sx / n
        cxy = self.sxy[b] - self.sxy[a] - sx * sy / n
        cyy = self.syy[b] - self.syy[a] - sy * sy / n
        return np.maximum(cyy - cxy * cxy / cxx, 0.0)


def _line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Slope, intercept and r^2 of an ordinary least-squares line."""
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 0:
        raise FitDegenerate("window has no voltage spread")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    icpt = float(ym - slope * xm)
    syy = float(np.sum((y - ym) ** 2))
    sse = float(np.sum((y - icpt - slope * x) ** 2))
    r2 = 1.0 - sse / syy if syy > 0 else 1.0
    return slope, icpt, r2


def _fit(regime: Regime, v: np.ndarray, i: np.ndarray) -> RegimeFit:
    x, y = np.log(v), np.log(np.abs(i))
    m, b, r2 = _line(x, y)
    r_jj = r_jj_mean = None
    if regime is Regime.DIRECT:
        # zero-intercept fit of I = V / R
        r_jj = float(np.sum(v * v) / np.sum(v * i))
        r_jj_mean = float(np.mean(v / i))
    return RegimeFit(regime, float(v[0]), float(v[-1]), m, math.exp(b), r2, len(v),
                     r_jj, r_jj_mean)


def segment_and_fit(trace: IVTrace, config: IVConfig = IVConfig(),
                    breakthrough: BreakthroughResult | None = None) -> list[RegimeFit]:
    if breakthrough is None:
        breakthrough = detect_breakthrough(trace, config)
    stop = len(trace) if breakthrough.index is None else breakthrough.index + 1
    v = trace.v[:stop]
    i = trace.i[:stop]
    keep = (v > 0) & (np.abs(i) >= config.noise_floor_a)
    v, i = v[keep], i[keep]
    if len(v) < config.min_points:
        raise FitDegenerate(
            f"{len(v)} usable points below breakthrough; need >= {config.min_points}")
    if np.any(i <= 0):
        raise FitDegenerate("non-positive current at positive bias")
    x, y = np.log(v), np.log(i)
    n = len(x)
    w = config.min_window
    whole = _fit(Regime.DIRECT, v, i)

    best = None
    if n >= 2 * w:
        pre = _Prefix(x, y)
        cuts = np.arange(w, n - w + 1)
        total = pre.sse(0, cuts) + pre.sse(cuts, n)
        best = int(cuts[int(np.argmin(total))])

    tol = config.m_tol
    if best is not None:
        low = _fit(Regime.DIRECT, v[:best], i[:best])
        high = _fit(Regime.TRAP_ASSISTED, v[best:], i[best:])
        if high.m > config.trap_min_m and abs(low.m - 1) <= tol:
            return [low, high]
        if abs(whole.m - 1) <= tol:
            return [whole]
        if abs(low.m - 1) <= tol:
            return [low]
    elif abs(whole.m - 1) <= tol:
        return [whole]
    raise NoOhmicRegion(
        f"no low-bias window with |m - 1| <= {tol} (whole-trace m = {whole.m:.3f})")


@dataclass(frozen=True)
class TraceAnalysis:
    junction_id: str
    area_um2: float
    fits: tuple[RegimeFit, ...]
    breakthrough: BreakthroughResult
    error: str | None = None

    def regime(self, regime: Regime) -> RegimeFit | None:
        return next((f for f in self.fits if f.regime is regime), None)

    def to_dict(self) -> dict:
        return {
            "junction_id": self.junction_id,
            "area_um2": self.area_um2,
            "fits": [f.to_dict() for f in self.fits],
            "breakthrough": self.breakthrough.to_dict(),
            "error": self.error,
        }


def analyze_trace(trace: IVTrace, config: IVConfig = IVConfig()) -> TraceAnalysis:
    """Breakthrough plus regime fits; fit failures are recorded, not raised."""
    bt = detect_breakthrough(trace, config)
    try:
        fits = tuple(segment_and_fit(trace, config, bt))
        err = None
    except (NoOhmicRegion, FitDegenerate) as exc:
        fits, err = (), f"{type(exc).__name__}: {exc.reason}"
    return TraceAnalysis(trace.junction_id, trace.area_um2, fits, bt, err)


@dataclass(frozen=True)
class VbtStats:
    per_size: dict[float, StatSummary]
    pooled: StatSummary
    max_mean_difference: float
    overlap_factor: float

    @property
    def area_dependent(self) -> bool:
        return self.max_mean_difference > self.overlap_factor * self.pooled.std

    @property
    def verdict(self) -> str:
        return ("significant dependence" if self.area_dependent
                else "no significant dependence")

    def to_dict(self) -> dict:
        return {
            "per_size": [{"area_um2": a, **s.to_dict()} for a, s in self.per_size.items()],
            "pooled": self.pooled.to_dict(),
            "max_mean_difference_v": self.max_mean_difference,
            "overlap_factor": self.overlap_factor,
            "area_dependent": self.area_dependent,
            "verdict": self.verdict,
        }


def vbt_stats(groups: Mapping[float, Sequence[float]], overlap_factor: float = 0.5,
              min_per_size: int = 10) -> VbtStats:
    """Per-size and pooled breakthrough statistics.

    Area dependence is declared when the largest pairwise difference of
    per-size means exceeds ``overlap_factor`` times the pooled std.
    """
    if len(groups) < 2:
        raise TooFewSamples(f"need >= 2 junction sizes, got {len(groups)}")
    per_size = {}
    for area in sorted(groups):
        vals = list(groups[area])
        if len(vals) < min_per_size:
            raise TooFewSamples(f"size {area} um^2 has {len(vals)} traces; need >= {min_per_size}")
        per_size[area] = summarize(vals, Filter.NONE)
    pooled = summarize([x for a in sorted(groups) for x in groups[a]], Filter.NONE)
    means = [s.mean for s in per_size.values()]
    return VbtStats(per_size, pooled, max(means) - min(means), overlap_factor)
