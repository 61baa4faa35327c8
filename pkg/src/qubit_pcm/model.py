"""Shared data model: wafer geometry, measurement records and statistics.

Measured physical quantities (resistance, voltage, current, frequency,
temperature, time) are stored in SI base units.  Design geometry labels
(line widths in nm, lengths in um, junction areas in um^2) keep the units
they carry in their field names; they are labels from the layout, not
measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInput, InvalidParams, NonPositiveMean

WAFER_RADIUS_MM = 100.0


class Layer(str, Enum):
    BE = "BE"
    TE = "TE"


class ShortStatus(str, Enum):
    OK = "OK"
    OPEN = "OPEN"
    SHORTED_FAIL = "SHORTED_FAIL"
    OUT_OF_RANGE = "OUT_OF_RANGE"


class JunctionStatus(str, Enum):
    OK = "OK"
    OPEN = "OPEN"
    SHORTED_FAIL = "SHORTED_FAIL"


class Filter(str, Enum):
    NONE = "NONE"
    IQR_1_5 = "IQR_1_5"


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class DieSite:
    row: int
    col: int
    x_mm: float = field(compare=False)
    y_mm: float = field(compare=False)
    complete: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.radius_mm > WAFER_RADIUS_MM + 1e-9:
            raise ValueError(
                f"die ({self.row}, {self.col}) center at r={self.radius_mm:.3f} mm is off the wafer")

    @property
    def radius_mm(self) -> float:
        return math.hypot(self.x_mm, self.y_mm)

    @property
    def key(self) -> tuple[int, int]:
        return (self.row, self.col)


@dataclass(frozen=True)
class WaferGeometry:
    """Rectangular die grid on a round wafer.

    Die (row, col) has its center at
    ``x = (col - origin_col) * die_width_mm`` and
    ``y = (origin_row - row) * die_height_mm`` (row 0 is the top of the map).
    """

    die_width_mm: float = 10.0
    die_height_mm: float = 7.0
    diameter_mm: float = 200.0
    n_rows: int = 29
    n_cols: int = 20
    edge_exclusion_mm: float = 0.0

    @property
    def radius_mm(self) -> float:
        return self.diameter_mm / 2.0

    @property
    def origin_row(self) -> float:
        return (self.n_rows - 1) / 2.0

    @property
    def origin_col(self) -> float:
        return (self.n_cols - 1) / 2.0

    def center(self, row: int, col: int) -> tuple[float, float]:
        x = (col - self.origin_col) * self.die_width_mm
        y = (self.origin_row - row) * self.die_height_mm
        return x, y

    def is_complete(self, row: int, col: int) -> bool:
        x, y = self.center(row, col)
        r = self.radius_mm - self.edge_exclusion_mm
        hw, hh = self.die_width_mm / 2.0, self.die_height_mm / 2.0
        return all(math.hypot(x + sx * hw, y + sy * hh) <= r + 1e-12
                   for sx in (-1, 1) for sy in (-1, 1))

    def site(self, row: int, col: int) -> DieSite:
        x, y = self.center(row, col)
        if math.hypot(x, y) > self.radius_mm:
            raise ValueError(f"die ({row}, {col}) is off the wafer")
        return DieSite(row, col, x, y, self.is_complete(row, col))

    def locate(self, x_mm: float, y_mm: float) -> DieSite:
        """Die containing the wafer point (x, y)."""
        col = int(math.floor(x_mm / self.die_width_mm + self.origin_col + 0.5))
        row = int(math.floor(self.origin_row - y_mm / self.die_height_mm + 0.5))
        return self.site(row, col)

    def sites(self, complete_only: bool = True) -> list[DieSite]:
        out = []
        for row in range(self.n_rows):
            for col in range(self.n_cols):
                x, y = self.center(row, col)
                if math.hypot(x, y) > self.radius_mm:
                    continue
                s = DieSite(row, col, x, y, self.is_complete(row, col))
                if s.complete or not complete_only:
                    out.append(s)
        return out

    def to_dict(self) -> dict:
        return {
            "die_width_mm": self.die_width_mm,
            "die_height_mm": self.die_height_mm,
            "diameter_mm": self.diameter_mm,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "edge_exclusion_mm": self.edge_exclusion_mm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WaferGeometry":
        return cls(**d)


# --------------------------------------------------------------------------
# measurement records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ShortRecord:
    site: DieSite
    structure_id: str
    layer: Layer
    design_width_nm: float
    design_length_um: float
    resistance_ohm: float
    status: ShortStatus = ShortStatus.OK

    def __post_init__(self):
        if self.status is ShortStatus.OK and not self.resistance_ohm > 0:
            raise ValueError("resistance_ohm must be > 0 for status OK")
        if not 350.0 <= self.design_width_nm <= 1000.0:
            raise ValueError(f"design_width_nm {self.design_width_nm} outside [350, 1000]")


@dataclass(frozen=True)
class SheetSample:
    site_index: int
    x_mm: float
    y_mm: float
    layer: Layer
    sheet_resistance_ohm_sq: float

    def __post_init__(self):
        if not 1 <= self.site_index <= 49:
            raise ValueError(f"site_index {self.site_index} outside 1..49")
        if not self.sheet_resistance_ohm_sq > 0:
            raise ValueError("sheet_resistance_ohm_sq must be > 0")


@dataclass(frozen=True)
class JunctionRecord:
    site: DieSite
    junction_id: str
    design_area_um2: float
    design_width_be_nm: float
    design_width_te_nm: float
    resistance_ohm: float
    status: JunctionStatus = JunctionStatus.OK

    def __post_init__(self):
        if self.status is JunctionStatus.OK and not self.resistance_ohm > 0:
            raise ValueError("resistance_ohm must be > 0 for status OK")
        if not 0.1225 - 1e-12 <= self.design_area_um2 <= 1.0 + 1e-12:
            raise ValueError(f"design_area_um2 {self.design_area_um2} outside [0.1225, 1]")


@dataclass(frozen=True)
class SpecLimits:
    r_min_ohm: float = 100.0
    r_max_ohm: float = 50_000.0

    def __post_init__(self):
        if not 0 < self.r_min_ohm < self.r_max_ohm:
            raise InvalidParams(
                f"spec limits must satisfy 0 < r_min < r_max, got ({self.r_min_ohm}, {self.r_max_ohm})")

    def contains(self, r: float) -> bool:
        # strict on both ends
        return self.r_min_ohm < r < self.r_max_ohm


@dataclass(frozen=True)
class IVTrace:
    """Voltage sweep of one junction; voltages strictly increasing."""

    wafer_id: str
    site: DieSite
    junction_id: str
    area_um2: float
    compliance_a: float
    voltage_v: tuple[float, ...]
    current_a: tuple[float, ...]

    def __post_init__(self):
        if len(self.voltage_v) != len(self.current_a):
            raise ValueError("voltage and current lengths differ")
        v = self.voltage_v
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("voltages must be strictly increasing")

    def __len__(self) -> int:
        return len(self.voltage_v)

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.voltage_v, dtype=float)

    @property
    def i(self) -> np.ndarray:
        return np.asarray(self.current_a, dtype=float)


@dataclass(frozen=True)
class CryoRecord:
    chip_id: str
    qubit_id: str
    rn_ohm: float
    f01_hz: float | None = None
    t1_s: float | None = None
    t2star_s: float | None = None

    def __post_init__(self):
        if not self.rn_ohm > 0:
            raise ValueError("rn_ohm must be > 0")
        if self.f01_hz is not None and not self.f01_hz > 0:
            raise ValueError("f01_hz must be > 0")


@dataclass(frozen=True)
class TransitionTrace:
    """Resistance versus temperature, stored with temperature descending."""

    temperature_k: tuple[float, ...]
    resistance_ohm: tuple[float, ...]

    def __post_init__(self):
        t = self.temperature_k
        if len(t) != len(self.resistance_ohm):
            raise ValueError("temperature and resistance lengths differ")
        if any(b >= a for a, b in zip(t, t[1:])):
            raise ValueError("temperatures must be strictly descending")


class DecayKind(str, Enum):
    T1 = "T1"
    RAMSEY = "RAMSEY"
    RB = "RB"


@dataclass(frozen=True)
class DecayTrace:
    kind: DecayKind
    x: tuple[float, ...]
    y: tuple[float, ...]
    chip_id: str = ""
    qubit_id: str = ""

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("x and y lengths differ")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError("x must be strictly increasing")
        if not all(math.isfinite(v) for v in self.y):
            raise ValueError("y must be finite")


@dataclass(frozen=True)
class WaferDataset:
    wafer_id: str
    geometry: WaferGeometry = WaferGeometry()
    shorts: tuple[ShortRecord, ...] = ()
    sheets: tuple[SheetSample, ...] = ()
    junctions: tuple[JunctionRecord, ...] = ()
    iv_traces: tuple[IVTrace, ...] = ()
    cryo: tuple[CryoRecord, ...] = ()
    transitions: tuple[TransitionTrace, ...] = ()
    decays: tuple[DecayTrace, ...] = ()

    def __post_init__(self):
        seen: dict[tuple[int, int], DieSite] = {}
        for rec in (*self.shorts, *self.junctions, *self.iv_traces):
            s = rec.site
            prev = seen.setdefault(s.key, s)
            if (prev.x_mm, prev.y_mm) != (s.x_mm, s.y_mm):
                raise ValueError(f"die {s.key} has inconsistent coordinates")

    @property
    def sites(self) -> list[DieSite]:
        found = {rec.site.key: rec.site for rec in (*self.shorts, *self.junctions)}
        return [found[k] for k in sorted(found)]


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StatSummary:
    n: int
    mean: float
    std: float
    rsd: float
    n_excluded: int = 0
    filter: Filter = Filter.NONE
    fences: tuple[float, float] | None = None

    @property
    def rsd_standard_error(self) -> float:
        """Large-sample standard error of the RSD estimate."""
        return self.rsd / math.sqrt(2 * self.n) if self.n > 0 else math.nan

    @property
    def mean_standard_error(self) -> float:
        return self.std / math.sqrt(self.n) if self.n > 1 else math.nan

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "std": _nan_to_none(self.std),
            "rsd": _nan_to_none(self.rsd),
            "n_excluded": self.n_excluded,
            "filter": self.filter.value,
            "fences": list(self.fences) if self.fences is not None else None,
        }


def _nan_to_none(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x


def quartiles(values: Sequence[float]) -> tuple[float, float]:
    """First and third quartile, linear interpolation at rank (n-1)*p."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise EmptyInput("no values")
    q1, q3 = np.quantile(a, [0.25, 0.75], method="linear")
    return float(q1), float(q3)


def iqr_fences(values: Sequence[float], k: float = 1.5) -> tuple[float, float]:
    q1, q3 = quartiles(values)
    iqr = q3 - q1
    return q1 - k * iqr, q3 + k * iqr


def iqr_mask(values: Sequence[float], k: float = 1.5) -> np.ndarray:
    """Boolean mask of values inside the Tukey fences (inclusive)."""
    a = np.asarray(values, dtype=float)
    lo, hi = iqr_fences(a, k)
    return (a >= lo) & (a <= hi)


def summarize(values: Iterable[float], filter: Filter = Filter.NONE) -> StatSummary:
    a = np.asarray(list(values), dtype=float)
    if a.size == 0:
        raise EmptyInput("cannot summarize an empty population")
    if not np.all(np.isfinite(a)):
        raise InvalidParams("population contains non-finite values")
    fences = None
    n_excluded = 0
    if filter is Filter.IQR_1_5:
        fences = iqr_fences(a)
        keep = (a >= fences[0]) & (a <= fences[1])
        n_excluded = int(a.size - keep.sum())
        a = a[keep]
    # fsum makes the result independent of record order
    mean = math.fsum(a) / a.size
    # one correction pass removes the rounding of the division, so a
    # constant population has a mean equal to its value and zero spread
    mean += math.fsum(a - mean) / a.size
    if not mean > 0:
        raise NonPositiveMean(f"mean {mean} is not positive; RSD undefined")
    if a.size >= 2:
        std = math.sqrt(math.fsum((a - mean) ** 2) / (a.size - 1))
        rsd = std / mean
    else:
        std = rsd = math.nan
    return StatSummary(n=int(a.size), mean=mean, std=std, rsd=rsd,
                       n_excluded=n_excluded, filter=filter, fences=fences)
