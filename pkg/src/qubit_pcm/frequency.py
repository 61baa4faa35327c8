"""Qubit frequency from junction normal-state resistance.

    f01 = sqrt( 0.882 * k_B * Tc / (h * Cq * Rn) ) - e^2 / (2 * h * Cq)

The first term is the Josephson/charging plasma frequency with the
Ambegaokar-Baratoff critical current; the second is the charging energy.
``Tc`` is treated as an effective calibration parameter fitted on
(Rn, f01) pairs with ``Cq`` held at its design value.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize

from .errors import (InsufficientSpread, InvalidModel, NonPhysical, NoConvergence, NoTransition,
                     OverlappingBins)
from .model import CryoRecord, TransitionTrace

# SI 2019 exact values (identical in CODATA 2018)
K_B = 1.380649e-23
H = 6.62607015e-34
E_CHARGE = 1.602176634e-19
AB_PREFACTOR = 0.882

MODEL_SCHEMA_VERSION = 1


class Provenance(str, Enum):
    FITTED = "FITTED"
    ASSUMED = "ASSUMED"


@dataclass(frozen=True)
class AbModel:
    t_c: float = 0.71
    c_q: float = 86e-15
    provenance: Provenance = Provenance.ASSUMED
    rn_offset_ohm: float = 0.0
    fit: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.t_c < 2:
            raise InvalidModel(f"t_c={self.t_c} K outside (0, 2)")
        if not self.c_q > 0:
            raise InvalidModel(f"c_q={self.c_q} must be positive")

    @property
    def charging_hz(self) -> float:
        return E_CHARGE ** 2 / (2 * H * self.c_q)

    @property
    def plasma_coefficient(self) -> float:
        """``A`` in ``f01 = A / sqrt(Rn) - charging``; units Hz * sqrt(ohm)."""
        return math.sqrt(AB_PREFACTOR * K_B * self.t_c / (H * self.c_q))

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "t_c_k": self.t_c,
            "c_q_f": self.c_q,
            "rn_offset_ohm": self.rn_offset_ohm,
            "provenance": self.provenance.value,
            "constants": {"k_B": K_B, "h": H, "e": E_CHARGE, "prefactor": AB_PREFACTOR},
            "fit": self.fit,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AbModel":
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise InvalidModel(f"unsupported model schema_version {d.get('schema_version')!r}")
        return cls(float(d["t_c_k"]), float(d["c_q_f"]), Provenance(d["provenance"]),
                   float(d.get("rn_offset_ohm", 0.0)), d.get("fit"))


def save_model(model: AbModel, path: Path | str) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


def load_model(path: Path | str) -> AbModel:
    try:
        return AbModel.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidModel(f"cannot load model: {exc}", source=str(path)) from None


def predict_f01(rn_ohm: float, model: AbModel) -> float:
    rn = rn_ohm + model.rn_offset_ohm
    if not rn > 0:
        raise NonPhysical(f"effective resistance {rn} ohm is not positive")
    f = model.plasma_coefficient / math.sqrt(rn) - model.charging_hz
    if not f > 0:
        raise NonPhysical(f"Rn={rn_ohm} ohm gives non-positive f01 ({f:.4g} Hz)")
    return f


def target_resistance(f01_hz: float, model: AbModel) -> float:
    """Resistance whose predicted frequency is ``f01_hz``."""
    if not f01_hz > 0:
        raise NonPhysical(f"f01={f01_hz} Hz must be positive")
    root = f01_hz + model.charging_hz
    rn = (model.plasma_coefficient / root) ** 2 - model.rn_offset_ohm
    if not rn > 0:
        raise NonPhysical(f"no positive resistance reaches f01={f01_hz} Hz")
    return rn


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TcFit:
    model: AbModel
    residuals_hz: tuple[float, ...]
    rms_hz: float
    relative_rms: float
    n: int

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "residuals_hz": list(self.residuals_hz),
                "rms_hz": self.rms_hz, "relative_rms": self.relative_rms, "n": self.n}


def _usable(records: Iterable[CryoRecord]) -> tuple[np.ndarray, np.ndarray]:
    recs = sorted((r for r in records if r.f01_hz is not None),
                  key=lambda r: (r.rn_ohm, r.f01_hz, r.chip_id, r.qubit_id))
    return (np.array([r.rn_ohm for r in recs], dtype=float),
            np.array([r.f01_hz for r in recs], dtype=float))


def fit_tc(records: Sequence[CryoRecord], c_q: float = 86e-15, *, rn_offset_ohm: float = 0.0,
           fit_cq: bool = False, min_records: int = 5, min_spread: float = 1.5,
           t_c_bounds: tuple[float, float] = (1e-3, 1.999)) -> TcFit:
    """Least-squares calibration of Tc on measured (Rn, f01) pairs.

    Records are sorted before fitting so the result does not depend on
    their order.  With ``fit_cq`` the capacitance is fitted jointly.
    """
    rn, f = _usable(records)
    if len(rn) < min_records:
        raise InsufficientSpread(f"need >= {min_records} records with f01, got {len(rn)}")
    if rn.max() < min_spread * rn.min():
        raise InsufficientSpread(
            f"Rn spans {rn.max() / rn.min():.3f}x; need >= {min_spread}x")
    rn_eff = rn + rn_offset_ohm
    if np.any(rn_eff <= 0):
        raise NonPhysical("rn_offset_ohm makes some resistances non-positive")

    def resid(t_c: float, cq: float) -> np.ndarray:
        a = math.sqrt(AB_PREFACTOR * K_B * t_c / (H * cq))
        return a / np.sqrt(rn_eff) - E_CHARGE ** 2 / (2 * H * cq) - f

    if fit_cq:
        scale = np.array([1.0, 1e-13])
        sol = optimize.least_squares(lambda p: resid(*(p * scale)) / f.mean(),
                                     x0=np.array([0.7, c_q / 1e-13]), method="lm",
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if not sol.success:
            raise NoConvergence(f"joint (Tc, Cq) fit failed: {sol.message}")
        t_c, c_q = (sol.x * scale).tolist()
    else:
        # The squared-residual sum is convex in sqrt(Tc); its stationary point
        # is bracketed on the search interval and located to machine precision.
        lo, hi = t_c_bounds
        s = np.sqrt(AB_PREFACTOR * K_B / (H * c_q * rn_eff))

        def gradient(t_c: float) -> float:
            return float(np.sum(resid(t_c, c_q) * s)) / (2 * math.sqrt(t_c))

        g_lo, g_hi = gradient(lo), gradient(hi)
        if not (g_lo < 0 < g_hi):
            raise NoConvergence(f"Tc optimum is not bracketed by [{lo}, {hi}] K")
        try:
            t_c = optimize.brentq(gradient, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps,
                                  maxiter=500)
        except (RuntimeError, ValueError) as exc:
            raise NoConvergence(f"Tc search failed: {exc}") from None
    r = resid(t_c, c_q)
    rms = float(math.sqrt(np.mean(r ** 2)))
    fit_info = {"n": int(len(rn)), "rms_hz": rms, "relative_rms": rms / float(f.mean()),
                "fit_cq": fit_cq}
    try:
        model = AbModel(t_c, c_q, Provenance.FITTED, rn_offset_ohm, fit_info)
    except InvalidModel as exc:
        raise NoConvergence(f"fit left the valid domain: {exc.reason}") from None
    return TcFit(model, tuple(float(x) for x in r), rms, rms / float(f.mean()), int(len(rn)))


def fit_tc_closed_form(rn: Sequence[float], f01: Sequence[float], c_q: float) -> float:
    """Tc from the linear least-squares solution in sqrt(Tc).

    Residuals are linear in ``sqrt(Tc)``, so the 1-D problem has a closed
    form; used as an independent cross-check of :func:`fit_tc`.
    """
    rn = np.asarray(rn, dtype=float)
    f = np.asarray(f01, dtype=float)
    s = np.sqrt(AB_PREFACTOR * K_B / (H * c_q * rn))
    c = E_CHARGE ** 2 / (2 * H * c_q)
    root = float(np.sum(s * (f + c)) / np.sum(s * s))
    return root * root


# --------------------------------------------------------------------------
# binning
# --------------------------------------------------------------------------

REJECT = "REJECT"


@dataclass(frozen=True)
class FrequencyBin:
    label: str
    lo_hz: float
    hi_hz: float

    def contains(self, f: float) -> bool:
        return self.lo_hz <= f < self.hi_hz


def tolerance_bins(target_hz: float, tolerance: float, n_bins: int) -> list[FrequencyBin]:
    """``n_bins`` equal bins covering ``target * (1 +- tolerance)``."""
    lo, hi = target_hz * (1 - tolerance), target_hz * (1 + tolerance)
    edges = np.linspace(lo, hi, n_bins + 1)
    return [FrequencyBin(f"B{k + 1}", float(edges[k]), float(edges[k + 1]))
            for k in range(n_bins)]


@dataclass(frozen=True)
class ChipBin:
    chip_id: str
    predicted_hz: tuple[tuple[str, float | None], ...]   # (qubit_id, f01) ; None = non-physical
    bin: str


@dataclass(frozen=True)
class BinningReport:
    target_hz: float
    bins: tuple[FrequencyBin, ...]
    chips: tuple[ChipBin, ...]
    counts: dict[str, int]
    predicted_spread: float
    predicted_mean_hz: float
    measured_spread: float | None = None
    prediction_rms_hz: float | None = None

    def to_dict(self) -> dict:
        return {
            "target_hz": self.target_hz,
            "bins": [[b.label, b.lo_hz, b.hi_hz] for b in self.bins],
            "chips": [{"chip_id": c.chip_id, "bin": c.bin,
                       "predicted_hz": [[q, f] for q, f in c.predicted_hz]} for c in self.chips],
            "counts": dict(self.counts),
            "predicted_spread": self.predicted_spread,
            "predicted_mean_hz": self.predicted_mean_hz,
            "measured_spread": self.measured_spread,
            "prediction_rms_hz": self.prediction_rms_hz,
        }


def frequency_spread(values: Sequence[float]) -> float:
    """Relative spread (sample std / mean) of a set of frequencies."""
    a = np.asarray(values, dtype=float)
    if a.size < 2:
        return 0.0
    return float(np.std(a, ddof=1) / np.mean(a))


def _check_bins(bins: Sequence[FrequencyBin]) -> list[FrequencyBin]:
    ordered = sorted(bins, key=lambda b: b.lo_hz)
    for b in ordered:
        if not b.hi_hz > b.lo_hz:
            raise OverlappingBins(f"bin {b.label} is empty or inverted")
    for a, b in zip(ordered, ordered[1:]):
        if b.lo_hz < a.hi_hz:
            raise OverlappingBins(f"bins {a.label} and {b.label} overlap")
    return ordered


def bin_chips(chips: Mapping[str, Sequence[tuple[str, float]]], model: AbModel,
              target_f01: float, bins: Sequence[FrequencyBin], *,
              policy: str = "all") -> BinningReport:
    """Assign every chip to a frequency bin from its junction resistances.

    ``policy="all"`` puts a chip in a bin only when every qubit lands in that
    bin; ``policy="mean"`` uses the chip's mean predicted frequency.
    """
    if policy not in ("all", "mean"):
        raise ValueError(f"unknown policy {policy!r}")
    ordered = _check_bins(bins)

    def which(f: float) -> str:
        return next((b.label for b in ordered if b.contains(f)), REJECT)

    out = []
    counts = {b.label: 0 for b in ordered}
    counts[REJECT] = 0
    all_f = []
    for chip_id in sorted(chips):
        preds: list[tuple[str, float | None]] = []
        for qubit_id, rn in sorted(chips[chip_id]):
            try:
                f = predict_f01(rn, model)
                all_f.append(f)
            except NonPhysical:
                f = None
            preds.append((qubit_id, f))
        good = [f for _, f in preds if f is not None]
        if not good or len(good) != len(preds):
            label = REJECT
        elif policy == "mean":
            label = which(float(np.mean(good)))
        else:
            labels = {which(f) for f in good}
            label = labels.pop() if len(labels) == 1 else REJECT
        counts[label] += 1
        out.append(ChipBin(chip_id, tuple(preds), label))
    return BinningReport(target_f01, tuple(ordered), tuple(out), counts,
                         frequency_spread(all_f),
                         float(np.mean(all_f)) if all_f else math.nan)


def chips_from_records(records: Iterable[CryoRecord]) -> dict[str, list[tuple[str, float]]]:
    chips: dict[str, list[tuple[str, float]]] = defaultdict(list)
    for r in records:
        chips[r.chip_id].append((r.qubit_id, r.rn_ohm))
    return dict(chips)


def with_measurements(report: BinningReport, records: Sequence[CryoRecord],
                      model: AbModel) -> BinningReport:
    """Attach measured frequency spread and prediction error to a binning report."""
    measured = [r for r in records if r.f01_hz is not None]
    if not measured:
        return report
    errs = [predict_f01(r.rn_ohm, model) - r.f01_hz for r in measured]
    return replace(report,
                   measured_spread=frequency_spread([r.f01_hz for r in measured]),
                   prediction_rms_hz=float(math.sqrt(np.mean(np.square(errs)))))


# --------------------------------------------------------------------------
# superconducting transition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionTemps:
    t_onset: float
    t_zero: float
    r_normal: float

    def to_dict(self) -> dict:
        return {"t_onset_k": self.t_onset, "t_zero_k": self.t_zero,
                "r_normal_ohm": self.r_normal}


def transition_temps(trace: TransitionTrace, zero_threshold: float | None = None,
                     onset_fraction: float = 0.9) -> TransitionTemps:
    """Onset and full-transition temperatures of an R(T) trace.

    The normal plateau is the median resistance of the warmest 10 % of
    points (at least 3).  ``zero_threshold`` defaults to 1 % of it.
    """
    t = np.asarray(trace.temperature_k)
    r = np.asarray(trace.resistance_ohm)
    n_top = max(3, len(t) // 10)
    r_normal = float(np.median(r[:n_top]))
    if not r_normal > 0:
        raise NoTransition("normal-state plateau is not positive")
    if zero_threshold is None:
        zero_threshold = 0.01 * r_normal
    below_onset = np.nonzero(r < onset_fraction * r_normal)[0]
    below_zero = np.nonzero(r < zero_threshold)[0]
    if below_onset.size == 0 or below_zero.size == 0:
        raise NoTransition("trace does not reach the superconducting state")
    # temperatures are descending, so the first index is the highest T
    return TransitionTemps(float(t[below_onset[0]]), float(t[below_zero[0]]), r_normal)
