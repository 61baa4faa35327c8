"""Synthetic wafers with known ground truth.

Every generated quantity is ``mean * radial_factor * noise``, where the
radial factor is ``1 + gradient * r / 100 mm`` and the noise is
multiplicative with a prescribed RSD.  The default lognormal noise keeps
RSDs exact under reciprocals and products, so injected width, sheet and
oxide RSDs compose in quadrature (up to a ~1e-5 cross term) in the
resistances built from them.

Randomness is drawn from a per-die generator seeded by ``(seed, row, col,
stream)``; output does not depend on the order in which dies are visited.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ingest
from .errors import InvalidModel, InvalidParams
from .frequency import AbModel, predict_f01
from .model import (CryoRecord, DecayKind, DecayTrace, DieSite, IVTrace, JunctionRecord,
                    JunctionStatus, Layer, SheetSample, ShortRecord, ShortStatus,
                    TransitionTrace, WaferDataset, WaferGeometry)

_STREAM_SHORTS, _STREAM_JUNCTIONS, _STREAM_IV, _STREAM_FAIL, _STREAM_SHEET = range(5)

OPEN_RESISTANCE_OHM = 1e9
SHORTED_RESISTANCE_OHM = 5.0


@dataclass(frozen=True)
class Variation:
    mean: float
    rsd: float = 0.0
    gradient: float = 0.0        # fractional change per 100 mm of radius

    def validate(self, name: str) -> None:
        if not self.mean > 0:
            raise InvalidModel(f"{name}: mean must be positive")
        if self.rsd < 0:
            raise InvalidModel(f"{name}: rsd must be non-negative")


@dataclass(frozen=True)
class LayerModel:
    sheet: Variation              # ohm / square
    width_offset_nm: float = 0.0  # dw, fabricated width w = w_D - dw
    width_rsd: float = 0.0
    width_gradient: float = 0.0

    def validate(self, name: str) -> None:
        self.sheet.validate(f"{name}.sheet")
        if self.width_rsd < 0:
            raise InvalidModel(f"{name}: width_rsd must be non-negative")


@dataclass(frozen=True)
class VariationModel:
    be: LayerModel
    te: LayerModel
    ra: Variation                                   # ohm * um^2
    v_bt: Variation = Variation(1.06, 0.077)        # V
    m_trap: Variation = Variation(2.75, 0.03)
    failure_rate: float = 0.0
    short_failure_rate: float = 0.0
    seed: int = 0
    noise: str = "lognormal"                        # or "gaussian"
    iv_current_noise: float = 0.0
    v_knee: float = 0.3
    compliance_a: float = 0.1
    grid_step_v: float = 0.01

    def validate(self) -> None:
        self.be.validate("be")
        self.te.validate("te")
        self.ra.validate("ra")
        self.v_bt.validate("v_bt")
        self.m_trap.validate("m_trap")
        if not 0 <= self.failure_rate <= 1 or not 0 <= self.short_failure_rate <= 1:
            raise InvalidModel("failure rates must lie in [0, 1]")
        if self.noise not in ("lognormal", "gaussian"):
            raise InvalidModel(f"unknown noise model {self.noise!r}")
        if self.seed < 0:
            raise InvalidModel("seed must be non-negative")

    def layer(self, layer: Layer) -> LayerModel:
        return self.be if layer is Layer.BE else self.te


@dataclass(frozen=True)
class ShortDesign:
    structure_id: str
    layer: Layer
    width_nm: float
    length_um: float = 100.0


@dataclass(frozen=True)
class JunctionDesign:
    junction_id: str
    width_be_nm: float
    width_te_nm: float
    iv: bool = False

    @property
    def area_um2(self) -> float:
        return round(self.width_be_nm * self.width_te_nm * 1e-6, 10)


@dataclass(frozen=True)
class Layout:
    sites: tuple[DieSite, ...]
    shorts: tuple[ShortDesign, ...] = ()
    junctions: tuple[JunctionDesign, ...] = ()
    geometry: WaferGeometry = WaferGeometry()
    sheet_layers: tuple[Layer, ...] = (Layer.BE,)


@dataclass
class GenerationLog:
    resamples: int = 0
    notes: list[str] = field(default_factory=list)


# --------------------------------------------------------------------------
# noise primitives
# --------------------------------------------------------------------------

def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def _noise(rng: np.random.Generator, rsd: float, size: int, kind: str,
           log: GenerationLog | None = None) -> np.ndarray:
    """Unit-mean multiplicative factors with relative std ``rsd``."""
    if rsd == 0:
        return np.ones(size)
    if kind == "lognormal":
        s = math.sqrt(math.log1p(rsd * rsd))
        return np.exp(s * rng.standard_normal(size) - 0.5 * s * s)
    out = 1.0 + rsd * rng.standard_normal(size)
    bad = out <= 0
    while bad.any():
        # rejection keeps the distribution untruncated in the bulk
        if log is not None:
            log.resamples += int(bad.sum())
        out[bad] = 1.0 + rsd * rng.standard_normal(int(bad.sum()))
        bad = out <= 0
    return out


def _radial(var_gradient: float, site_r_mm: float) -> float:
    return 1.0 + var_gradient * site_r_mm / 100.0


def _draw(rng: np.random.Generator, var: Variation, r_mm: float, size: int, kind: str,
          log: GenerationLog | None = None) -> np.ndarray:
    return var.mean * _radial(var.gradient, r_mm) * _noise(rng, var.rsd, size, kind, log)


# --------------------------------------------------------------------------
# layouts
# --------------------------------------------------------------------------

PCM_SHORT_WIDTHS_NM = (350.0, 500.0, 700.0, 1000.0)
PCM_JUNCTION_WIDTHS_NM = (350.0, 500.0, 700.0, 1000.0)


def pcm_layout(sites: Sequence[DieSite], geometry: WaferGeometry = WaferGeometry(), *,
               iv: bool = False) -> Layout:
    """Dicing-street PCM array: 4 widths per layer of shorts and a 4 x 4 set
    of overlap junctions (0.1225 to 1 um^2)."""
    shorts = tuple(ShortDesign(f"{layer.value}{int(w)}", layer, w)
                   for layer in (Layer.BE, Layer.TE) for w in PCM_SHORT_WIDTHS_NM)
    junctions = tuple(JunctionDesign(f"J{int(b)}x{int(t)}", b, t, iv)
                      for b in PCM_JUNCTION_WIDTHS_NM for t in PCM_JUNCTION_WIDTHS_NM)
    return Layout(tuple(sites), shorts, junctions, geometry)


def repeated_layout(sites: Sequence[DieSite], repeats: int,
                    geometry: WaferGeometry = WaferGeometry(), *,
                    be_nm: float = 350.0, te_nm: float = 500.0, iv_every: int = 0) -> Layout:
    """``repeats`` copies per die of a BE short, a TE short and a qubit-size junction.

    With ``iv_every = k`` every k-th junction of a die also gets an IV sweep.
    """
    shorts = tuple(ShortDesign(f"{layer.value}{int(w)}_{k}", layer, w)
                   for k in range(repeats) for layer, w in ((Layer.BE, be_nm), (Layer.TE, te_nm)))
    junctions = tuple(JunctionDesign(f"Q{k}", be_nm, te_nm, bool(iv_every) and k % iv_every == 0)
                      for k in range(repeats))
    return Layout(tuple(sites), shorts, junctions, geometry)


def sheet_pattern_49(radius_mm: float = 95.0) -> list[tuple[int, float, float]]:
    """Standard 49-site pattern: center plus rings of 8, 16 and 24 sites."""
    pts = [(1, 0.0, 0.0)]
    idx = 2
    for ring, count in ((1, 8), (2, 16), (3, 24)):
        r = radius_mm * ring / 3.0
        for k in range(count):
            a = 2 * math.pi * k / count
            pts.append((idx, round(r * math.cos(a), 6), round(r * math.sin(a), 6)))
            idx += 1
    return pts


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def generate_iv(r_jj: float, m: float, v_bt: float, grid_step: float = 0.01, *,
                v_knee: float = 0.3, compliance_a: float = 0.1, n_post: int = 3,
                current_noise: float = 0.0, rng: np.random.Generator | None = None,
                wafer_id: str = "SYNTH", site: DieSite | None = None,
                junction_id: str = "J", area_um2: float = 0.175) -> IVTrace:
    """Ohmic up to ``v_knee``, then ``I ~ V^m`` (continuous), then breakdown.

    The sweep runs from 0 V in ``grid_step`` increments up to the last grid
    point not above ``v_bt``; ``n_post`` further points sit at compliance.
    """
    if not r_jj > 0 or not m > 2 or not grid_step > 0:
        raise InvalidParams("need r_jj > 0, m > 2 and grid_step > 0")
    if not 0 < v_knee < v_bt:
        raise InvalidParams(f"need 0 < v_knee ({v_knee}) < v_bt ({v_bt})")
    n_bt = int(math.floor(v_bt / grid_step + 1e-9))
    v = np.arange(n_bt + 1 + n_post) * grid_step
    v = np.round(v, 12)
    i_knee = v_knee / r_jj
    i = np.where(v <= v_knee, v / r_jj, i_knee * (np.maximum(v, v_knee) / v_knee) ** m)
    if current_noise > 0:
        if rng is None:
            raise InvalidParams("current_noise needs an rng")
        i = i * (1.0 + current_noise * rng.standard_normal(i.size))
    if np.max(np.abs(i[:n_bt + 1])) >= compliance_a:
        raise InvalidParams("current reaches compliance before breakthrough")
    i[n_bt + 1:] = compliance_a
    site = site or DieSite(0, 0, 0.0, 0.0)
    return IVTrace(wafer_id, site, junction_id, area_um2, compliance_a,
                   tuple(float(x) for x in v), tuple(float(x) for x in i))


def generate_sheet(model: VariationModel, layer: Layer = Layer.BE,
                   radius_mm: float = 95.0) -> list[SheetSample]:
    lm = model.layer(layer)
    rng = _rng(model.seed, 10_000, _STREAM_SHEET, 0 if layer is Layer.BE else 1)
    pts = sheet_pattern_49(radius_mm)
    noise = _noise(rng, lm.sheet.rsd, len(pts), model.noise)
    return [SheetSample(k, x, y, layer,
                        float(lm.sheet.mean * _radial(lm.sheet.gradient, math.hypot(x, y)) * n))
            for (k, x, y), n in zip(pts, noise)]


def _widths(rng, lm: LayerModel, design_nm: np.ndarray, r_mm: float, kind: str,
            log: GenerationLog) -> np.ndarray:
    nominal = (design_nm - lm.width_offset_nm) * _radial(lm.width_gradient, r_mm)
    if np.any(nominal <= 0):
        raise InvalidModel("width offset leaves a non-positive nominal width")
    return nominal * _noise(rng, lm.width_rsd, design_nm.size, kind, log)


def generate(model: VariationModel, layout: Layout, wafer_id: str = "SYNTH", *,
             log: GenerationLog | None = None) -> WaferDataset:
    model.validate()
    if not layout.sites or not (layout.shorts or layout.junctions):
        raise InvalidModel("layout must contain sites and structures")
    log = log if log is not None else GenerationLog()
    shorts: list[ShortRecord] = []
    junctions: list[JunctionRecord] = []
    traces: list[IVTrace] = []
    kind = model.noise
    for site in sorted(layout.sites):
        r_mm = site.radius_mm
        key = (site.row, site.col)
        if layout.shorts:
            rng = _rng(model.seed, *key, _STREAM_SHORTS)
            for layer in (Layer.BE, Layer.TE):
                designs = [d for d in layout.shorts if d.layer is layer]
                if not designs:
                    continue
                lm = model.layer(layer)
                w = _widths(rng, lm, np.array([d.width_nm for d in designs]), r_mm, kind, log)
                rsq = _draw(rng, lm.sheet, r_mm, len(designs), kind, log)
                fail = rng.random(len(designs)) < model.short_failure_rate
                for d, wk, rk, bad in zip(designs, w, rsq, fail):
                    if bad:
                        shorts.append(ShortRecord(site, d.structure_id, layer, d.width_nm,
                                                  d.length_um, OPEN_RESISTANCE_OHM,
                                                  ShortStatus.OPEN))
                    else:
                        r = float(rk * d.length_um * 1e3 / wk)
                        shorts.append(ShortRecord(site, d.structure_id, layer, d.width_nm,
                                                  d.length_um, r))
        if layout.junctions:
            designs = layout.junctions
            rng = _rng(model.seed, *key, _STREAM_JUNCTIONS)
            w_be = _widths(rng, model.be, np.array([d.width_be_nm for d in designs]), r_mm,
                           kind, log)
            w_te = _widths(rng, model.te, np.array([d.width_te_nm for d in designs]), r_mm,
                           kind, log)
            ra = _draw(rng, model.ra, r_mm, len(designs), kind, log)
            r_jj = ra / (w_be * w_te * 1e-6)
            frng = _rng(model.seed, *key, _STREAM_FAIL)
            fail = frng.random(len(designs)) < model.failure_rate
            fail_open = frng.random(len(designs)) < 0.5
            irng = _rng(model.seed, *key, _STREAM_IV)
            for d, r, bad, is_open in zip(designs, r_jj, fail, fail_open):
                if bad:
                    status = JunctionStatus.OPEN if is_open else JunctionStatus.SHORTED_FAIL
                    r_meas = OPEN_RESISTANCE_OHM if is_open else SHORTED_RESISTANCE_OHM
                    junctions.append(JunctionRecord(site, d.junction_id, d.area_um2,
                                                    d.width_be_nm, d.width_te_nm, r_meas, status))
                    continue
                junctions.append(JunctionRecord(site, d.junction_id, d.area_um2, d.width_be_nm,
                                                d.width_te_nm, float(r)))
                if d.iv:
                    traces.append(_junction_iv(model, irng, float(r), wafer_id, site, d, log))
    return WaferDataset(wafer_id, layout.geometry, tuple(shorts), (), tuple(junctions),
                        tuple(traces))


def _junction_iv(model: VariationModel, rng, r: float, wafer_id: str, site: DieSite,
                 d: JunctionDesign, log: GenerationLog) -> IVTrace:
    m = float(_draw(rng, model.m_trap, 0.0, 1, model.noise, log)[0])
    while m <= 2.0:
        log.resamples += 1
        m = float(_draw(rng, model.m_trap, 0.0, 1, model.noise, log)[0])
    v_bt = float(_draw(rng, model.v_bt, site.radius_mm, 1, model.noise, log)[0])
    while v_bt <= model.v_knee + 2 * model.grid_step_v:
        log.resamples += 1
        v_bt = float(_draw(rng, model.v_bt, site.radius_mm, 1, model.noise, log)[0])
    return generate_iv(r, m, v_bt, model.grid_step_v, v_knee=model.v_knee,
                       compliance_a=model.compliance_a, current_noise=model.iv_current_noise,
                       rng=rng, wafer_id=wafer_id, site=site, junction_id=d.junction_id,
                       area_um2=d.area_um2)


# --------------------------------------------------------------------------
# cryogenic oracles
# --------------------------------------------------------------------------

def generate_cryo(rn_ohm: Sequence[float], model: AbModel, *, freq_noise: float = 0.0,
                  seed: int = 0, chip_prefix: str = "C", qubits_per_chip: int = 4) -> list[CryoRecord]:
    """(Rn, f01) records on the frequency model with multiplicative noise."""
    rng = _rng(seed, 20_000)
    noise = 1.0 + freq_noise * rng.standard_normal(len(rn_ohm))
    out = []
    for k, (rn, nz) in enumerate(zip(rn_ohm, noise)):
        chip, q = divmod(k, qubits_per_chip)
        out.append(CryoRecord(f"{chip_prefix}{chip + 1}", f"Q{q + 1}", float(rn),
                              float(predict_f01(rn, model) * nz)))
    return out


def t1_trace(t1_s: float, t: Sequence[float], *, amplitude: float = 1.0, offset: float = 0.0,
             noise: float = 0.0, rng: np.random.Generator | None = None) -> DecayTrace:
    t = np.asarray(t, dtype=float)
    y = amplitude * np.exp(-t / t1_s) + offset
    if noise:
        y = y + noise * amplitude * rng.standard_normal(t.size)
    return DecayTrace(DecayKind.T1, tuple(t.tolist()), tuple(y.tolist()))


def ramsey_trace(t2_s: float, detuning_hz: float, t: Sequence[float], *, amplitude: float = 0.5,
                 offset: float = 0.5, phase: float = 0.0, noise: float = 0.0,
                 rng: np.random.Generator | None = None) -> DecayTrace:
    t = np.asarray(t, dtype=float)
    y = amplitude * np.exp(-t / t2_s) * np.cos(2 * np.pi * detuning_hz * t + phase) + offset
    if noise:
        y = y + noise * amplitude * rng.standard_normal(t.size)
    return DecayTrace(DecayKind.RAMSEY, tuple(t.tolist()), tuple(y.tolist()))


def rb_trace(p: float, lengths: Sequence[int], *, amplitude: float = 0.5, offset: float = 0.5,
             noise: float = 0.0, rng: np.random.Generator | None = None) -> DecayTrace:
    m = np.asarray(lengths, dtype=float)
    y = amplitude * p ** m + offset
    if noise:
        y = y + noise * rng.standard_normal(m.size)
    return DecayTrace(DecayKind.RB, tuple(m.tolist()), tuple(y.tolist()))


def transition_trace(t_onset: float, t_zero: float, r_normal: float = 100.0, *,
                     t_max: float = 2.0, t_min: float = 0.02, step: float = 0.01) -> TransitionTrace:
    """R(T) with a normal plateau above ``t_onset``, a drop to zero at ``t_zero``.

    Inside the transition the resistance falls from 85 % of the plateau to
    zero along a square-root profile.
    """
    n = int(round((t_max - t_min) / step)) + 1
    temps = np.round(t_max - step * np.arange(n), 10)
    x = np.clip((temps - t_zero) / (t_onset - t_zero), 0.0, None)
    r = np.where(temps > t_onset, r_normal, 0.85 * r_normal * np.sqrt(np.minimum(x, 1.0)))
    r = np.where(temps <= t_zero, 0.0, r)
    return TransitionTrace(tuple(temps.tolist()), tuple(float(v) for v in r))


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

def reference_point(seed: int = 0, **overrides) -> VariationModel:
    """Variation model at the reference operating point.

    Width RSD 8.7 % (BE) and 5.1 % (TE), sheet RSD 1.6 %, oxide RSD 7.2 %,
    design offsets -76.8 nm (BE) and -27.5 nm (TE), junction mean near
    6.89 kOhm, breakthrough 1.06 V with 7.7 % spread and 7.2 % failures.
    """
    be_w = 350.0 + 76.8
    te_w = 500.0 + 27.5
    params = dict(
        be=LayerModel(Variation(94.7 * be_w / (100.0 * 1e3), 0.016), -76.8, 0.087),
        te=LayerModel(Variation(149.6 * te_w / (100.0 * 1e3), 0.016), -27.5, 0.051),
        ra=Variation(6890.0 * be_w * te_w * 1e-6, 0.072),
        v_bt=Variation(1.06, 0.077),
        m_trap=Variation(2.75, 0.03),
        failure_rate=0.072,
        seed=seed,
        iv_current_noise=0.01,
    )
    params.update(overrides)
    return VariationModel(**params)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def write_dataset(ds: WaferDataset, out_dir: Path | str) -> Path:
    """Write a dataset in the ingest formats plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[tuple[ingest.FileKind, str, bytes]] = []
    if ds.shorts:
        files.append((ingest.FileKind.SHORTS, "shorts.csv",
                      ingest.write_shorts_csv(ds.shorts, ds.wafer_id)))
    if ds.sheets:
        files.append((ingest.FileKind.SHEET, "sheet.csv",
                      ingest.write_sheet_csv(ds.sheets, ds.wafer_id)))
    if ds.junctions:
        files.append((ingest.FileKind.JUNCTIONS, "junctions.csv",
                      ingest.write_junctions_csv(ds.junctions, ds.wafer_id)))
    for tr in ds.iv_traces:
        name = f"iv/{tr.site.row:02d}_{tr.site.col:02d}_{tr.junction_id}.json"
        files.append((ingest.FileKind.IV, name, ingest.write_iv_json(tr)))
    if ds.cryo:
        files.append((ingest.FileKind.CRYO, "cryo.csv", ingest.write_cryo_csv(ds.cryo)))
    for k, tr in enumerate(ds.transitions):
        files.append((ingest.FileKind.TRANSITION, f"transition_{k}.csv",
                      ingest.write_transition_csv(tr)))
    for k, tr in enumerate(ds.decays):
        files.append((ingest.FileKind.DECAY, f"decay/{k:03d}_{tr.kind.value}.csv",
                      ingest.write_decay_csv(tr)))
    return write_files(out, ds.wafer_id, ds.geometry, files)


def write_files(out_dir: Path | str, wafer_id: str, geometry: WaferGeometry,
                files: Sequence[tuple[ingest.FileKind, str, bytes]]) -> Path:
    """Write raw files plus a checksummed manifest; returns the manifest path."""
    out = Path(out_dir)
    entries = []
    for kind, name, data in files:
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        entries.append(ingest.FileEntry(kind, name, ingest.sha256_bytes(data)))
    manifest = ingest.FileManifest(wafer_id, tuple(entries), geometry, out)
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return mpath
