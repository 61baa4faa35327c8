"""End-to-end pipeline and the versioned JSON report.

The report body holds only quantities derived from the inputs and the
config, so re-running on the same inputs gives identical bytes.  The run
timestamp goes into a separate envelope file.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__, cryo, frequency, ingest, iv, junctions, shorts
from .config import Config
from .errors import AnalysisError, PcmError
from .model import Filter, Layer, ShortStatus, WaferDataset, summarize

REPORT_SCHEMA_VERSION = 1
OK, SKIPPED, ERROR = "OK", "SKIPPED", "ERROR"


def sanitize(obj: Any) -> Any:
    """JSON-ready copy: NaN and inf become null, tuples lists, enums values."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _section(fn: Callable[[], dict | None], skip_reason: str | None = None) -> dict:
    if skip_reason is not None:
        return {"status": SKIPPED, "reason": skip_reason}
    try:
        return {"status": OK, "result": fn()}
    except AnalysisError as exc:
        return {"status": ERROR, "error": str(exc)}


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------

def _sheet(ds: WaferDataset, cfg: Config) -> dict:
    by_layer = defaultdict(list)
    for s in ds.sheets:
        by_layer[s.layer].append(s)
    return {layer.value: shorts.sheet_stats(samples).to_dict()
            for layer, samples in sorted(by_layer.items(), key=lambda kv: kv[0].value)}


def _rsd_sheet(layer: Layer, sheet: dict, cfg: Config) -> tuple[float | None, str]:
    # an explicitly assumed value is a deliberate override of any map on file
    if cfg.assumed_rsd_sheet is not None:
        return cfg.assumed_rsd_sheet, "config"
    if sheet.get("status") == OK:
        res = sheet["result"]
        if layer.value in res:
            return res[layer.value]["summary"]["rsd"], f"sheet map {layer.value}"
        other = sorted(res)[0]
        return res[other]["summary"]["rsd"], f"sheet map {other}"
    return None, "unavailable"


def _shorts(ds: WaferDataset, cfg: Config, sheet: dict) -> dict:
    out: dict[str, Any] = {"rsd_sheet": {}, "width_variability": {}, "offsets": {},
                           "width_groups": {}}
    width_of = {Layer.BE: cfg.be_width_nm, Layer.TE: cfg.te_width_nm}
    variability = {}
    for layer in (Layer.BE, Layer.TE):
        layer_shorts = [s for s in ds.shorts if s.layer is layer]
        if not layer_shorts:
            continue
        rsd_sheet, source = _rsd_sheet(layer, sheet, cfg)
        out["rsd_sheet"][layer.value] = {"value": rsd_sheet, "source": source}
        at_width = [s for s in layer_shorts if s.design_width_nm == width_of[layer]]
        lengths = sorted({s.design_length_um for s in at_width})
        at_width = [s for s in at_width if s.design_length_um == (lengths[0] if lengths else 0)]
        if at_width and rsd_sheet is not None:
            wv = shorts.width_rsd(at_width, rsd_sheet, cfg.filter)
            variability[layer] = wv
            out["width_variability"][layer.value] = wv.to_dict()
        groups = shorts.group_by_width(layer_shorts, layer, cfg.filter)
        out["width_groups"][layer.value] = [
            {"design_width_nm": g.design_width_nm, "mean_r_ohm": g.mean_r, "se_r_ohm": g.se_r,
             "n": g.n, "n_excluded": g.n_excluded} for g in groups]
        if len(groups) >= 3:
            out["offsets"][layer.value] = shorts.width_offset(
                groups, layer, cfg.offset_weighted).to_dict()
    out["area_rsd"] = (shorts.area_rsd(variability[Layer.BE], variability[Layer.TE])
                       if Layer.BE in variability and Layer.TE in variability else None)
    return out


def _junctions(ds: WaferDataset, cfg: Config, shorts_section: dict) -> dict:
    spec = cfg.spec
    yr = junctions.apply_spec(ds.junctions, spec)
    by_area = junctions.group_by_area(ds.junctions)
    qubit = next((js for a, js in by_area.items() if abs(a - cfg.qubit_area_um2) < 1e-9), None)
    out: dict[str, Any] = {"yield": yr.to_dict(), "qubit_area_um2": cfg.qubit_area_um2,
                           "resistance": None, "oxide": None}
    if qubit is None:
        out["resistance_note"] = f"no junctions with area {cfg.qubit_area_um2} um^2"
        return out
    rs = junctions.resistance_stats(junctions.junction_resistances(qubit, spec), cfg.filter,
                                    cfg.histogram_bins)
    out["resistance"] = rs.to_dict(cfg.target_r_jj_ohm)
    area = (shorts_section.get("result") or {}).get("area_rsd")
    if area is not None:
        out["oxide"] = junctions.oxide_rsd(rs.summary.rsd, area).to_dict()
    return out


def _iv(ds: WaferDataset, cfg: Config) -> dict:
    conf = cfg.iv
    traces = sorted(ds.iv_traces, key=lambda t: (t.site.row, t.site.col, t.junction_id))
    rows = []
    m_trap, m_direct, vbt_by_area = [], [], defaultdict(list)
    for tr in traces:
        a = iv.analyze_trace(tr, conf)
        low = a.regime(iv.Regime.DIRECT)
        high = a.regime(iv.Regime.TRAP_ASSISTED)
        rows.append({"row": tr.site.row, "col": tr.site.col, "junction_id": tr.junction_id,
                     "area_um2": tr.area_um2,
                     "m_direct": low.m if low else None,
                     "m_trap": high.m if high else None,
                     "r_jj_ohm": low.r_jj_ohm if low else None,
                     "v_bt": a.breakthrough.v_bt,
                     "detection": a.breakthrough.detection.value,
                     "error": a.error})
        if low:
            m_direct.append(low.m)
        if high:
            m_trap.append(high.m)
        if a.breakthrough.v_bt is not None:
            vbt_by_area[tr.area_um2].append(a.breakthrough.v_bt)
    out: dict[str, Any] = {
        "n_traces": len(traces),
        "n_fit_failed": sum(r["error"] is not None for r in rows),
        "m_direct": summarize(m_direct).to_dict() if m_direct else None,
        "m_trap": summarize(m_trap).to_dict() if m_trap else None,
        "traces": rows,
        "v_bt": None,
        "v_bt_pooled": (summarize([v for a in sorted(vbt_by_area) for v in vbt_by_area[a]])
                        .to_dict() if vbt_by_area else None),
    }
    eligible = {a: v for a, v in vbt_by_area.items() if len(v) >= cfg.min_traces_per_size}
    if len(eligible) >= 2:
        out["v_bt"] = iv.vbt_stats(eligible, cfg.overlap_factor,
                                   cfg.min_traces_per_size).to_dict()
    elif vbt_by_area:
        out["v_bt_note"] = (f"fewer than 2 junction sizes with >= {cfg.min_traces_per_size} "
                            "breakthrough values")
    return out


def _frequency(ds: WaferDataset, cfg: Config) -> dict:
    measured = [r for r in ds.cryo if r.f01_hz is not None]
    out: dict[str, Any] = {"calibration": None}
    if len(measured) >= cfg.min_cryo_records:
        fit = frequency.fit_tc(measured, cfg.c_q_f, rn_offset_ohm=cfg.rn_offset_ohm,
                               fit_cq=cfg.fit_cq, min_records=cfg.min_cryo_records,
                               min_spread=cfg.min_rn_spread_ratio)
        model = fit.model
        out["calibration"] = {"residuals_hz": list(fit.residuals_hz), "rms_hz": fit.rms_hz,
                              "relative_rms": fit.relative_rms, "n": fit.n}
    else:
        model = frequency.AbModel(cfg.t_c_k, cfg.c_q_f, frequency.Provenance.ASSUMED,
                                  cfg.rn_offset_ohm)
    out["model"] = model.to_dict()
    out["target_f01_hz"] = cfg.target_f01_hz
    out["target_resistance_ohm"] = frequency.target_resistance(cfg.target_f01_hz, model)
    bins = frequency.tolerance_bins(cfg.target_f01_hz, cfg.bin_tolerance, cfg.n_bins)
    report = frequency.bin_chips(frequency.chips_from_records(ds.cryo), model,
                                 cfg.target_f01_hz, bins, policy=cfg.bin_policy)
    out["binning"] = frequency.with_measurements(report, ds.cryo, model).to_dict()
    return out


def _cryo(ds: WaferDataset, cfg: Config) -> dict:
    fits = []
    for tr in ds.decays:
        entry = {"chip_id": tr.chip_id, "qubit_id": tr.qubit_id, "kind": tr.kind.value}
        try:
            entry["fit"] = cryo.fit_trace(tr).to_dict()
            entry["error"] = None
        except AnalysisError as exc:
            entry["fit"] = None
            entry["error"] = str(exc)
        fits.append(entry)
    if all(f["error"] for f in fits):
        raise AnalysisError("every decay fit failed: " + "; ".join(f["error"] for f in fits))
    return {"fits": fits}


def _transition(ds: WaferDataset, cfg: Config) -> dict:
    return {"traces": [frequency.transition_temps(t, cfg.zero_threshold_ohm,
                                                  cfg.onset_fraction).to_dict()
                       for t in ds.transitions]}


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineResult:
    report: dict
    dataset: WaferDataset

    @property
    def exit_code(self) -> int:
        return 1 if any(s["status"] == ERROR for s in self.report["sections"].values()) else 0


def _inputs(manifest: ingest.FileManifest) -> list[dict]:
    return [{"kind": e.kind.value, "path": e.path,
             "sha256": ingest.sha256_bytes(manifest.resolve(e).read_bytes())}
            for e in manifest.files]


def run_dataset(ds: WaferDataset, cfg: Config, inputs: list[dict] | None = None) -> dict:
    """All applicable analyses on an in-memory dataset."""

    def wafer_chain() -> dict[str, dict]:
        sheet = _section(lambda: _sheet(ds, cfg), None if ds.sheets else "no sheet data")
        sh = _section(lambda: _shorts(ds, cfg, sheet), None if ds.shorts else "no shorts data")
        jj = _section(lambda: _junctions(ds, cfg, sh),
                      None if ds.junctions else "no junction data")
        return {"sheet": sheet, "shorts": sh, "junctions": jj}

    with ThreadPoolExecutor(max_workers=4) as pool:
        chain = pool.submit(wafer_chain)
        ivf = pool.submit(_section, lambda: _iv(ds, cfg),
                          None if ds.iv_traces else "no IV traces")
        freq = pool.submit(_section, lambda: _frequency(ds, cfg),
                           None if ds.cryo else "no cryogenic records")
        cr = pool.submit(_section, lambda: _cryo(ds, cfg),
                         None if ds.decays else "no decay traces")
        tt = pool.submit(_section, lambda: _transition(ds, cfg),
                         None if ds.transitions else "no transition traces")
        sections = {**chain.result(), "iv": ivf.result(), "frequency": freq.result(),
                    "cryo": cr.result(), "transition": tt.result()}
    return sanitize({
        "schema_version": REPORT_SCHEMA_VERSION,
        "wafer_id": ds.wafer_id,
        "geometry": ds.geometry.to_dict(),
        "provenance": {"tool_version": __version__, "config_hash": cfg.hash(),
                       "config": cfg.to_dict(), "inputs": inputs or []},
        "sections": sections,
    })


def run_pipeline(manifest: ingest.FileManifest, cfg: Config) -> PipelineResult:
    """Ingest every file of the manifest and run all applicable analyses.

    Input errors propagate; analysis errors are recorded per section.
    """
    ds = ingest.load_dataset(manifest)
    report = run_dataset(ds, cfg, _inputs(manifest))
    validate_report(report)
    return PipelineResult(report, ds)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def load_schema(name: str = "report.schema.json") -> dict:
    return json.loads(resources.files("qubit_pcm.schemas").joinpath(name).read_text())


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_schema())


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(report: dict, out_dir: Path | str, *, now: _dt.datetime | None = None) -> Path:
    """Write ``report.json`` and its timestamped ``envelope.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    body = dumps_report(report)
    path = out / "report.json"
    path.write_text(body)
    now = now or _dt.datetime.now(_dt.timezone.utc)
    envelope = {"generated_at": now.isoformat(timespec="seconds"),
                "report": "report.json",
                "report_sha256": ingest.sha256_bytes(body.encode()),
                "tool_version": __version__}
    (out / "envelope.json").write_text(json.dumps(envelope, indent=2, sort_keys=True) + "\n")
    return path


def summary_lines(report: dict) -> list[str]:
    """Short human-readable digest of a report."""
    s = report["sections"]
    lines = [f"wafer {report['wafer_id']}  config {report['provenance']['config_hash'][:12]}"]
    for name in ("sheet", "shorts", "junctions", "iv", "frequency", "cryo", "transition"):
        sec = s[name]
        lines.append(f"  {name:<11}{sec['status']}" + (
            f"  {sec.get('reason') or sec.get('error')}" if sec["status"] != OK else ""))
    sh = s["shorts"].get("result") or {}
    for layer, wv in sorted(sh.get("width_variability", {}).items()):
        lines.append(f"  RSD_w {layer} = {wv['rsd_w']:.4f} (RSD_R {wv['rsd_r']:.4f})")
    if sh.get("area_rsd") is not None:
        lines.append(f"  RSD_A = {sh['area_rsd']:.4f}")
    for layer, off in sorted(sh.get("offsets", {}).items()):
        lines.append(f"  dw {layer} = {off['delta_w_nm']:.1f} +/- {off['delta_w_se_nm']:.1f} nm")
    jj = s["junctions"].get("result") or {}
    if jj:
        y = jj["yield"]
        lines.append(f"  yield = {y['yield_fraction']:.3f} ({y['n_pass']}/{y['n_total']})")
        if jj.get("resistance"):
            r = jj["resistance"]
            lines.append(f"  R_JJ = {r['gaussian']['mu']:.0f} ohm, RSD {r['summary']['rsd']:.4f}"
                         f", {100 * r['target_deviation']:.1f} % from target")
        if jj.get("oxide"):
            lines.append(f"  RSD_RA = {jj['oxide']['rsd_ra']:.4f}")
    ivr = s["iv"].get("result") or {}
    if ivr.get("v_bt"):
        v = ivr["v_bt"]
        lines.append(f"  V_BT pooled {v['pooled']['mean']:.3f} V, RSD {v['pooled']['rsd']:.4f}"
                     f": {v['verdict']}")
    fr = s["frequency"].get("result") or {}
    if fr:
        lines.append(f"  Tc = {fr['model']['t_c_k']:.4f} K ({fr['model']['provenance']}), "
                     f"target Rn {fr['target_resistance_ohm']:.0f} ohm")
    return lines
