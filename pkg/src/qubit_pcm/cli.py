"""Command-line front end.

Exit codes: 0 ok, 1 analysis error, 2 input error, 3 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, cryo, frequency, ingest, iv, report, svg, synth
from .config import Config, load_config
from .errors import ConfigError, InputError, PcmError
from .model import DieSite, Layer, WaferDataset, WaferGeometry

_SECTIONS = {
    "shorts": ("shorts", "sheets"),
    "junctions": ("shorts", "sheets", "junctions"),
    "iv": ("iv_traces",),
    "cryo": ("decays", "transitions"),
}


def _config(args) -> Config:
    cfg = load_config(args.config)
    return cfg.with_overrides(spec_min_ohm=getattr(args, "spec_min", None),
                              spec_max_ohm=getattr(args, "spec_max", None))


def _dataset(args) -> tuple[ingest.FileManifest, WaferDataset]:
    if not args.manifest:
        raise InputError("--manifest is required")
    manifest = ingest.load_manifest(args.manifest)
    return manifest, ingest.load_dataset(manifest)


def _only(ds: WaferDataset, keep: Sequence[str]) -> WaferDataset:
    empty = {f.name: () for f in dataclasses.fields(ds)
             if f.name not in ("wafer_id", "geometry") and f.name not in keep}
    return dataclasses.replace(ds, **empty)


def _emit(args, rep: dict, name: str) -> int:
    for line in report.summary_lines(rep):
        print(line)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(report.dumps_report(rep))
    return 1 if any(s["status"] == report.ERROR for s in rep["sections"].values()) else 0


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_ingest_validate(args) -> int:
    manifest = ingest.load_manifest(args.manifest)
    errors = ingest.validate_manifest(manifest)
    for err in errors:
        print(err, file=sys.stderr)
    if errors:
        return 2
    print(f"{len(manifest.files)} files OK for wafer {manifest.wafer_id}")
    return 0


def cmd_section(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(args)
    rep = report.run_dataset(_only(ds, _SECTIONS[args.command]), cfg)
    code = _emit(args, rep, f"{args.command}.json")
    if args.command == "junctions" and args.out_dir:
        _write_junction_svgs(rep, ds.geometry, Path(args.out_dir))
    return code


def cmd_freq(args) -> int:
    cfg = _config(args)
    model = (frequency.load_model(args.model) if args.model
             else frequency.AbModel(args.tc if args.tc is not None else cfg.t_c_k,
                                    args.cq if args.cq is not None else cfg.c_q_f))
    if args.freq_command == "predict":
        if args.rn is not None:
            print(f"f01 = {frequency.predict_f01(args.rn, model):.6e} Hz")
        if args.f01 is not None:
            print(f"Rn = {frequency.target_resistance(args.f01, model):.2f} ohm")
        if args.rn is None and args.f01 is None:
            raise InputError("give --rn and/or --f01")
        return 0
    _, ds = _dataset(args)
    if args.freq_command == "fit":
        fit = frequency.fit_tc(ds.cryo, cfg.c_q_f, rn_offset_ohm=cfg.rn_offset_ohm,
                               fit_cq=cfg.fit_cq, min_records=cfg.min_cryo_records,
                               min_spread=cfg.min_rn_spread_ratio)
        print(f"Tc = {fit.model.t_c:.6f} K from {fit.n} records, "
              f"RMS {fit.rms_hz / 1e6:.2f} MHz ({100 * fit.relative_rms:.2f} %)")
        if args.save_model:
            frequency.save_model(fit.model, args.save_model)
        return 0
    bins = frequency.tolerance_bins(cfg.target_f01_hz, cfg.bin_tolerance, cfg.n_bins)
    rep = frequency.bin_chips(frequency.chips_from_records(ds.cryo), model, cfg.target_f01_hz,
                              bins, policy=cfg.bin_policy)
    rep = frequency.with_measurements(rep, ds.cryo, model)
    for chip in rep.chips:
        print(f"{chip.chip_id:<10}{chip.bin}")
    print("counts " + " ".join(f"{k}={v}" for k, v in rep.counts.items()))
    print(f"predicted spread {100 * rep.predicted_spread:.2f} %")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "binning.json").write_text(
            report.dumps_report(report.sanitize(rep.to_dict())))
    return 0


def cmd_cryo(args) -> int:
    if args.trace:
        tr = ingest.parse_decay_csv(Path(args.trace).read_bytes(), source=args.trace)
        res = cryo.fit_ramsey(tr, overdamped=True) if args.overdamped else cryo.fit_trace(tr)
        print(f"{res.kind.value}: {res.value:.6g} +/- {res.stderr:.3g}  (R^2 {res.r_squared:.4f})")
        return 0
    return cmd_section(args)


def cmd_iv(args) -> int:
    if args.trace:
        tr = ingest.parse_iv_json(Path(args.trace).read_bytes(), source=args.trace)
        a = iv.analyze_trace(tr, _config(args).iv)
        for f in a.fits:
            extra = f"  R_JJ {f.r_jj_ohm:.1f} ohm" if f.r_jj_ohm else ""
            print(f"{f.regime.value:<14} m = {f.m:.4f}  [{f.v_lo:.3f}, {f.v_hi:.3f}] V{extra}")
        print(f"V_BT = {a.breakthrough.v_bt} V ({a.breakthrough.detection.value})")
        if a.error:
            print(a.error, file=sys.stderr)
            return 1
        return 0
    return cmd_section(args)


def cmd_synth(args) -> int:
    geometry = WaferGeometry()
    sites = sorted(geometry.sites(), key=lambda s: (round(s.radius_mm, 9), s.row, s.col))
    sites = sorted(sites[:args.dies])
    model = synth.reference_point(seed=args.seed)
    layout = (synth.repeated_layout(sites, args.repeats, geometry) if args.repeats
              else synth.pcm_layout(sites, geometry, iv=args.iv))
    ds = synth.generate(model, layout, args.wafer_id)
    ds = dataclasses.replace(ds, sheets=tuple(synth.generate_sheet(model, Layer.BE)
                                              + synth.generate_sheet(model, Layer.TE)))
    path = synth.write_dataset(ds, args.out_dir)
    print(path)
    return 0


def _write_junction_svgs(rep: dict, geometry: WaferGeometry, out: Path) -> None:
    jj = rep["sections"]["junctions"].get("result")
    if not jj:
        return
    out.mkdir(parents=True, exist_ok=True)
    per_site: dict[tuple[int, int], list[bool]] = {}
    for row, col, _, ok in jj["yield"]["sites"]:
        per_site.setdefault((row, col), []).append(ok)
    values: dict[DieSite, float | bool] = {}
    for (row, col), oks in per_site.items():
        site = geometry.site(row, col)
        values[site] = all(oks) if len(oks) == 1 else sum(oks) / len(oks)
    (out / "yield_map.svg").write_text(svg.render_wafer_map(values, geometry, title="junction yield"))
    if jj.get("resistance"):
        h = jj["resistance"]["histogram"]
        (out / "resistance_histogram.svg").write_text(svg.render_histogram(
            h["edges"], h["counts"], title="junction resistance", x_label="R_JJ [ohm]",
            marker=jj["resistance"].get("target_ohm")))


def sheet_map_values(rep: dict, layer: str, geometry: WaferGeometry) -> dict[DieSite, float]:
    sheet = rep["sections"]["sheet"].get("result") or {}
    if layer not in sheet:
        return {}
    return {geometry.locate(x, y): ratio for _, x, y, ratio in sheet[layer]["normalized"]}


def cmd_report(args) -> int:
    cfg = _config(args)
    manifest = ingest.load_manifest(args.manifest)
    result = report.run_pipeline(manifest, cfg)
    out = Path(args.out_dir)
    report.write_report(result.report, out)
    _write_junction_svgs(result.report, manifest.geometry, out)
    for layer in ("BE", "TE"):
        vals = sheet_map_values(result.report, layer, manifest.geometry)
        if vals:
            (out / f"sheet_map_{layer}.svg").write_text(svg.render_wafer_map(
                vals, manifest.geometry, title=f"normalized sheet resistance {layer}"))
    for line in report.summary_lines(result.report):
        print(line)
    return result.exit_code


def cmd_map(args) -> int:
    cfg = _config(args)
    _, ds = _dataset(args)
    if args.quantity == "yield":
        rep = report.run_dataset(_only(ds, ("junctions",)), cfg)
        _write_junction_svgs(rep, ds.geometry, Path(args.out_dir))
        print(Path(args.out_dir) / "yield_map.svg")
        return 0
    layer = args.quantity.split("-")[1].upper()
    rep = report.run_dataset(_only(ds, ("sheets",)), cfg)
    vals = sheet_map_values(rep, layer, ds.geometry)
    doc = svg.render_wafer_map(vals, ds.geometry, title=f"normalized sheet resistance {layer}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sheet_map_{layer}.svg").write_text(doc)
    print(out / f"sheet_map_{layer}.svg")
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="wafer manifest JSON")
    common.add_argument("--config", help="analysis config JSON")
    common.add_argument("--out-dir", help="directory for JSON/SVG outputs")
    common.add_argument("--spec-min", type=float, help="lower resistance spec [ohm]")
    common.add_argument("--spec-max", type=float, help="upper resistance spec [ohm]")

    p = argparse.ArgumentParser(prog="qubit-pcm", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest-validate", parents=[common], help="check every file of a manifest")
    s.set_defaults(func=cmd_ingest_validate)
    for name, helptext in (("shorts", "sheet and line-width analysis"),
                           ("junctions", "yield, resistance statistics, oxide spread")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.set_defaults(func=cmd_section)
    s = sub.add_parser("iv", parents=[common], help="IV regime fits and breakthrough")
    s.add_argument("--trace", help="single IV JSON file")
    s.set_defaults(func=cmd_iv)

    s = sub.add_parser("freq", help="frequency model")
    fsub = s.add_subparsers(dest="freq_command", required=True)
    for name in ("predict", "fit", "bin"):
        f = fsub.add_parser(name, parents=[common])
        f.add_argument("--model", help="saved frequency model JSON")
        f.add_argument("--tc", type=float, help="critical temperature [K]")
        f.add_argument("--cq", type=float, help="qubit capacitance [F]")
        if name == "predict":
            f.add_argument("--rn", type=float, help="normal-state resistance [ohm]")
            f.add_argument("--f01", type=float, help="target frequency [Hz]")
        if name == "fit":
            f.add_argument("--save-model", help="write the calibrated model here")
        f.set_defaults(func=cmd_freq)

    s = sub.add_parser("cryo", parents=[common], help="T1, Ramsey and RB fits")
    s.add_argument("--trace", help="single decay CSV file")
    s.add_argument("--overdamped", action="store_true", help="fit Ramsey with zero detuning")
    s.set_defaults(func=cmd_cryo)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic wafer")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dies", type=int, default=375)
    s.add_argument("--repeats", type=int, default=0,
                   help="qubit-size structures per die instead of the PCM array")
    s.add_argument("--iv", action="store_true", help="emit an IV sweep per junction")
    s.add_argument("--wafer-id", default="SYNTH")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", parents=[common], help="full pipeline with JSON report")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("map", parents=[common], help="render a wafer map")
    s.add_argument("--quantity", choices=("yield", "sheet-be", "sheet-te"), default="yield")
    s.set_defaults(func=cmd_map)
    return p


_NEEDS_OUT_DIR = {"synth", "report", "map"}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in _NEEDS_OUT_DIR and not args.out_dir:
        parser.error(f"{args.command} needs --out-dir")
    if args.command in ("ingest-validate", "report") and not args.manifest:
        parser.error(f"{args.command} needs --manifest")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except PcmError as exc:
        print(exc, file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
