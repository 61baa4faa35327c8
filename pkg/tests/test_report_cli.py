from __future__ import annotations

import copy
import dataclasses
import datetime as dt
import json
import shutil
import xml.etree.ElementTree as ET

import jsonschema
import pytest

from conftest import REPLICA, read_json
from qubit_pcm import cli, ingest, report, svg, synth
from qubit_pcm.config import Config
from qubit_pcm.errors import EmptyMap
from qubit_pcm.model import CryoRecord, WaferGeometry

GEO = WaferGeometry()
SVG_NS = "{http://www.w3.org/2000/svg}"


def copy_replica(tmp_path):
    dst = tmp_path / "wafer"
    shutil.copytree(REPLICA, dst)
    return dst


def rewrite(root, name, data: bytes):
    """Replace one file and keep the manifest checksum in step."""
    (root / name).write_bytes(data)
    doc = read_json(root / "manifest.json")
    for entry in doc["files"]:
        if entry["path"] == name:
            entry["sha256"] = ingest.sha256_bytes(data)
    (root / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def shorts_only(tmp_path):
    files = [(ingest.FileKind.SHORTS, "shorts.csv", (REPLICA / "shorts.csv").read_bytes()),
             (ingest.FileKind.SHEET, "sheet.csv", (REPLICA / "sheet.csv").read_bytes())]
    return synth.write_files(tmp_path / "shorts_only", "PR01", GEO, files)


# --------------------------------------------------------------------------
# pipeline and report
# --------------------------------------------------------------------------

def test_replica_report_is_complete(replica_report):
    report.validate_report(replica_report)
    assert {s["status"] for s in replica_report["sections"].values()} == {report.OK}


def test_provenance(replica_report, replica_manifest, replica_config):
    prov = replica_report["provenance"]
    assert prov["config_hash"] == replica_config.hash()
    assert [i["path"] for i in prov["inputs"]] == [e.path for e in replica_manifest.files]
    for item, entry in zip(prov["inputs"], replica_manifest.files):
        assert item["sha256"] == entry.sha256


def test_shorts_only_manifest_skips_junction_sections(tmp_path):
    res = report.run_pipeline(ingest.load_manifest(shorts_only(tmp_path)), Config())
    status = {k: v["status"] for k, v in res.report["sections"].items()}
    assert status["shorts"] == report.OK
    assert status["junctions"] == status["iv"] == status["frequency"] == report.SKIPPED
    assert res.exit_code == 0


def test_analysis_error_sets_exit_code():
    ds = synth.generate(synth.reference_point(), synth.pcm_layout(GEO.sites()[:3]))
    # enough records to attempt a calibration, but no resistance spread
    narrow = tuple(CryoRecord("C1", f"Q{k}", 7000.0 + k, 4.3e9) for k in range(8))
    rep = report.run_dataset(dataclasses.replace(ds, cryo=narrow), Config())
    assert rep["sections"]["frequency"]["status"] == report.ERROR
    assert report.PipelineResult(rep, ds).exit_code == 1


def test_schema_rejects_unknown_fields(replica_report):
    bad = copy.deepcopy(replica_report)
    bad["extra"] = 1
    with pytest.raises(jsonschema.ValidationError):
        report.validate_report(bad)
    bad = copy.deepcopy(replica_report)
    bad["sections"]["shorts"]["surprise"] = True
    with pytest.raises(jsonschema.ValidationError):
        report.validate_report(bad)


def test_rerun_is_byte_identical(tmp_path, replica_manifest, replica_config):
    a = report.run_pipeline(replica_manifest, replica_config).report
    b = report.run_pipeline(replica_manifest, replica_config).report
    utc = dt.timezone.utc
    pa = report.write_report(a, tmp_path / "a", now=dt.datetime(2024, 1, 1, tzinfo=utc))
    pb = report.write_report(b, tmp_path / "b", now=dt.datetime(2025, 6, 1, tzinfo=utc))
    assert pa.read_bytes() == pb.read_bytes()
    ea, eb = read_json(tmp_path / "a/envelope.json"), read_json(tmp_path / "b/envelope.json")
    assert ea["generated_at"] != eb["generated_at"]
    assert ea["report_sha256"] == ingest.sha256_bytes(pa.read_bytes())


def test_summary_mentions_yield(replica_report):
    text = "\n".join(report.summary_lines(replica_report))
    assert "yield = 0.928 (348/375)" in text


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

def filled_dies(doc):
    root = ET.fromstring(doc)
    return [r for r in root.iter(f"{SVG_NS}rect") if r.find(f"{SVG_NS}title") is not None]


def test_wafer_map_is_deterministic():
    values = {s: 1.0 + 0.01 * k for k, s in enumerate(GEO.sites()[:40])}
    reordered = dict(reversed(values.items()))
    assert svg.render_wafer_map(values, GEO) == svg.render_wafer_map(reordered, GEO)


def test_empty_map():
    with pytest.raises(EmptyMap):
        svg.render_wafer_map({}, GEO)
    with pytest.raises(EmptyMap):
        svg.render_wafer_map({GEO.sites()[0]: float("nan")}, GEO)


def test_single_site_map():
    doc = svg.render_wafer_map({GEO.sites()[5]: True}, GEO)
    assert len(filled_dies(doc)) == 1


def test_legend_bounds_equal_data_range(replica_report):
    sheet = replica_report["sections"]["sheet"]["result"]["BE"]["normalized"]
    values = {GEO.locate(x, y): ratio for _, x, y, ratio in sheet}
    root = ET.fromstring(svg.render_wafer_map(values, GEO))
    texts = {t.get("class"): t.text for t in root.iter(f"{SVG_NS}text") if t.get("class")}
    assert float(texts["legend-min"].split()[1]) == pytest.approx(min(values.values()), rel=1e-5)
    assert float(texts["legend-max"].split()[1]) == pytest.approx(max(values.values()), rel=1e-5)
    assert len(filled_dies(ET.tostring(root))) == len(values)


def test_histogram_rendering():
    doc = svg.render_histogram([0, 1, 2, 3], [4, 0, 2], marker=1.5)
    root = ET.fromstring(doc)
    assert len(list(root.iter(f"{SVG_NS}line"))) == 3
    with pytest.raises(EmptyMap):
        svg.render_histogram([0, 1], [1, 2])


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------

def test_cli_report(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["report", "--manifest", str(REPLICA / "manifest.json"),
                     "--config", str(REPLICA / "config.json"), "--out-dir", str(out)])
    assert code == 0
    for name in ("report.json", "envelope.json", "yield_map.svg", "resistance_histogram.svg",
                 "sheet_map_BE.svg"):
        assert (out / name).is_file()
    assert "yield = 0.928" in capsys.readouterr().out


def test_cli_corrupt_csv_names_file_and_row(tmp_path, capsys):
    root = copy_replica(tmp_path)
    lines = (root / "junctions.csv").read_text().splitlines(keepends=True)
    lines[4] = lines[4].replace(",OK", ",BROKEN")
    rewrite(root, "junctions.csv", "".join(lines).encode())
    code = cli.main(["report", "--manifest", str(root / "manifest.json"),
                     "--out-dir", str(tmp_path / "out")])
    err = capsys.readouterr().err
    assert code == 2
    assert "junctions.csv" in err and "row 5" in err


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"config_version": 1, "no_such_key": 3}')
    code = cli.main(["shorts", "--manifest", str(REPLICA / "manifest.json"), "--config", str(cfg)])
    assert code == 3
    cfg.write_text('{"config_version": 1, "spec_min_ohm": "low"}')
    assert cli.main(["shorts", "--manifest", str(REPLICA / "manifest.json"),
                     "--config", str(cfg)]) == 3
    assert "config error" in capsys.readouterr().err


def test_cli_spec_flags_feed_yield(tmp_path):
    out = tmp_path / "out"
    cli.main(["junctions", "--manifest", str(REPLICA / "manifest.json"), "--out-dir", str(out),
              "--spec-min", "1", "--spec-max", "1e12"])
    rep = read_json(out / "junctions.json")
    y = rep["sections"]["junctions"]["result"]["yield"]
    assert y["spec"] == {"r_min_ohm": 1.0, "r_max_ohm": 1e12}
    assert y["n_pass"] >= 348


@pytest.mark.parametrize("argv", [
    ["ingest-validate"],
    ["shorts"],
    ["junctions"],
    ["iv"],
    ["cryo"],
    ["freq", "fit"],
    ["freq", "bin"],
    ["map", "--quantity", "sheet-be"],
    ["map", "--quantity", "yield"],
])
def test_cli_subcommands_run(argv, tmp_path, capsys):
    args = argv + ["--manifest", str(REPLICA / "manifest.json"),
                   "--config", str(REPLICA / "config.json"), "--out-dir", str(tmp_path)]
    assert cli.main(args) == 0
    assert capsys.readouterr().out


def test_cli_freq_predict(capsys):
    assert cli.main(["freq", "predict", "--rn", "7300", "--tc", "0.71"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("f01 = 4.33")


def test_cli_single_traces(tmp_path, capsys):
    iv_file = sorted((REPLICA / "iv").iterdir())[0]
    assert cli.main(["iv", "--trace", str(iv_file)]) == 0
    assert cli.main(["cryo", "--trace", str(REPLICA / "decay_t1.csv")]) == 0
    out = capsys.readouterr().out
    assert "V_BT" in out and "T1" in out


def test_cli_synth_writes_valid_wafer(tmp_path, capsys):
    out = tmp_path / "synth"
    assert cli.main(["synth", "--out-dir", str(out), "--dies", "12", "--iv", "--seed", "3"]) == 0
    assert cli.main(["ingest-validate", "--manifest", str(out / "manifest.json")]) == 0
    assert "OK for wafer SYNTH" in capsys.readouterr().out


def test_cli_requires_out_dir():
    with pytest.raises(SystemExit) as exc:
        cli.main(["report", "--manifest", str(REPLICA / "manifest.json")])
    assert exc.value.code == 2
