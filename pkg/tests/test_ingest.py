from __future__ import annotations

import json
from importlib import resources

import pytest

from qubit_pcm import ingest
from qubit_pcm.errors import (ChecksumMismatch, DuplicateRecord, ManifestError,
                              NonMonotonicAfterDedup, SchemaMismatch, TooFewPoints, UnitError)
from qubit_pcm.ingest import FileKind
from qubit_pcm.model import JunctionStatus, Layer, ShortStatus

from conftest import REPLICA

SHORTS_HEADER = ("wafer_id,die_row,die_col,structure_id,layer,design_width_nm,"
                 "design_length_um,resistance_ohm,status\n")
SHEET_HEADER = "wafer_id,site_index,x_mm,y_mm,layer,sheet_resistance_ohm_sq\n"
JJ_HEADER = ("wafer_id,die_row,die_col,junction_id,design_area_um2,design_width_be_nm,"
             "design_width_te_nm,resistance_ohm,status\n")
CRYO_HEADER = "chip_id,qubit_id,rn_ohm,f01_hz\n"


def iv_doc(points, compliance=0.1, **extra):
    doc = {"schema_version": 1, "wafer_id": "W1", "die": {"row": 3, "col": 5},
           "junction_id": "J1", "area_um2": 0.175, "compliance_a": compliance,
           "points": points}
    doc.update(extra)
    return json.dumps(doc)


def sweep(n, step=0.01, r=7100.0):
    return [[round(k * step, 6), k * step / r] for k in range(n)]


# --------------------------------------------------------------------------
# documented examples
# --------------------------------------------------------------------------

def test_shorts_example_row():
    (rec,) = ingest.parse_shorts_csv(SHORTS_HEADER + "W1,3,5,S350,BE,350,10,94.7,OK\n")
    assert rec.layer is Layer.BE
    assert rec.design_width_nm == 350.0
    assert rec.resistance_ohm == 94.7
    assert rec.status is ShortStatus.OK
    assert rec.site.key == (3, 5)


def test_scaled_units_are_normalized():
    text = SHORTS_HEADER.replace("resistance_ohm", "resistance_kohm").replace(
        "design_width_nm", "design_width_um")
    (rec,) = ingest.parse_shorts_csv(text + "W1,3,5,S350,BE,0.35,10,0.0947,OK\n")
    assert rec.design_width_nm == pytest.approx(350.0)
    assert rec.resistance_ohm == pytest.approx(94.7)


def test_failed_records_are_kept():
    recs = ingest.parse_junctions_csv(JJ_HEADER + "W1,3,5,Q1,0.175,350,500,1000000000.0,OPEN\n"
                                      "W1,3,6,Q1,0.175,350,500,7100,OK\n")
    assert [r.status for r in recs] == [JunctionStatus.OPEN, JunctionStatus.OK]


def test_cryo_example_row():
    (rec,) = ingest.parse_cryo_csv(CRYO_HEADER + "C7,Q2,7100,4.33e9\n")
    assert (rec.chip_id, rec.qubit_id, rec.rn_ohm, rec.f01_hz) == ("C7", "Q2", 7100.0, 4.33e9)
    assert rec.t1_s is None


def test_cryo_optional_coherence_columns():
    (rec,) = ingest.parse_cryo_csv("chip_id,qubit_id,rn_kohm,f01_ghz,t1_us\nC1,Q1,7.1,4.4,80\n")
    assert rec.rn_ohm == pytest.approx(7100.0)
    assert rec.f01_hz == pytest.approx(4.4e9)
    assert rec.t1_s == pytest.approx(80e-6)


def test_sheet_49_points():
    rows = "".join(f"W1,{k},0.0,0.0,BE,0.40{k:02d}\n" for k in range(1, 50))
    samples = ingest.parse_sheet_csv(SHEET_HEADER + rows)
    assert len(samples) == 49


def test_iv_120_point_sweep():
    trace = ingest.parse_iv_json(iv_doc(sweep(120)))
    assert len(trace) == 120
    assert trace.voltage_v[1] - trace.voltage_v[0] == pytest.approx(0.01)


def test_iv_order_does_not_matter():
    pts = sweep(20)
    shuffled = pts[::2] + pts[1::2]
    assert ingest.parse_iv_json(iv_doc(shuffled)) == ingest.parse_iv_json(iv_doc(pts))


def test_iv_consistent_duplicates_collapse():
    pts = sweep(10)
    trace = ingest.parse_iv_json(iv_doc(pts + [pts[4]]))
    assert len(trace) == 10


def test_iv_three_points_too_few():
    with pytest.raises(TooFewPoints) as exc:
        ingest.parse_iv_json(iv_doc(sweep(3)), source="iv.json")
    assert exc.value.source == "iv.json" and exc.value.column == "points"


def test_transition_ascending_is_stored_descending():
    tr = ingest.parse_transition_csv("temperature_k,resistance_ohm\n0.5,0\n1.0,50\n1.5,100\n")
    assert tr.temperature_k == (1.5, 1.0, 0.5)
    assert tr.resistance_ohm == (100.0, 50.0, 0.0)


def test_decay_metadata():
    tr = ingest.parse_decay_csv("# kind=RB chip_id=C1 qubit_id=Q3\nx,y\n1,0.9\n2,0.8\n")
    assert tr.kind.value == "RB" and tr.chip_id == "C1" and tr.qubit_id == "Q3"


# --------------------------------------------------------------------------
# malformed inputs: error class and location
# --------------------------------------------------------------------------

GOOD_SHORT = "W1,3,5,S350,BE,350,10,94.7,OK\n"
GOOD_JJ = "W1,3,5,Q1,0.175,350,500,7100,OK\n"

MALFORMED = [
    # (id, parser, text, error, row)
    ("layer-enum", ingest.parse_shorts_csv,
     SHORTS_HEADER + "W1,3,5,S350,XX,350,10,94.7,OK\n", SchemaMismatch, 2),
    ("duplicate-short", ingest.parse_shorts_csv,
     SHORTS_HEADER + GOOD_SHORT + GOOD_SHORT, DuplicateRecord, 3),
    ("missing-column", ingest.parse_shorts_csv,
     SHORTS_HEADER.replace(",status", "") + "W1,3,5,S350,BE,350,10,94.7\n", SchemaMismatch, 1),
    ("negative-ok-resistance", ingest.parse_shorts_csv,
     SHORTS_HEADER + "W1,3,5,S350,BE,350,10,-94.7,OK\n", UnitError, 2),
    ("unknown-unit", ingest.parse_shorts_csv,
     SHORTS_HEADER.replace("resistance_ohm", "resistance_mohm") + GOOD_SHORT, UnitError, 1),
    ("non-numeric", ingest.parse_shorts_csv,
     SHORTS_HEADER + "W1,3,5,S350,BE,wide,10,94.7,OK\n", SchemaMismatch, 2),
    ("field-count", ingest.parse_shorts_csv,
     SHORTS_HEADER + GOOD_SHORT + "W1,3,6,S350,BE,350,10,94.7\n", SchemaMismatch, 3),
    ("off-wafer-die", ingest.parse_shorts_csv,
     SHORTS_HEADER + "W1,0,0,S350,BE,350,10,94.7,OK\n", SchemaMismatch, 2),
    ("width-out-of-range", ingest.parse_shorts_csv,
     SHORTS_HEADER + "W1,3,5,S200,BE,200,10,94.7,OK\n", SchemaMismatch, 2),
    ("mixed-wafer", ingest.parse_shorts_csv,
     SHORTS_HEADER + GOOD_SHORT + "W2,3,6,S350,BE,350,10,94.7,OK\n", SchemaMismatch, 3),
    ("sheet-site-index", ingest.parse_sheet_csv,
     SHEET_HEADER + "W1,1,0,0,BE,0.4\nW1,50,0,0,BE,0.4\n", SchemaMismatch, 3),
    ("sheet-zero", ingest.parse_sheet_csv,
     SHEET_HEADER + "W1,1,0,0,BE,0\n", UnitError, 2),
    ("junction-status", ingest.parse_junctions_csv,
     JJ_HEADER + "W1,3,5,Q1,0.175,350,500,7100,BROKEN\n", SchemaMismatch, 2),
    ("junction-area", ingest.parse_junctions_csv,
     JJ_HEADER + GOOD_JJ + "W1,3,6,Q1,2.0,350,500,7100,OK\n", SchemaMismatch, 3),
    ("quoted-number", ingest.parse_junctions_csv,
     JJ_HEADER + 'W1,3,5,Q1,0.175,350,500,"7100",OK\n', SchemaMismatch, 2),
    ("cryo-negative-rn", ingest.parse_cryo_csv,
     CRYO_HEADER + "C1,Q1,7100,4.4e9\nC1,Q2,-7100,4.4e9\n", UnitError, 3),
    ("cryo-nan", ingest.parse_cryo_csv,
     CRYO_HEADER + "C1,Q1,7100,nan\n", SchemaMismatch, 2),
    ("transition-order", ingest.parse_transition_csv,
     "temperature_k,resistance_ohm\n1.5,100\n1.0,50\n1.2,80\n0.5,0\n", SchemaMismatch, 4),
    ("iv-conflicting-duplicate", ingest.parse_iv_json,
     iv_doc(sweep(10) + [[0.04, 1.0e-3]]), NonMonotonicAfterDedup, 11),
    ("decay-x-order", ingest.parse_decay_csv,
     "# kind=T1\nx,y\n0,1\n2,0.5\n1,0.7\n", SchemaMismatch, 5),
]


@pytest.mark.parametrize("parser,text,error,row", [m[1:] for m in MALFORMED],
                         ids=[m[0] for m in MALFORMED])
def test_malformed_file_is_located(parser, text, error, row):
    with pytest.raises(error) as exc:
        parser(text, source="bad.file")
    err = exc.value
    assert type(err) is error
    assert err.source == "bad.file"
    assert err.row == row
    assert "bad.file" in str(err) and f"row {row}" in str(err)


def test_twenty_malformed_cases():
    assert len(MALFORMED) == 20
    assert len({m[0] for m in MALFORMED}) == 20


def test_iv_over_compliance_located():
    pts = sweep(10)
    pts[6][1] = 0.5
    with pytest.raises(UnitError) as exc:
        ingest.parse_iv_json(iv_doc(pts), source="x.json")
    assert exc.value.row == 7


def test_iv_invalid_json_line():
    with pytest.raises(SchemaMismatch) as exc:
        ingest.parse_iv_json('{\n"wafer_id": "W1",\n oops}', source="x.json")
    assert exc.value.row == 3


def test_not_utf8():
    with pytest.raises(SchemaMismatch, match="UTF-8"):
        ingest.parse_cryo_csv(CRYO_HEADER.encode() + b"C1,Q\xff,7100,4.4e9\n")


# --------------------------------------------------------------------------
# round trips over the shipped fixture
# --------------------------------------------------------------------------

def _roundtrip(kind: FileKind, data: bytes, wafer: str) -> bytes:
    if kind is FileKind.SHORTS:
        return ingest.write_shorts_csv(ingest.parse_shorts_csv(data), wafer)
    if kind is FileKind.SHEET:
        return ingest.write_sheet_csv(ingest.parse_sheet_csv(data), wafer)
    if kind is FileKind.JUNCTIONS:
        return ingest.write_junctions_csv(ingest.parse_junctions_csv(data), wafer)
    if kind is FileKind.IV:
        return ingest.write_iv_json(ingest.parse_iv_json(data))
    if kind is FileKind.CRYO:
        return ingest.write_cryo_csv(ingest.parse_cryo_csv(data))
    if kind is FileKind.TRANSITION:
        return ingest.write_transition_csv(ingest.parse_transition_csv(data))
    return ingest.write_decay_csv(ingest.parse_decay_csv(data))


def test_every_fixture_file_round_trips(replica_manifest):
    kinds = set()
    for entry in replica_manifest.files:
        data = ingest.read_entry(replica_manifest, entry)
        assert _roundtrip(entry.kind, data, replica_manifest.wafer_id) == data, entry.path
        kinds.add(entry.kind)
    assert kinds == set(FileKind)


def test_round_trip_is_field_equal_after_unit_change():
    text = SHORTS_HEADER.replace("resistance_ohm", "resistance_kohm") + \
        "W1,3,5,S350,BE,350,10,0.0947,OK\n"
    recs = ingest.parse_shorts_csv(text)
    again = ingest.parse_shorts_csv(ingest.write_shorts_csv(recs, "W1"))
    assert again == recs


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------

def test_manifest_checksum_mismatch(tmp_path):
    (tmp_path / "c.csv").write_text(CRYO_HEADER + "C1,Q1,7100,4.4e9\n")
    doc = {"schema_version": 1, "wafer_id": "W1",
           "files": [{"kind": "CRYO", "path": "c.csv", "sha256": "0" * 64}]}
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    m = ingest.load_manifest(tmp_path / "manifest.json")
    with pytest.raises(ChecksumMismatch) as exc:
        ingest.load_dataset(m)
    assert exc.value.source == "c.csv"


def test_manifest_declared_units(tmp_path):
    (tmp_path / "c.csv").write_text("chip_id,qubit_id,rn_kohm,f01_hz\nC1,Q1,7.1,4.4e9\n")
    doc = {"schema_version": 1, "wafer_id": "W1",
           "files": [{"kind": "CRYO", "path": "c.csv", "units": {"rn": "ohm"}}]}
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(UnitError):
        ingest.load_dataset(ingest.load_manifest(tmp_path / "manifest.json"))
    doc["files"][0]["units"] = {"rn": "kohm"}
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    ds = ingest.load_dataset(ingest.load_manifest(tmp_path / "manifest.json"))
    assert ds.cryo[0].rn_ohm == pytest.approx(7100.0)


def test_manifest_rejects_unknown_unit_and_kind():
    base = {"schema_version": 1, "wafer_id": "W1"}
    with pytest.raises(UnitError):
        ingest.parse_manifest(json.dumps({**base, "files": [
            {"kind": "CRYO", "path": "c.csv", "units": {"rn": "megaohm"}}]}))
    with pytest.raises(ManifestError) as exc:
        ingest.parse_manifest(json.dumps({**base, "files": [
            {"kind": "CRYO", "path": "a"}, {"kind": "XRAY", "path": "b"}]}))
    assert exc.value.row == 2


def test_cross_file_duplicates(tmp_path):
    for name in ("a.csv", "b.csv"):
        (tmp_path / name).write_text(CRYO_HEADER + "C1,Q1,7100,4.4e9\n")
    doc = {"schema_version": 1, "wafer_id": "W1",
           "files": [{"kind": "CRYO", "path": "a.csv"}, {"kind": "CRYO", "path": "b.csv"}]}
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(DuplicateRecord):
        ingest.load_dataset(ingest.load_manifest(tmp_path / "manifest.json"))


def test_shipped_format_document_matches_parsers():
    doc = json.loads(resources.files("qubit_pcm.schemas").joinpath("csv_formats.json").read_text())
    assert doc["formats"] == ingest.describe_formats()


def test_fixture_manifest_validates(replica_manifest):
    assert ingest.validate_manifest(replica_manifest) == []
    assert (REPLICA / "manifest.json").exists()
