"""Parsers, writers and the manifest loader for the measurement file formats.

CSV dialect: comma separated, '.' decimal, UTF-8, mandatory header, no
quoting.  Units live in column-name suffixes (``resistance_ohm``,
``design_width_nm``, ``f01_ghz`` ...); values are converted to the
canonical unit of the column on read.  Writers always emit canonical
column names.

Every rejection raises an :class:`~qubit_pcm.errors.InputError` carrying
the source name, row (physical line number, header = 1) and column.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .errors import (ChecksumMismatch, DuplicateRecord, InputError, ManifestError,
                     NonMonotonicAfterDedup, SchemaMismatch, TooFewPoints, UnitError)
from .model import (CryoRecord, DecayKind, DecayTrace, DieSite, IVTrace, JunctionRecord,
                    JunctionStatus, Layer, SheetSample, ShortRecord, ShortStatus,
                    TransitionTrace, WaferDataset, WaferGeometry)

MIN_IV_POINTS = 8
MANIFEST_VERSION = 1
IV_SCHEMA_VERSION = 1

_FLOAT_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_INT_RE = re.compile(r"^[+-]?\d+$")


class FileKind(str, Enum):
    SHORTS = "SHORTS"
    SHEET = "SHEET"
    JUNCTIONS = "JUNCTIONS"
    IV = "IV"
    CRYO = "CRYO"
    TRANSITION = "TRANSITION"
    DECAY = "DECAY"


# --------------------------------------------------------------------------
# column specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Column:
    base: str
    kind: str = "float"          # str | int | float | enum
    units: tuple[tuple[str, float], ...] = ()   # (suffix, factor to canonical); first is canonical
    required: bool = True
    nullable: bool = False
    enum: type[Enum] | None = None

    @property
    def canonical_name(self) -> str:
        return f"{self.base}_{self.units[0][0]}" if self.units else self.base

    def match(self, token: str) -> float | None:
        """Conversion factor if ``token`` names this column, else None."""
        if not self.units:
            return 1.0 if token == self.base else None
        for suffix, factor in self.units:
            if token == f"{self.base}_{suffix}":
                return factor
        return None

    def claims_prefix(self, token: str) -> bool:
        return bool(self.units) and token.startswith(self.base + "_")


_OHM = (("ohm", 1.0), ("kohm", 1e3))

SHORTS_COLUMNS = (
    Column("wafer_id", "str"),
    Column("die_row", "int"),
    Column("die_col", "int"),
    Column("structure_id", "str"),
    Column("layer", "enum", enum=Layer),
    Column("design_width", units=(("nm", 1.0), ("um", 1e3))),
    Column("design_length", units=(("um", 1.0), ("mm", 1e3))),
    Column("resistance", units=_OHM),
    Column("status", "enum", enum=ShortStatus),
)

SHEET_COLUMNS = (
    Column("wafer_id", "str"),
    Column("site_index", "int"),
    Column("x", units=(("mm", 1.0),)),
    Column("y", units=(("mm", 1.0),)),
    Column("layer", "enum", enum=Layer),
    Column("sheet_resistance", units=(("ohm_sq", 1.0), ("mohm_sq", 1e-3))),
)

JUNCTION_COLUMNS = (
    Column("wafer_id", "str"),
    Column("die_row", "int"),
    Column("die_col", "int"),
    Column("junction_id", "str"),
    Column("design_area", units=(("um2", 1.0), ("nm2", 1e-6))),
    Column("design_width_be", units=(("nm", 1.0), ("um", 1e3))),
    Column("design_width_te", units=(("nm", 1.0), ("um", 1e3))),
    Column("resistance", units=_OHM),
    Column("status", "enum", enum=JunctionStatus),
)

CRYO_COLUMNS = (
    Column("chip_id", "str"),
    Column("qubit_id", "str"),
    Column("rn", units=_OHM),
    Column("f01", units=(("hz", 1.0), ("mhz", 1e6), ("ghz", 1e9)), nullable=True),
    Column("t1", units=(("s", 1.0), ("us", 1e-6)), required=False, nullable=True),
    Column("t2star", units=(("s", 1.0), ("us", 1e-6)), required=False, nullable=True),
)

TRANSITION_COLUMNS = (
    Column("temperature", units=(("k", 1.0), ("mk", 1e-3))),
    Column("resistance", units=_OHM),
)

DECAY_COLUMNS = (
    Column("x", "float"),
    Column("y", "float"),
)


CSV_FORMATS = {
    FileKind.SHORTS: SHORTS_COLUMNS,
    FileKind.SHEET: SHEET_COLUMNS,
    FileKind.JUNCTIONS: JUNCTION_COLUMNS,
    FileKind.CRYO: CRYO_COLUMNS,
    FileKind.TRANSITION: TRANSITION_COLUMNS,
    FileKind.DECAY: DECAY_COLUMNS,
}


def describe_formats() -> dict[str, list[dict]]:
    """Column documentation of every CSV format, as shipped in csv_formats.json."""
    out = {}
    for kind, columns in CSV_FORMATS.items():
        cols = []
        for c in columns:
            d: dict[str, Any] = {"name": c.base, "type": c.kind, "required": c.required,
                                 "nullable": c.nullable}
            if c.enum is not None:
                d["values"] = [m.value for m in c.enum]
            if c.units:
                d["units"] = dict(c.units)
                d["canonical"] = c.canonical_name
            cols.append(d)
        out[kind.value] = cols
    return out


# --------------------------------------------------------------------------
# generic table reader
# --------------------------------------------------------------------------

@dataclass
class _Row:
    line: int
    values: dict[str, Any]


def _decode(data: bytes | str, source: str) -> str:
    if isinstance(data, str):
        return data
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaMismatch(f"not valid UTF-8 at byte {exc.start}", source=source) from None
    return text.removeprefix("﻿")


def _convert(col: Column, raw: str, factor: float, source: str, line: int, name: str):
    if raw == "":
        if col.nullable:
            return None
        raise SchemaMismatch("empty value", source=source, row=line, column=name)
    if '"' in raw or raw != raw.strip():
        raise SchemaMismatch(f"quoted or padded value {raw!r}", source=source, row=line, column=name)
    if col.kind == "str":
        return raw
    if col.kind == "int":
        if not _INT_RE.match(raw):
            raise SchemaMismatch(f"expected integer, got {raw!r}", source=source, row=line, column=name)
        return int(raw)
    if col.kind == "enum":
        try:
            return col.enum(raw)
        except ValueError:
            allowed = ", ".join(m.value for m in col.enum)
            raise SchemaMismatch(f"invalid value {raw!r}; expected one of {allowed}",
                                 source=source, row=line, column=name) from None
    if not _FLOAT_RE.match(raw):
        raise SchemaMismatch(f"expected number, got {raw!r}", source=source, row=line, column=name)
    value = float(raw)
    if not math.isfinite(value):
        raise SchemaMismatch(f"non-finite number {raw!r}", source=source, row=line, column=name)
    return value * factor if factor != 1.0 else value


def _read_table(text: str, columns: Sequence[Column], source: str,
                start_line: int = 1) -> tuple[list[_Row], dict[str, str]]:
    """Read a strict CSV table.  Returns rows keyed by column base name and
    the unit suffix used for each unit-bearing column."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SchemaMismatch("missing header row", source=source, row=start_line)
    reader = csv.reader(io.StringIO(text), delimiter=",", quoting=csv.QUOTE_NONE, strict=True)
    header = next(reader)
    mapping: list[tuple[Column, float, str]] = []
    seen: set[str] = set()
    units_used: dict[str, str] = {}
    for token in header:
        for col in columns:
            factor = col.match(token)
            if factor is not None:
                break
        else:
            owner = next((c for c in columns if c.claims_prefix(token)), None)
            if owner is not None:
                raise UnitError(f"unknown unit in column {token!r}", source=source,
                                row=start_line, column=token)
            raise SchemaMismatch(f"unexpected column {token!r}", source=source,
                                 row=start_line, column=token)
        if col.base in seen:
            raise SchemaMismatch(f"duplicate column {token!r}", source=source,
                                 row=start_line, column=token)
        seen.add(col.base)
        if col.units:
            units_used[col.base] = token[len(col.base) + 1:]
        mapping.append((col, factor, token))
    missing = [c.canonical_name for c in columns if c.required and c.base not in seen]
    if missing:
        raise SchemaMismatch(f"missing columns: {', '.join(missing)}", source=source,
                             row=start_line)
    rows: list[_Row] = []
    for fields in reader:
        line = reader.line_num + start_line - 1
        if not fields or (len(fields) == 1 and fields[0] == ""):
            continue
        if len(fields) != len(mapping):
            raise SchemaMismatch(f"expected {len(mapping)} fields, got {len(fields)}",
                                 source=source, row=line)
        values = {}
        for (col, factor, token), raw in zip(mapping, fields):
            values[col.base] = _convert(col, raw, factor, source, line, token)
        for col in columns:
            values.setdefault(col.base, None)
        rows.append(_Row(line, values))
    return rows, units_used


def _check_wafer(rows: list[_Row], source: str, wafer_id: str | None) -> str | None:
    for r in rows:
        wid = r.values["wafer_id"]
        if wafer_id is None:
            wafer_id = wid
        elif wid != wafer_id:
            raise SchemaMismatch(f"wafer_id {wid!r} differs from {wafer_id!r}",
                                 source=source, row=r.line, column="wafer_id")
    return wafer_id


def _site(geometry: WaferGeometry, row: int, col: int, source: str, line: int) -> DieSite:
    try:
        return geometry.site(row, col)
    except ValueError as exc:
        raise SchemaMismatch(str(exc), source=source, row=line, column="die_row") from None


def _build(factory: Callable[[], Any], source: str, line: int):
    try:
        return factory()
    except ValueError as exc:
        raise SchemaMismatch(str(exc), source=source, row=line) from None


# --------------------------------------------------------------------------
# format parsers
# --------------------------------------------------------------------------

def parse_shorts_csv(data: bytes | str, *, source: str = "<shorts>",
                     geometry: WaferGeometry | None = None,
                     wafer_id: str | None = None) -> list[ShortRecord]:
    geometry = geometry or WaferGeometry()
    rows, _ = _read_table(_decode(data, source), SHORTS_COLUMNS, source)
    _check_wafer(rows, source, wafer_id)
    out: list[ShortRecord] = []
    seen: dict[tuple, int] = {}
    for r in rows:
        v = r.values
        if v["status"] is ShortStatus.OK and not v["resistance"] > 0:
            raise UnitError(f"non-positive resistance {v['resistance']} with status OK",
                            source=source, row=r.line, column="resistance_ohm")
        site = _site(geometry, v["die_row"], v["die_col"], source, r.line)
        key = (site.key, v["structure_id"])
        if key in seen:
            raise DuplicateRecord(f"site {site.key} structure {v['structure_id']!r} "
                                  f"already defined at row {seen[key]}", source=source, row=r.line)
        seen[key] = r.line
        out.append(_build(lambda: ShortRecord(
            site, v["structure_id"], v["layer"], v["design_width"], v["design_length"],
            v["resistance"], v["status"]), source, r.line))
    return out


def parse_sheet_csv(data: bytes | str, *, source: str = "<sheet>",
                    wafer_id: str | None = None) -> list[SheetSample]:
    rows, _ = _read_table(_decode(data, source), SHEET_COLUMNS, source)
    _check_wafer(rows, source, wafer_id)
    out = []
    seen: dict[tuple, int] = {}
    for r in rows:
        v = r.values
        if not v["sheet_resistance"] > 0:
            raise UnitError("sheet resistance must be positive", source=source, row=r.line,
                            column="sheet_resistance_ohm_sq")
        key = (v["layer"], v["site_index"])
        if key in seen:
            raise DuplicateRecord(f"layer {v['layer'].value} site {v['site_index']} "
                                  f"already defined at row {seen[key]}", source=source, row=r.line)
        seen[key] = r.line
        out.append(_build(lambda: SheetSample(v["site_index"], v["x"], v["y"], v["layer"],
                                              v["sheet_resistance"]), source, r.line))
    return out


def parse_junctions_csv(data: bytes | str, *, source: str = "<junctions>",
                        geometry: WaferGeometry | None = None,
                        wafer_id: str | None = None) -> list[JunctionRecord]:
    geometry = geometry or WaferGeometry()
    rows, _ = _read_table(_decode(data, source), JUNCTION_COLUMNS, source)
    _check_wafer(rows, source, wafer_id)
    out = []
    seen: dict[tuple, int] = {}
    for r in rows:
        v = r.values
        if v["status"] is JunctionStatus.OK and not v["resistance"] > 0:
            raise UnitError(f"non-positive resistance {v['resistance']} with status OK",
                            source=source, row=r.line, column="resistance_ohm")
        site = _site(geometry, v["die_row"], v["die_col"], source, r.line)
        key = (site.key, v["junction_id"])
        if key in seen:
            raise DuplicateRecord(f"site {site.key} junction {v['junction_id']!r} "
                                  f"already defined at row {seen[key]}", source=source, row=r.line)
        seen[key] = r.line
        out.append(_build(lambda: JunctionRecord(
            site, v["junction_id"], v["design_area"], v["design_width_be"],
            v["design_width_te"], v["resistance"], v["status"]), source, r.line))
    return out


def parse_cryo_csv(data: bytes | str, *, source: str = "<cryo>") -> list[CryoRecord]:
    rows, _ = _read_table(_decode(data, source), CRYO_COLUMNS, source)
    out = []
    seen: dict[tuple, int] = {}
    for r in rows:
        v = r.values
        for name in ("rn", "f01", "t1", "t2star"):
            if v[name] is not None and not v[name] > 0:
                raise UnitError(f"{name} must be positive", source=source, row=r.line, column=name)
        key = (v["chip_id"], v["qubit_id"])
        if key in seen:
            raise DuplicateRecord(f"chip {key[0]!r} qubit {key[1]!r} already defined at row "
                                  f"{seen[key]}", source=source, row=r.line)
        seen[key] = r.line
        out.append(_build(lambda: CryoRecord(v["chip_id"], v["qubit_id"], v["rn"], v["f01"],
                                             v["t1"], v["t2star"]), source, r.line))
    return out


def parse_transition_csv(data: bytes | str, *, source: str = "<transition>") -> TransitionTrace:
    rows, _ = _read_table(_decode(data, source), TRANSITION_COLUMNS, source)
    if len(rows) < 3:
        raise TooFewPoints(f"transition trace needs >= 3 points, got {len(rows)}", source=source)
    t = [r.values["temperature"] for r in rows]
    res = [r.values["resistance"] for r in rows]
    for r in rows:
        if not r.values["temperature"] > 0:
            raise UnitError("temperature must be positive", source=source, row=r.line,
                            column="temperature_k")
        if r.values["resistance"] < 0:
            raise UnitError("resistance must be non-negative", source=source, row=r.line,
                            column="resistance_ohm")
    descending = t[1] < t[0]
    for k in range(1, len(t)):
        if (t[k] < t[k - 1]) != descending or t[k] == t[k - 1]:
            raise SchemaMismatch("temperature is not strictly monotone", source=source,
                                 row=rows[k].line, column="temperature_k")
    if not descending:
        t, res = t[::-1], res[::-1]
    return TransitionTrace(tuple(t), tuple(res))


def parse_decay_csv(data: bytes | str, *, source: str = "<decay>") -> DecayTrace:
    """Time-domain trace: a ``# kind=T1 chip_id=.. qubit_id=..`` line, then ``x,y``."""
    text = _decode(data, source)
    first, _, rest = text.partition("\n")
    if not first.startswith("#"):
        raise SchemaMismatch("missing '# kind=...' metadata line", source=source, row=1)
    meta = {}
    for item in first[1:].split():
        key, sep, value = item.partition("=")
        if not sep:
            raise SchemaMismatch(f"malformed metadata item {item!r}", source=source, row=1)
        meta[key] = value
    unknown = set(meta) - {"kind", "chip_id", "qubit_id"}
    if unknown:
        raise SchemaMismatch(f"unknown metadata keys {sorted(unknown)}", source=source, row=1)
    try:
        kind = DecayKind(meta.get("kind", ""))
    except ValueError:
        raise SchemaMismatch(f"invalid kind {meta.get('kind')!r}", source=source, row=1,
                             column="kind") from None
    rows, _ = _read_table(rest, DECAY_COLUMNS, source, start_line=2)
    xs = [r.values["x"] for r in rows]
    for k in range(1, len(rows)):
        if xs[k] <= xs[k - 1]:
            raise SchemaMismatch("x is not strictly increasing", source=source,
                                 row=rows[k].line, column="x")
    return DecayTrace(kind, tuple(xs), tuple(r.values["y"] for r in rows),
                      meta.get("chip_id", ""), meta.get("qubit_id", ""))


_IV_KEYS = {"schema_version", "wafer_id", "die", "junction_id", "area_um2",
            "compliance_a", "points"}


def _json_number(value, source: str, where: str, row: int | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaMismatch(f"expected finite number at {where}, got {value!r}",
                             source=source, row=row, column=where)
    return float(value)


def parse_iv_json(data: bytes | str, *, source: str = "<iv>",
                  geometry: WaferGeometry | None = None) -> IVTrace:
    geometry = geometry or WaferGeometry()
    text = _decode(data, source)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"invalid JSON: {exc.msg}", source=source, row=exc.lineno) from None
    if not isinstance(obj, dict):
        raise SchemaMismatch("top level must be an object", source=source)
    unknown = set(obj) - _IV_KEYS
    if unknown:
        raise SchemaMismatch(f"unknown keys {sorted(unknown)}", source=source)
    missing = sorted(_IV_KEYS - {"schema_version"} - set(obj))
    if missing:
        raise SchemaMismatch(f"missing keys {missing}", source=source)
    if obj.get("schema_version", IV_SCHEMA_VERSION) != IV_SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported schema_version {obj['schema_version']!r}",
                             source=source, column="schema_version")
    die = obj["die"]
    if not isinstance(die, dict) or set(die) != {"row", "col"} or not all(
            isinstance(die[k], int) and not isinstance(die[k], bool) for k in ("row", "col")):
        raise SchemaMismatch("die must be {row: int, col: int}", source=source, column="die")
    for key in ("wafer_id", "junction_id"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise SchemaMismatch(f"{key} must be a non-empty string", source=source, column=key)
    area = _json_number(obj["area_um2"], source, "area_um2")
    compliance = _json_number(obj["compliance_a"], source, "compliance_a")
    if not compliance > 0:
        raise UnitError("compliance_a must be positive", source=source, column="compliance_a")
    points = obj["points"]
    if not isinstance(points, list):
        raise SchemaMismatch("points must be an array", source=source, column="points")
    parsed: list[tuple[float, float, int]] = []
    for k, p in enumerate(points):
        where = f"points[{k}]"
        if not isinstance(p, list) or len(p) != 2:
            raise SchemaMismatch("point must be [voltage_v, current_a]", source=source,
                                 row=k + 1, column=where)
        v = _json_number(p[0], source, where, k + 1)
        i = _json_number(p[1], source, where, k + 1)
        if v < 0:
            raise SchemaMismatch("negative voltages are not supported", source=source,
                                 row=k + 1, column=where)
        if abs(i) > compliance * (1 + 1e-9):
            raise UnitError(f"|current| {abs(i)} exceeds compliance {compliance}",
                            source=source, row=k + 1, column=where)
        parsed.append((v, i, k))
    parsed.sort(key=lambda t: t[0])
    volts: list[float] = []
    amps: list[float] = []
    for v, i, k in parsed:
        if volts and v == volts[-1]:
            if i != amps[-1]:
                raise NonMonotonicAfterDedup(
                    f"duplicate voltage {v} V with conflicting currents", source=source,
                    row=k + 1, column=f"points[{k}]")
            continue
        volts.append(v)
        amps.append(i)
    if len(volts) < MIN_IV_POINTS:
        raise TooFewPoints(f"IV trace needs >= {MIN_IV_POINTS} distinct points, got {len(volts)}",
                           source=source, column="points")
    try:
        site = geometry.site(die["row"], die["col"])
    except ValueError as exc:
        raise SchemaMismatch(str(exc), source=source, column="die") from None
    return IVTrace(obj["wafer_id"], site, obj["junction_id"], area, compliance,
                   tuple(volts), tuple(amps))


# --------------------------------------------------------------------------
# writers
# --------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue().encode("utf-8")


def write_shorts_csv(records: Iterable[ShortRecord], wafer_id: str) -> bytes:
    return _write_rows([c.canonical_name for c in SHORTS_COLUMNS], (
        (wafer_id, r.site.row, r.site.col, r.structure_id, r.layer, r.design_width_nm,
         r.design_length_um, r.resistance_ohm, r.status) for r in records))


def write_sheet_csv(samples: Iterable[SheetSample], wafer_id: str) -> bytes:
    return _write_rows([c.canonical_name for c in SHEET_COLUMNS], (
        (wafer_id, s.site_index, s.x_mm, s.y_mm, s.layer, s.sheet_resistance_ohm_sq)
        for s in samples))


def write_junctions_csv(records: Iterable[JunctionRecord], wafer_id: str) -> bytes:
    return _write_rows([c.canonical_name for c in JUNCTION_COLUMNS], (
        (wafer_id, r.site.row, r.site.col, r.junction_id, r.design_area_um2,
         r.design_width_be_nm, r.design_width_te_nm, r.resistance_ohm, r.status)
        for r in records))


def write_cryo_csv(records: Iterable[CryoRecord]) -> bytes:
    records = list(records)
    with_times = any(r.t1_s is not None or r.t2star_s is not None for r in records)
    cols = CRYO_COLUMNS if with_times else CRYO_COLUMNS[:4]
    return _write_rows([c.canonical_name for c in cols], (
        (r.chip_id, r.qubit_id, r.rn_ohm, r.f01_hz, r.t1_s, r.t2star_s)[:len(cols)]
        for r in records))


def write_transition_csv(trace: TransitionTrace) -> bytes:
    return _write_rows([c.canonical_name for c in TRANSITION_COLUMNS],
                       zip(trace.temperature_k, trace.resistance_ohm))


def write_decay_csv(trace: DecayTrace) -> bytes:
    meta = f"# kind={trace.kind.value}"
    if trace.chip_id:
        meta += f" chip_id={trace.chip_id}"
    if trace.qubit_id:
        meta += f" qubit_id={trace.qubit_id}"
    return (meta + "\n").encode("utf-8") + _write_rows(["x", "y"], zip(trace.x, trace.y))


def iv_to_dict(trace: IVTrace) -> dict:
    return {
        "schema_version": IV_SCHEMA_VERSION,
        "wafer_id": trace.wafer_id,
        "die": {"row": trace.site.row, "col": trace.site.col},
        "junction_id": trace.junction_id,
        "area_um2": trace.area_um2,
        "compliance_a": trace.compliance_a,
        "points": [[v, i] for v, i in zip(trace.voltage_v, trace.current_a)],
    }


def write_iv_json(trace: IVTrace) -> bytes:
    return (json.dumps(iv_to_dict(trace), separators=(",", ":")) + "\n").encode("utf-8")


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------

_UNIT_COLUMNS = {
    FileKind.SHORTS: SHORTS_COLUMNS,
    FileKind.SHEET: SHEET_COLUMNS,
    FileKind.JUNCTIONS: JUNCTION_COLUMNS,
    FileKind.CRYO: CRYO_COLUMNS,
    FileKind.TRANSITION: TRANSITION_COLUMNS,
}


@dataclass(frozen=True)
class FileEntry:
    kind: FileKind
    path: str
    sha256: str | None = None
    units: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class FileManifest:
    wafer_id: str
    files: tuple[FileEntry, ...]
    geometry: WaferGeometry = WaferGeometry()
    base_dir: Path = field(default=Path("."), compare=False)

    def of_kind(self, kind: FileKind) -> list[FileEntry]:
        return [f for f in self.files if f.kind is kind]

    def resolve(self, entry: FileEntry) -> Path:
        return self.base_dir / entry.path

    def to_dict(self) -> dict:
        files = []
        for f in self.files:
            d: dict[str, Any] = {"kind": f.kind.value, "path": f.path}
            if f.sha256:
                d["sha256"] = f.sha256
            if f.units:
                d["units"] = dict(f.units)
            files.append(d)
        return {"schema_version": MANIFEST_VERSION, "wafer_id": self.wafer_id,
                "geometry": self.geometry.to_dict(), "files": files}


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def parse_manifest(data: bytes | str, base_dir: Path | str = ".", *,
                   source: str = "<manifest>") -> FileManifest:
    text = _decode(data, source)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid JSON: {exc.msg}", source=source, row=exc.lineno) from None
    if not isinstance(obj, dict):
        raise ManifestError("manifest must be an object", source=source)
    unknown = set(obj) - {"schema_version", "wafer_id", "geometry", "files"}
    if unknown:
        raise ManifestError(f"unknown keys {sorted(unknown)}", source=source)
    if obj.get("schema_version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported schema_version {obj.get('schema_version')!r}",
                            source=source)
    wafer_id = obj.get("wafer_id")
    if not isinstance(wafer_id, str) or not wafer_id:
        raise ManifestError("wafer_id must be a non-empty string", source=source)
    geometry = WaferGeometry()
    if "geometry" in obj:
        try:
            geometry = WaferGeometry.from_dict(obj["geometry"])
        except TypeError as exc:
            raise ManifestError(f"invalid geometry: {exc}", source=source) from None
    files = obj.get("files")
    if not isinstance(files, list) or not files:
        raise ManifestError("files must be a non-empty array", source=source)
    entries = []
    for k, f in enumerate(files):
        where = f"files[{k}]"
        if not isinstance(f, dict) or set(f) - {"kind", "path", "sha256", "units"}:
            raise ManifestError("file entry must have kind, path and optional sha256/units",
                                source=source, row=k + 1, column=where)
        try:
            kind = FileKind(f.get("kind"))
        except ValueError:
            raise ManifestError(f"invalid kind {f.get('kind')!r}", source=source, row=k + 1,
                                column=where) from None
        if not isinstance(f.get("path"), str):
            raise ManifestError("path must be a string", source=source, row=k + 1, column=where)
        units = f.get("units", {})
        if not isinstance(units, dict):
            raise ManifestError("units must be an object", source=source, row=k + 1, column=where)
        if units:
            cols = {c.base: c for c in _UNIT_COLUMNS.get(kind, ())}
            for base, unit in units.items():
                col = cols.get(base)
                if col is None or unit not in dict(col.units):
                    raise UnitError(f"invalid unit declaration {base}={unit!r}", source=source,
                                    row=k + 1, column=where)
        entries.append(FileEntry(kind, f["path"], f.get("sha256"), tuple(sorted(units.items()))))
    return FileManifest(wafer_id, tuple(entries), geometry, Path(base_dir))


def load_manifest(path: Path | str) -> FileManifest:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc.strerror}", source=str(path)) from None
    return parse_manifest(data, path.parent, source=str(path))


def _declared_units_match(entry: FileEntry, data: bytes, source: str) -> None:
    if not entry.units:
        return
    cols = _UNIT_COLUMNS[entry.kind]
    header = _decode(data, source).splitlines()[0].split(",")
    for base, unit in entry.units:
        col = next(c for c in cols if c.base == base)
        token = next((t for t in header if col.match(t) is not None), None)
        if token is not None and token != f"{base}_{unit}":
            raise UnitError(f"column {token!r} does not match declared unit {unit!r}",
                            source=source, row=1, column=token)


def read_entry(manifest: FileManifest, entry: FileEntry) -> bytes:
    path = manifest.resolve(entry)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ManifestError(f"cannot read file: {exc.strerror}", source=entry.path) from None
    if entry.sha256 and sha256_bytes(data) != entry.sha256:
        raise ChecksumMismatch("file checksum does not match manifest", source=entry.path)
    _declared_units_match(entry, data, entry.path)
    return data


def load_dataset(manifest: FileManifest) -> WaferDataset:
    """Parse every file of the manifest and fold them into one dataset.

    Files are folded in manifest order, so the result is deterministic.
    """
    geo = manifest.geometry
    wid = manifest.wafer_id
    shorts, sheets, junctions, ivs, cryo, transitions, decays = [], [], [], [], [], [], []
    for entry in manifest.files:
        data = read_entry(manifest, entry)
        src = entry.path
        if entry.kind is FileKind.SHORTS:
            shorts += parse_shorts_csv(data, source=src, geometry=geo, wafer_id=wid)
        elif entry.kind is FileKind.SHEET:
            sheets += parse_sheet_csv(data, source=src, wafer_id=wid)
        elif entry.kind is FileKind.JUNCTIONS:
            junctions += parse_junctions_csv(data, source=src, geometry=geo, wafer_id=wid)
        elif entry.kind is FileKind.IV:
            trace = parse_iv_json(data, source=src, geometry=geo)
            if trace.wafer_id != wid:
                raise SchemaMismatch(f"wafer_id {trace.wafer_id!r} differs from manifest {wid!r}",
                                     source=src, column="wafer_id")
            ivs.append(trace)
        elif entry.kind is FileKind.CRYO:
            cryo += parse_cryo_csv(data, source=src)
        elif entry.kind is FileKind.TRANSITION:
            transitions.append(parse_transition_csv(data, source=src))
        elif entry.kind is FileKind.DECAY:
            decays.append(parse_decay_csv(data, source=src))
    _check_cross_file_duplicates(shorts, junctions, cryo)
    try:
        return WaferDataset(wid, geo, tuple(shorts), tuple(sheets), tuple(junctions),
                            tuple(ivs), tuple(cryo), tuple(transitions), tuple(decays))
    except ValueError as exc:
        raise SchemaMismatch(str(exc)) from None


def _check_cross_file_duplicates(shorts, junctions, cryo) -> None:
    for name, keys in (
            ("short", [(r.site.key, r.structure_id) for r in shorts]),
            ("junction", [(r.site.key, r.junction_id) for r in junctions]),
            ("cryo record", [(r.chip_id, r.qubit_id) for r in cryo])):
        seen = set()
        for k in keys:
            if k in seen:
                raise DuplicateRecord(f"{name} {k} appears in more than one file")
            seen.add(k)


def validate_manifest(manifest: FileManifest) -> list[InputError]:
    """Parse every file, collecting errors instead of stopping at the first."""
    errors: list[InputError] = []
    for entry in manifest.files:
        single = FileManifest(manifest.wafer_id, (entry,), manifest.geometry, manifest.base_dir)
        try:
            load_dataset(single)
        except InputError as exc:
            errors.append(exc)
    return errors
