"""Acceptance criteria 1 to 10, each timed and reported as one PASS/FAIL line."""

from __future__ import annotations

import dataclasses
import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, REPLICA
from qubit_pcm import cryo, frequency, ingest, iv, junctions, report, shorts, synth
from qubit_pcm.config import Config
from qubit_pcm.frequency import AbModel
from qubit_pcm.model import CryoRecord, Layer, SpecLimits, WaferGeometry
from qubit_pcm.shorts import WidthGroup
from test_ingest import MALFORMED, _roundtrip


@contextmanager
def criterion(number: int, title: str, limit_s: float | None = None):
    start = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        in_time = limit_s is None or elapsed < limit_s
        verdict = "PASS" if ok and in_time else "FAIL"
        limit = f", limit {limit_s:g} s" if limit_s is not None else ""
        line = f"{verdict} criterion {number}: {title} ({elapsed:.2f} s{limit})"
        ACCEPTANCE_LINES.append(line)
        print(line)
    assert in_time, f"criterion {number} took {elapsed:.2f} s (limit {limit_s} s)"


# --------------------------------------------------------------------------
# 1 to 4: wafer statistics on the replica fixture
# --------------------------------------------------------------------------

def test_criterion_01_rsd_composition(replica_dataset):
    with criterion(1, "RSD composition chain", 1.0):
        measured = {}
        for layer, width in ((Layer.BE, 350.0), (Layer.TE, 500.0)):
            pop = [s for s in replica_dataset.shorts
                   if s.layer is layer and s.design_width_nm == width]
            measured[layer] = shorts.width_rsd(pop, 0.016)
        be, te = measured[Layer.BE], measured[Layer.TE]
        rsd_a = shorts.area_rsd(be, te)
        rsd_ra = junctions.oxide_rsd(0.124, rsd_a).rsd_ra
        assert be.rsd_w == pytest.approx(0.087, abs=0.002)
        assert te.rsd_w == pytest.approx(0.051, abs=0.002)
        assert rsd_a == pytest.approx(0.101, abs=0.002)
        assert rsd_ra == pytest.approx(0.072, abs=0.002)


def test_criterion_02_offset_regression(replica_dataset):
    with criterion(2, "width offset regression", 1.0):
        for layer, dw, se in ((Layer.BE, -76.8, 18.5), (Layer.TE, -27.5, 7.2)):
            groups = shorts.group_by_width(replica_dataset.shorts, layer)
            fit = shorts.width_offset(groups, layer)
            assert abs(fit.delta_w_nm - dw) <= se
            assert fit.delta_w_se_nm == pytest.approx(se, abs=0.05)
        widths = (350.0, 500.0, 700.0, 1000.0)
        exact = [WidthGroup(w, 2.0e4 / (w + 76.8), 1e-3, 100) for w in widths]
        fit = shorts.width_offset(exact, Layer.BE)
        assert fit.delta_w_nm == pytest.approx(-76.8, rel=1e-9)


def test_criterion_03_yield(replica_dataset):
    with criterion(3, "junction yield and spec monotonicity", 1.0):
        rep = junctions.apply_spec(replica_dataset.junctions, SpecLimits(100.0, 50_000.0))
        assert rep.yield_fraction == 0.928
        rnd = random.Random(3)
        for _ in range(100):
            lo = rnd.uniform(100.0, 7000.0)
            hi = rnd.uniform(7000.0, 50_000.0)
            narrow = junctions.apply_spec(replica_dataset.junctions, SpecLimits(lo, hi))
            wide = junctions.apply_spec(replica_dataset.junctions,
                                        SpecLimits(lo * rnd.uniform(0.01, 1.0),
                                                   hi * rnd.uniform(1.0, 3.0)))
            assert wide.yield_fraction >= narrow.yield_fraction


def test_criterion_04_junction_statistics(replica_report):
    with criterion(4, "junction resistance statistics"):
        res = replica_report["sections"]["junctions"]["result"]["resistance"]
        assert res["gaussian"]["mu"] == pytest.approx(6890.0, rel=0.01)
        assert res["summary"]["rsd"] == pytest.approx(0.124, abs=0.005)
        assert 100 * res["target_deviation"] == pytest.approx(5.6, abs=0.3)
        assert res["target_ohm"] == 7300.0


# --------------------------------------------------------------------------
# 5 and 6: IV analysis
# --------------------------------------------------------------------------

def test_criterion_05_iv_recovery():
    with criterion(5, "IV regime and breakthrough recovery", 10.0):
        rng = np.random.default_rng(2025)
        good = 0
        for _ in range(1000):
            r_jj, m, v_bt = rng.uniform(5e3, 10e3), rng.uniform(2.3, 3.2), rng.uniform(0.9, 1.3)
            a = iv.analyze_trace(synth.generate_iv(r_jj, m, v_bt, 0.01, current_noise=0.01,
                                                   rng=rng))
            low, high = a.regime(iv.Regime.DIRECT), a.regime(iv.Regime.TRAP_ASSISTED)
            good += (low is not None and high is not None and a.breakthrough.v_bt is not None
                     and abs(high.m - m) <= 0.05
                     and abs(low.r_jj_ohm / r_jj - 1) <= 0.01
                     and abs(a.breakthrough.v_bt - v_bt) <= 0.01 + 1e-12)
        assert good >= 990
        ref = iv.analyze_trace(synth.generate_iv(7100.0, 2.75, 1.2))
        assert ref.regime(iv.Regime.TRAP_ASSISTED).m == pytest.approx(2.75, abs=0.05)
        assert ref.regime(iv.Regime.DIRECT).r_jj_ohm == pytest.approx(7100.0, rel=0.01)
        assert ref.breakthrough.v_bt == pytest.approx(1.2)


def test_criterion_06_breakthrough_statistics(replica_report):
    with criterion(6, "breakthrough voltage statistics"):
        v = replica_report["sections"]["iv"]["result"]["v_bt"]
        assert len(v["per_size"]) >= 2
        for size in v["per_size"]:
            assert 1.048 <= size["mean"] <= 1.076
        assert v["pooled"]["rsd"] == pytest.approx(0.077, abs=0.003)
        assert v["verdict"] == "no significant dependence"


# --------------------------------------------------------------------------
# 7 and 8: cryogenic analysis
# --------------------------------------------------------------------------

def _records(rns, t_c, noise, rng):
    model = AbModel(t_c, 86e-15)
    out = []
    for k, rn in enumerate(rns):
        f = frequency.predict_f01(rn, model)
        if noise:
            f *= 1 + noise * rng.standard_normal()
        out.append(CryoRecord(f"C{k // 4}", f"Q{k % 4}", float(rn), float(f)))
    return out


def test_criterion_07_frequency_model():
    with criterion(7, "frequency model and Tc calibration", 5.0):
        model = AbModel(0.71, 86e-15)
        for rn in np.geomspace(1e3, 1e5, 2000):
            back = frequency.target_resistance(frequency.predict_f01(rn, model), model)
            assert back == pytest.approx(rn, rel=1e-9)
        runs = []
        for name in ("cryo_run1.csv", "cryo_run2.csv", "cryo_run3.csv"):
            runs += ingest.parse_cryo_csv((REPLICA / name).read_bytes(), source=name)
        assert frequency.fit_tc(runs).model.t_c == pytest.approx(0.71, abs=0.01)
        clean = _records(np.linspace(5e3, 12e3, 20), 0.71, 0.0, None)
        assert frequency.fit_tc(clean).model.t_c == pytest.approx(0.71, rel=1e-6)
        rng = np.random.default_rng(77)
        hits = 0
        for _ in range(200):
            recs = _records(rng.uniform(5e3, 12e3, 40), 0.71, 0.01, rng)
            hits += abs(frequency.fit_tc(recs).model.t_c / 0.71 - 1) < 0.02
        assert hits >= 190


def test_criterion_08_cryo_fits():
    with criterion(8, "T1, Ramsey and RB fits", 5.0):
        t1_grid = np.linspace(0.0, 400e-6, 30)
        ramsey_grid = np.linspace(0.0, 300e-6, 121)
        lengths = np.arange(0, 501, 25)
        p = 1 - 2 * (1 - 0.996)
        assert cryo.fit_t1(synth.t1_trace(80e-6, t1_grid)).value == pytest.approx(80e-6, rel=1e-6)
        t2 = cryo.fit_ramsey(synth.ramsey_trace(100e-6, 50e3, ramsey_grid)).value
        assert t2 == pytest.approx(100e-6, rel=1e-6)
        assert cryo.fit_rb(synth.rb_trace(p, lengths)).value == pytest.approx(0.996, rel=1e-6)

        rng = np.random.default_rng(808)
        n = 100
        t1 = np.array([cryo.fit_t1(synth.t1_trace(80e-6, t1_grid, noise=0.02, rng=rng)).value
                       for _ in range(n)])
        t2 = np.array([cryo.fit_ramsey(synth.ramsey_trace(100e-6, 50e3, ramsey_grid,
                                                          noise=0.02, rng=rng)).value
                       for _ in range(n)])
        fid = np.array([cryo.fit_rb(synth.rb_trace(p, lengths, noise=0.01, rng=rng)).value
                        for _ in range(n)])
        assert math.sqrt(np.mean((t1 / 80e-6 - 1) ** 2)) < 0.05
        assert math.sqrt(np.mean((t2 / 100e-6 - 1) ** 2)) < 0.08
        assert math.sqrt(np.mean((fid - 0.996) ** 2)) < 0.001


# --------------------------------------------------------------------------
# 9: synthetic closure
# --------------------------------------------------------------------------

def _se(rsd: float, n: int) -> float:
    return rsd / math.sqrt(2 * n)


def test_criterion_09_synthetic_closure(tmp_path):
    with criterion(9, "synthetic wafer closure", 30.0):
        geometry = WaferGeometry()
        model = synth.reference_point(seed=11)
        layout = synth.repeated_layout(geometry.sites(), 27, geometry, iv_every=9)
        ds = synth.generate(model, layout, "CLOSURE")
        ds = dataclasses.replace(ds, sheets=tuple(synth.generate_sheet(model)))
        assert len(ds.junctions) >= 10_000
        manifest = ingest.load_manifest(synth.write_dataset(ds, tmp_path / "wafer"))
        cfg = Config(iqr_filter=False)
        first = report.run_pipeline(manifest, cfg).report
        second = report.run_pipeline(manifest, cfg).report
        assert report.dumps_report(first) == report.dumps_report(second)

        sec = first["sections"]
        sheet = sec["sheet"]["result"]["BE"]["summary"]
        sh = sec["shorts"]["result"]
        jj = sec["junctions"]["result"]
        ivr = sec["iv"]["result"]

        # injected spreads
        s, w_be, w_te, ra = 0.016, 0.087, 0.051, 0.072
        v_bt, m_trap = 0.077, 0.03
        # the same spreads composed in closed form for lognormal factors
        r_be = math.sqrt((1 + s * s) * (1 + w_be ** 2) - 1)
        r_te = math.sqrt((1 + s * s) * (1 + w_te ** 2) - 1)
        jj_rsd = math.sqrt((1 + ra * ra) * (1 + w_be ** 2) * (1 + w_te ** 2) - 1)
        area = math.hypot(w_be, w_te)

        n_sheet = sheet["n"]
        n_be = sh["width_variability"]["BE"]["summary"]["n"]
        n_te = sh["width_variability"]["TE"]["summary"]["n"]
        n_jj = jj["resistance"]["summary"]["n"]
        var_s = _se(s, n_sheet) ** 2
        var_rbe, var_rte = _se(r_be, n_be) ** 2, _se(r_te, n_te) ** 2
        se_wbe = math.sqrt(r_be ** 2 * var_rbe + s * s * var_s) / w_be
        se_wte = math.sqrt(r_te ** 2 * var_rte + s * s * var_s) / w_te
        var_a = (r_be ** 2 * var_rbe + r_te ** 2 * var_rte + 4 * s * s * var_s) / area ** 2
        var_jj = _se(jj_rsd, n_jj) ** 2
        se_ra = math.sqrt(jj_rsd ** 2 * var_jj + area ** 2 * var_a) / ra

        checks = [
            ("sheet", sheet["rsd"], s, _se(s, n_sheet)),
            ("R_BE", sh["width_variability"]["BE"]["rsd_r"], r_be, math.sqrt(var_rbe)),
            ("R_TE", sh["width_variability"]["TE"]["rsd_r"], r_te, math.sqrt(var_rte)),
            ("w_BE", sh["width_variability"]["BE"]["rsd_w"], w_be, se_wbe),
            ("w_TE", sh["width_variability"]["TE"]["rsd_w"], w_te, se_wte),
            ("A", sh["area_rsd"], area, math.sqrt(var_a)),
            ("JJ", jj["resistance"]["summary"]["rsd"], jj_rsd, math.sqrt(var_jj)),
            ("RA", jj["oxide"]["rsd_ra"], ra, se_ra),
            ("V_BT", ivr["v_bt_pooled"]["rsd"], v_bt, _se(v_bt, ivr["v_bt_pooled"]["n"])),
            ("m", ivr["m_trap"]["rsd"], m_trap, _se(m_trap, ivr["m_trap"]["n"])),
        ]
        for name, got, want, se in checks:
            print(f"  {name:<5} recovered {got:.5f}  injected {want:.5f}  3 SE {3 * se:.5f}")
        misses = [(name, got, want, se) for name, got, want, se in checks
                  if abs(got - want) > 3 * se]
        assert not misses, misses
        y = jj["yield"]["yield_fraction"]
        assert abs(y - 0.928) <= 3 * math.sqrt(0.928 * 0.072 / jj["yield"]["n_total"])


# --------------------------------------------------------------------------
# 10: ingest
# --------------------------------------------------------------------------

def test_criterion_10_ingest(replica_manifest):
    with criterion(10, "fixture round trips and malformed inputs"):
        for entry in replica_manifest.files:
            data = ingest.read_entry(replica_manifest, entry)
            assert _roundtrip(entry.kind, data, replica_manifest.wafer_id) == data, entry.path
        assert len(MALFORMED) == 20
        for name, parser, text, error, row in MALFORMED:
            with pytest.raises(error) as exc:
                parser(text, source=f"{name}.bad")
            assert type(exc.value) is error, name
            assert exc.value.row == row, name
            assert f"{name}.bad" in str(exc.value) and f"row {row}" in str(exc.value)
