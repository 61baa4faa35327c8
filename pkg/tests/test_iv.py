from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qubit_pcm import iv, synth
from qubit_pcm.errors import InvalidParams, NoOhmicRegion, TooFewSamples
from qubit_pcm.iv import Detection, IVConfig, Regime
from qubit_pcm.model import DieSite, IVTrace

SITE = DieSite(3, 5, -45.0, 77.0)


def trace(v, i, compliance=0.1):
    return IVTrace("W1", SITE, "J1", 0.175, compliance, tuple(map(float, v)), tuple(map(float, i)))


def grid(n, step=0.01):
    return np.round(np.arange(n) * step, 12)


def test_reference_point_trace():
    a = iv.analyze_trace(synth.generate_iv(7100.0, 2.75, 1.2))
    direct, trap = a.regime(Regime.DIRECT), a.regime(Regime.TRAP_ASSISTED)
    assert direct.r_jj_ohm == pytest.approx(7100.0, rel=0.01)
    assert trap.m == pytest.approx(2.75, abs=0.05)
    assert a.breakthrough.v_bt == pytest.approx(1.2)
    assert a.breakthrough.detection is Detection.CURRENT_JUMP


def test_noiseless_exponents_are_exact():
    a = iv.analyze_trace(synth.generate_iv(7100.0, 2.75, 1.2))
    assert a.regime(Regime.DIRECT).m == pytest.approx(1.0, abs=1e-9)
    assert a.regime(Regime.TRAP_ASSISTED).m == pytest.approx(2.75, abs=1e-9)


@pytest.mark.parametrize("m", [2.1, 2.5, 3.0, 3.4])
@pytest.mark.parametrize("start", [0, 3, 9])
def test_power_law_window_exponent(m, start):
    v = grid(60)[1:]
    i = 3e-6 * v ** m
    fit = iv._fit(Regime.TRAP_ASSISTED, v[start:start + 4], i[start:start + 4])
    assert fit.m == pytest.approx(m, abs=1e-9)


def test_pure_ohmic_trace():
    v = grid(80)
    a = iv.analyze_trace(trace(v, v / 5000.0))
    assert len(a.fits) == 1
    (f,) = a.fits
    assert f.regime is Regime.DIRECT
    assert f.m == pytest.approx(1.0, abs=1e-6)
    assert f.r_jj_ohm == pytest.approx(5000.0, rel=1e-12)
    assert a.breakthrough.detection is Detection.NONE


def test_resistance_estimators_agree_on_clean_data():
    rng = np.random.default_rng(1)
    t = synth.generate_iv(7100.0, 2.75, 1.2, current_noise=0.01, rng=rng)
    d = iv.analyze_trace(t).regime(Regime.DIRECT)
    assert d.r_jj_ohm == pytest.approx(d.r_jj_mean_ohm, rel=0.01)


def test_trap_boundary_still_classified():
    a = iv.analyze_trace(synth.generate_iv(7100.0, 2.0001, 1.2))
    assert a.regime(Regime.TRAP_ASSISTED) is not None


def test_fine_grid_breakthrough():
    a = iv.analyze_trace(synth.generate_iv(7100.0, 2.75, 1.2037, grid_step=0.001))
    assert abs(a.breakthrough.v_bt - 1.2037) <= 0.001


def test_constructed_jump():
    v = grid(130)
    i = v / 7100.0
    i[v >= 1.05 - 1e-9] *= 50
    bt = iv.detect_breakthrough(trace(v, i))
    assert bt.v_bt == pytest.approx(1.04)
    assert bt.detection is Detection.CURRENT_JUMP


def test_brute_force_breakthrough_scan():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = int(rng.integers(20, 120))
        v = grid(n)
        i = (v + 0.01) / 7000.0
        k = int(rng.integers(1, n - 1))
        i[k + 1:] *= float(rng.uniform(6, 100))
        bt = iv.detect_breakthrough(trace(v, i))
        ratios = i[1:] / i[:-1]
        first = next(j for j, q in enumerate(ratios) if q > 5)
        assert bt.v_bt == v[first]


def test_sweep_without_jump():
    v = grid(51)
    bt = iv.detect_breakthrough(trace(v, v / 7100.0))
    assert bt.detection is Detection.NONE and bt.v_bt is None


def test_compliance_is_distinguished():
    v = grid(40)
    i = v / 10.0
    i[30:] = 0.1
    bt = iv.detect_breakthrough(trace(v, i, compliance=0.1))
    # 0.029 A -> 0.1 A is below the jump ratio, so the limit is what stops it
    assert bt.detection is Detection.COMPLIANCE_HIT
    assert bt.v_bt == pytest.approx(0.29)


def test_appending_after_jump_does_not_move_breakthrough():
    t = synth.generate_iv(7100.0, 2.75, 1.2)
    base = iv.detect_breakthrough(t)
    v = list(t.voltage_v) + [t.voltage_v[-1] + 0.01 * k for k in range(1, 6)]
    i = list(t.current_a) + [0.05] * 5
    assert iv.detect_breakthrough(trace(v, i)).v_bt == base.v_bt


@given(st.floats(min_value=1e-3, max_value=1e3))
def test_current_scale_rescales_resistance(c):
    t = synth.generate_iv(7100.0, 2.75, 1.2, compliance_a=1e9)
    scaled = dataclasses.replace(t, current_a=tuple(c * x for x in t.current_a),
                                 compliance_a=1e12)
    a = iv.segment_and_fit(t)[0]
    b = iv.segment_and_fit(scaled)[0]
    assert b.r_jj_ohm == pytest.approx(a.r_jj_ohm / c, rel=1e-9)


def test_segmentation_is_deterministic():
    rng = np.random.default_rng(4)
    t = synth.generate_iv(6500.0, 2.9, 1.1, current_noise=0.01, rng=rng)
    assert iv.segment_and_fit(t) == iv.segment_and_fit(t)


def test_superlinear_everywhere_has_no_ohmic_region():
    v = grid(70)[10:]
    with pytest.raises(NoOhmicRegion):
        iv.segment_and_fit(trace(v, 1e-4 * v ** 3))


def test_generator_rejects_bad_parameters():
    with pytest.raises(InvalidParams):
        synth.generate_iv(7100.0, 2.0, 1.2)
    with pytest.raises(InvalidParams):
        synth.generate_iv(7100.0, 2.75, 0.2)
    with pytest.raises(InvalidParams):
        synth.generate_iv(10.0, 2.75, 1.2, compliance_a=1e-3)


# --------------------------------------------------------------------------
# breakthrough statistics
# --------------------------------------------------------------------------

def test_identical_breakthroughs():
    res = iv.vbt_stats({0.175: [1.06] * 10, 1.0: [1.06] * 10})
    assert res.pooled.rsd == 0.0
    assert {s.mean for s in res.per_size.values()} == {1.06}
    assert res.verdict == "no significant dependence"


def test_shifted_size_is_flagged():
    rng = np.random.default_rng(2)
    res = iv.vbt_stats({0.175: 1.0 + 0.02 * rng.standard_normal(20),
                        1.0: 1.2 + 0.02 * rng.standard_normal(20)})
    assert res.area_dependent


def test_vbt_stats_preconditions():
    with pytest.raises(TooFewSamples):
        iv.vbt_stats({0.175: [1.0] * 20})
    with pytest.raises(TooFewSamples):
        iv.vbt_stats({0.175: [1.0] * 20, 1.0: [1.0] * 9})


def test_zero_current_is_not_a_jump():
    v = grid(60)
    bt = iv.detect_breakthrough(trace(v, v / 7100.0), IVConfig(noise_floor_a=0.0))
    assert bt.detection is Detection.NONE
