import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socsoh import (
    NOISELESS, CellSpec, CellState, EcmParams, NoiseModel, ParamSchedule, ParamSlope, Segment,
    build_incremental_capacity_profile, load_trace, save_trace, simulate_profile, step,
)
from socsoh.errors import InputError, SimulationError

SPEC = CellSpec(2.0)
BASE = EcmParams(0.03, 0.02, 5000.0)


def _charge_rest(sample_dt=1.0, noise=NOISELESS, schedule=None, two_rc=False, surface=None):
    prof = [Segment("cc", 600, 2.0), Segment("rest", 600), Segment("cc", 300, -1.0)]
    sched = schedule or ParamSchedule("constant", BASE)
    return simulate_profile(prof, SPEC, sched, surface, 0.9, noise, sample_dt, soc0=0.3, two_rc=two_rc)


def test_step_matches_closed_form_charging_of_the_capacitor():
    s = CellState(0.2)
    for _ in range(100):
        s = step(s, BASE, 1.5, 2.0, 2.0)
    t = 200.0
    assert s.uc == pytest.approx(BASE.r2 * 1.5 * (1 - math.exp(-t / BASE.tau)), rel=1e-12)
    assert s.soc == pytest.approx(0.2 + 1.5 * t / 7200.0, rel=1e-12)


def test_step_rejects_bad_inputs():
    with pytest.raises(ValueError):
        step(CellState(0.5), BASE, 1.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        step(CellState(0.5), BASE, 1.0, 1.0, -2.0)


def test_params_validate_and_split_preserves_totals():
    with pytest.raises(ValueError):
        EcmParams(-0.01, 0.02, 100.0)
    two = BASE.split_2rc(0.7)
    assert two.r2 + two.r2b == pytest.approx(BASE.r2)
    assert two.tau == pytest.approx(0.7 * BASE.tau)
    assert two.tau_b == pytest.approx(0.3 * BASE.tau)


def test_linear_schedule_interpolates_and_freezes():
    sched = ParamSchedule("soc_linear", BASE, ParamSlope(r1=-0.01))
    assert sched.at(0.5).r1 == pytest.approx(0.025)
    assert sched.at(2.0).r1 == pytest.approx(0.02)  # clamped to soc 1
    assert sched.frozen(0.5).at(0.9).r1 == pytest.approx(0.025)


def test_rest_keeps_soc_and_decays_uc_monotonically(surface):
    tr = _charge_rest(surface=surface)
    rest = tr.i == 0
    assert np.all(tr.soc[rest] == tr.soc[rest][0])
    uc = tr.uc[rest]
    assert np.all(np.diff(uc) < 0) and np.all(uc > 0)


def test_soc_follows_coulomb_count(surface):
    tr = _charge_rest(surface=surface)
    q_as = SPEC.q0_as * 0.9
    expect = 0.3 + np.concatenate([[0.0], np.cumsum(tr.i_true[:-1])]) / q_as
    assert np.allclose(tr.soc, expect, atol=1e-13)


@pytest.mark.parametrize("two_rc", [False, True])
def test_halving_the_step_leaves_the_trace_unchanged(surface, two_rc):
    sched = ParamSchedule("constant", BASE.split_2rc() if two_rc else BASE)
    coarse = _charge_rest(1.0, schedule=sched, two_rc=two_rc, surface=surface)
    fine = _charge_rest(0.5, schedule=sched, two_rc=two_rc, surface=surface)
    assert np.max(np.abs(fine.v_true[::2] - coarse.v_true)) < 1e-9


def test_same_seed_reproduces_bit_identically(surface):
    a = _charge_rest(noise=NoiseModel(seed=4), surface=surface)
    b = _charge_rest(noise=NoiseModel(seed=4), surface=surface)
    c = _charge_rest(noise=NoiseModel(seed=5), surface=surface)
    assert np.array_equal(a.v, b.v) and np.array_equal(a.i, b.i)
    assert not np.array_equal(a.v, c.v)
    assert np.array_equal(a.v_true, c.v_true)


def test_noise_has_the_requested_spread(surface):
    tr = _charge_rest(noise=NoiseModel(sigma_v=1e-3, sigma_i=0.0, seed=1), surface=surface)
    assert np.std(tr.v - tr.v_true) == pytest.approx(1e-3, rel=0.1)
    assert np.array_equal(tr.i, tr.i_true)


def test_terminal_voltage_decomposition(surface):
    tr = _charge_rest(surface=surface)
    ocv = np.array([surface.ocv(s, 0.9) for s in tr.soc])
    assert np.allclose(tr.v_true, ocv + tr.uc + BASE.r1 * tr.i_true, atol=1e-12)


def test_incremental_profile_reaches_cv_and_holds_voltage(surface):
    prof = build_incremental_capacity_profile(0.5, SPEC, soc_start=0.6)
    tr = simulate_profile(prof, SPEC, ParamSchedule("constant", BASE), surface, 0.95, soc0=0.6)
    cv = tr.v_true >= SPEC.v_max - 1e-9
    assert cv.sum() > 100
    assert np.all(np.diff(tr.i_true[cv]) <= 1e-12)  # CV current tapers


def test_cv_without_series_resistance_is_refused(surface):
    prof = [Segment("cv", 10, 4.0)]
    with pytest.raises(SimulationError):
        simulate_profile(prof, SPEC, ParamSchedule("constant", EcmParams(0.0, 0.02, 100.0)), surface, 1.0, soc0=0.5)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment("pulse", 10)
    with pytest.raises(ValueError):
        Segment("cc", 0)


def test_trace_csv_round_trip(surface, tmp_path):
    tr = _charge_rest(noise=NoiseModel(seed=2), surface=surface)
    path = tmp_path / "trace.csv"
    save_trace(tr, path)
    back = load_trace(path)
    assert np.array_equal(back.v, tr.v) and np.array_equal(back.soc, tr.soc)
    path.write_text("t_s,i_a\n0,1\n")
    with pytest.raises(InputError):
        load_trace(path, truth=False)


@settings(max_examples=25, deadline=None)
@given(i=st.floats(-3, 3), dt=st.floats(0.1, 50), uc0=st.floats(-0.1, 0.1))
def test_step_composes_over_split_intervals(i, dt, uc0):
    whole = step(CellState(0.5, uc0), BASE, i, dt, 2.0)
    half = step(step(CellState(0.5, uc0), BASE, i, dt / 2, 2.0), BASE, i, dt / 2, 2.0)
    assert half.uc == pytest.approx(whole.uc, abs=1e-14)
    assert half.soc == pytest.approx(whole.soc, abs=1e-14)


def test_empty_second_pair_reduces_to_one_rc(surface):
    sched = ParamSchedule("constant", EcmParams(0.03, 0.02, 5000.0, r2b=0.0, cb=123.0))
    one = _charge_rest(schedule=sched, surface=surface)
    two = _charge_rest(schedule=sched, two_rc=True, surface=surface)
    assert np.array_equal(one.v_true, two.v_true)
