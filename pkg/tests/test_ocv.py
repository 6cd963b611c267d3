import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import polynomial as P

from socsoh import CellSpec, OcvSurface, PolyCoeffs, eval_ocv, fit_ocv_poly, fit_surface, invert_ocv
from socsoh.errors import DomainError, FitError, InputError, NoRootError
from socsoh.ocv import read_ocv_csv, write_ocv_csv

from conftest import monotone_coeffs


def test_poly_coeffs_needs_ten_finite_values():
    with pytest.raises(ValueError):
        PolyCoeffs(np.zeros(9))
    with pytest.raises(ValueError):
        PolyCoeffs([np.nan] + [0.0] * 9)


def test_cell_spec_capacity_in_ampere_seconds():
    assert CellSpec(2.0).q0_as == 7200.0
    with pytest.raises(ValueError):
        CellSpec(0.0)


def test_fit_recovers_an_exact_degree_nine_polynomial():
    rng = np.random.default_rng(3)
    a = rng.normal(size=10)
    soc = np.linspace(0, 1, 60)
    coeffs, rms = fit_ocv_poly(np.column_stack([soc, P.polyval(soc, a)]))
    assert rms < 1e-9
    assert np.allclose(coeffs.a, a, atol=1e-6)


def test_fit_rejects_too_few_distinct_points():
    soc = np.repeat([0.1, 0.5, 0.9], 5)
    with pytest.raises(FitError):
        fit_ocv_poly(np.column_stack([soc, 3.5 + soc]))


def test_cubic_surface_hand_values(cubic_surface):
    # halfway between the two levels the coefficients average
    assert eval_ocv(cubic_surface, 0.5, 0.9) == pytest.approx(3.45 + 0.75 * 0.5 + 0.15 * 0.125, abs=1e-14)
    assert float(cubic_surface.docv_dsoc(0.5, 1.0)) == pytest.approx(0.7 + 3 * 0.1 * 0.25)
    assert float(cubic_surface.d2ocv_dsoc2(0.5, 0.8)) == pytest.approx(6 * 0.2 * 0.5)


def test_soh_extrapolation_is_clamped(cubic_surface):
    assert eval_ocv(cubic_surface, 0.3, 1.04) == eval_ocv(cubic_surface, 0.3, 1.0)
    with pytest.raises(DomainError):
        eval_ocv(cubic_surface, 0.3, 1.06)
    with pytest.raises(DomainError):
        eval_ocv(cubic_surface, 1.2, 1.0)


def test_knot_values_match_each_level_exactly(surface):
    soc = np.linspace(0, 1, 41)
    for lv, c in surface.grid:
        assert np.array_equal(surface.ocv(soc, lv), P.polyval(soc, c.a))


def test_at_soh_freezes_the_curve(surface):
    frozen = surface.at_soh(0.87)
    assert frozen.soh_band == surface.soh_band
    for h in (0.6, 1.0, 1.15):
        assert float(frozen.ocv(0.6, h)) == pytest.approx(float(surface.ocv(0.6, 0.87)), abs=1e-12)


def test_invert_linear_curve_by_hand():
    lin = OcvSurface(25.0, [(1.0, monotone_coeffs(3.0, 1.0))])
    assert invert_ocv(lin, 3.25, 1.0) == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(NoRootError):
        invert_ocv(lin, 4.5, 1.0)
    with pytest.raises(DomainError):
        invert_ocv(lin, 3.25, 1.0, (0.6, 0.4))


@settings(max_examples=60, deadline=None)
@given(soc=st.floats(0.05, 0.95), soh=st.floats(0.8, 1.0))
def test_invert_round_trip_on_the_synthetic_surface(surface, soc, soh):
    v = eval_ocv(surface, soc, soh)
    assert invert_ocv(surface, v, soh) == pytest.approx(soc, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), soc=st.floats(0.02, 0.98), soh=st.floats(0.8, 1.0))
def test_analytic_derivatives_match_finite_differences(seed, soc, soh):
    rng = np.random.default_rng(seed)
    grid = [(lv, monotone_coeffs() + 0.05 * rng.normal(size=10)) for lv in (0.8, 0.9, 1.0)]
    s = OcvSurface(25.0, grid)
    h = 1e-5
    fd1 = (float(s.ocv(soc + h, soh)) - float(s.ocv(soc - h, soh))) / (2 * h)
    fd2 = (float(s.docv_dsoc(soc + h, soh)) - float(s.docv_dsoc(soc - h, soh))) / (2 * h)
    d1, d2 = float(s.docv_dsoc(soc, soh)), float(s.d2ocv_dsoc2(soc, soh))
    assert abs(fd1 - d1) <= 1e-5 * max(abs(d1), 1.0)
    assert abs(fd2 - d2) <= 1e-5 * max(abs(d2), 1.0)


def test_surface_json_round_trip(surface, tmp_path):
    path = tmp_path / "s.json"
    surface.save(path)
    back = OcvSurface.load(path)
    assert np.array_equal(back.soh_levels, surface.soh_levels)
    assert float(back.ocv(0.4, 0.93)) == float(surface.ocv(0.4, 0.93))
    path.write_text(json.dumps({"grid": []}))
    with pytest.raises(InputError):
        OcvSurface.load(path)


def test_ocv_csv_round_trip_and_bad_rows(tmp_path):
    samples = np.column_stack([np.linspace(0, 1, 11), np.linspace(3.4, 4.2, 11)])
    path = tmp_path / "ocv.csv"
    write_ocv_csv(path, samples)
    assert np.array_equal(read_ocv_csv(path), samples)
    path.write_text("soc,ocv_volts\n0.1,abc\n")
    with pytest.raises(InputError):
        read_ocv_csv(path)


def test_fit_surface_pools_and_orders_levels():
    soc = np.linspace(0, 1, 30)
    curves = {1.0: np.column_stack([soc, 3.5 + 0.7 * soc]), 0.8: np.column_stack([soc, 3.4 + 0.8 * soc])}
    s, rms = fit_surface(25.0, curves)
    assert s.soh_levels.tolist() == [0.8, 1.0]
    assert max(rms.values()) < 1e-9
