import json

import numpy as np
import pytest

from socsoh.errors import InputError
from socsoh.pipeline import (
    C_RATES, DEFAULT_PARAMS, SCENARIO_ORDER, ScenarioSpec, Toggles, cell_params, make_schedule, report_json,
    run_scenario, scenario_block, write_block_csv,
)
from socsoh import benchmark


def test_spec_json_round_trip():
    spec = ScenarioSpec("sim_2rc", 1.0, toggles=Toggles(known_soc=True), seed=3, x3=90.0)
    assert ScenarioSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec


def test_spec_validation():
    with pytest.raises(InputError):
        ScenarioSpec("lab")
    with pytest.raises(InputError):
        ScenarioSpec("sim_1rc", 0.0)
    with pytest.raises(InputError):
        ScenarioSpec("experiment_csv", traces=("a.csv",), toggles=Toggles(no_voltage_noise=True))
    with pytest.raises(InputError):
        ScenarioSpec("experiment_csv")
    with pytest.raises(InputError):
        ScenarioSpec.from_json({"toggles": {"psychic": True}})


def test_cell_parameters_spread_within_ten_percent():
    assert cell_params(0, 5) == DEFAULT_PARAMS
    for cell in range(1, 6):
        p = cell_params(cell, 5)
        assert abs(p.r1 / DEFAULT_PARAMS.r1 - 1) <= 0.1
        assert abs(p.c / DEFAULT_PARAMS.c - 1) <= 0.1
    assert cell_params(3, 5) == cell_params(3, 5) != cell_params(3, 6)


def test_two_rc_schedule_keeps_total_resistance():
    one = make_schedule(DEFAULT_PARAMS, two_rc=False, fixed=False)
    two = make_schedule(DEFAULT_PARAMS, two_rc=True, fixed=False)
    for soc in (0.2, 0.8):
        assert two.at(soc).r2 + two.at(soc).r2b == pytest.approx(one.at(soc).r2)
    frozen = make_schedule(DEFAULT_PARAMS, two_rc=False, fixed=True)
    assert frozen.at(0.1) == frozen.at(0.9)


def test_same_seed_gives_identical_reports(surface):
    spec = ScenarioSpec("sim_1rc", 0.5, seed=4)
    a = run_scenario(spec, 2, 2, surface=surface)
    b = run_scenario(spec, 2, 2, surface=surface)
    assert report_json(a, runtime=False) == report_json(b, runtime=False)
    assert len(a.records) == 4 and a.n_failed == 0


def test_each_simplification_helps(surface, tmp_path):
    rows = scenario_block("1rc", n_cells=2, n_soh_levels=2, c_rates=(0.5,), surface=surface)
    assert [n for n, _, _ in rows] == [n for n, _ in SCENARIO_ORDER]
    rmse = [r.soh_rmse for _, _, r in rows]
    jitter = 1e-3
    assert all(b <= a + jitter for a, b in zip(rmse, rmse[1:]))
    assert rmse[-1] < 1e-6
    write_block_csv(tmp_path / "b.csv", rows)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "scenario,soc_rmse_pct_0.5C,soh_rmse_pct_0.5C" and len(lines) == 8


def test_unknown_group_is_refused():
    with pytest.raises(InputError):
        scenario_block("3rc")
    assert C_RATES == (0.2, 0.5, 1.0)


def test_experiment_csv_source_runs_on_saved_traces(surface, tmp_path):
    from socsoh.pipeline import simulate_case
    from socsoh import save_trace
    tr = simulate_case(ScenarioSpec("sim_1rc", 0.5), 0.9, 0, 1, surface)
    path = tmp_path / "cell_a.csv"
    save_trace(tr, path)
    rep = run_scenario(ScenarioSpec("experiment_csv", traces=(str(path),)), surface=surface)
    assert rep.records[0]["cell_id"] == "cell_a" and np.isfinite(rep.soh_rmse)


def test_benchmark_needs_enough_repetitions():
    with pytest.raises(ValueError):
        benchmark(["plain"], [], reps=10)
