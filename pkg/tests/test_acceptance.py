"""Acceptance gate: criteria 1 to 9 at their stated tolerances and run-time limits.

Each test records its clauses; the terminal summary prints one PASS/FAIL
line per criterion.
"""

import math
import time

import numpy as np
import pytest

from socsoh import (
    CellSpec, EcmParams, NoiseModel, PackSnapshot, ParamEstimate, ParamSchedule, Segment, benchmark,
    f_symmetric, noise_amplification_f, optimal_x2_gap, run_scenario, simulate_profile,
)
from socsoh.analysis import convergence_map, ocv_noise_sigma, rmse_by_soc, run_manufactured
from socsoh.pipeline import C_RATES, ScenarioSpec, Toggles, compensation_pairs, simulate_case
from socsoh.tracking import init_ekf, track_trace

PUBLISHED_1RC_DEFAULT = {0.2: 0.0257, 0.5: 0.0611, 1.0: 0.1141}


class Clock:
    def __init__(self, limit_s):
        self.limit = limit_s
        self.t0 = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0

    def check(self, record, n):
        return record(n, self.elapsed < self.limit, f"runtime {self.elapsed:.1f} s < {self.limit:g} s")


def test_criterion_1_exact_recovery(surface, criterion):
    clock = Clock(10)
    every = Toggles(*([True] * 6))
    no_soc = Toggles(True, True, True, True, True, False)
    worst = 0.0
    for c in C_RATES:
        r = run_scenario(ScenarioSpec("sim_1rc", c, toggles=every), surface=surface)
        worst = max(worst, r.soc_rmse, r.soh_rmse)
    r = run_scenario(ScenarioSpec("sim_1rc", 0.5, toggles=no_soc), surface=surface)
    worst = max(worst, r.soc_rmse, r.soh_rmse)
    ok = criterion(1, worst <= 1e-6, f"max SOC/SOH RMSE {worst:.2e} <= 1e-6")
    ok &= clock.check(criterion, 1)
    assert ok


def test_criterion_2_noise_propagation(criterion):
    clock = Clock(30)
    sigma_y, tau = 0.15e-3, 100.0
    worst = 0.0
    for k, ratio in enumerate(np.geomspace(0.3, 3.0, 5)):
        x_d = ratio * tau
        mc = ocv_noise_sigma(10.0, x_d, tau, sigma_y, n_trials=20000, rng=k)
        worst = max(worst, abs(mc / (math.sqrt(f_symmetric(x_d, tau)) * sigma_y) - 1))
    ok = criterion(2, worst <= 0.15,
                   f"max |MC sigma / sqrt(f) sigma_y - 1| = {worst:.3f} <= 0.15 over x_d/tau in [0.3, 3]")
    ok &= clock.check(criterion, 2)
    assert ok


def test_criterion_3_theorems(criterion):
    clock = Clock(5)
    far = f_symmetric(50.0, 1.0) - 1
    near = f_symmetric(1e-6, 1.0)
    grid = np.linspace(0.01, 10.0, 200)
    fs = np.array([noise_amplification_f(0.0, x, 2 * x, 1.0) for x in grid])
    ok = criterion(3, 0 <= far <= 1e-10, f"f(50 tau) - 1 = {far:.1e}")
    ok &= criterion(3, near > 1e6, f"f(1e-6 tau) = {near:.2e}")
    ok &= criterion(3, bool(np.all(np.diff(fs) < 0)), "f strictly decreasing on 200 points")
    ok &= clock.check(criterion, 3)
    assert ok


@pytest.mark.xfail(strict=True, reason="midpoint is within 5% of optimal only for x3 - x1 up to about 0.5 tau")
def test_criterion_3_midpoint_near_optimal(criterion):
    tau, x1 = 150.0, 10.0
    spans = np.geomspace(0.1 * tau, 10 * tau, 40)
    ratios = []
    for span in spans:
        _, f_star, f_mid = optimal_x2_gap(x1, x1 + span, tau)
        ratios.append(f_mid / f_star)
    k = int(np.argmax(ratios))
    worst = ratios[k]
    criterion(3, worst <= 1.05, f"max f_mid/f_star = {worst:.3f} at x3 - x1 = {spans[k] / tau:.2f} tau "
                                f"(sweep 0.1 to 10 tau; <= 1.05 needs x3 - x1 <= ~0.5 tau)")
    assert worst <= 1.05


def test_criterion_4_fixed_point(surface, criterion):
    clock = Clock(10)
    worst_soc = worst_soh = 0.0
    statuses = set()
    for s in np.linspace(0.57, 0.77, 10):
        for h in np.linspace(0.8, 1.0, 10):
            soc, soh, status = run_manufactured(surface, s, h)
            statuses.add(status)
            worst_soc, worst_soh = max(worst_soc, abs(soc - s)), max(worst_soh, abs(soh - h))
    ok = criterion(4, worst_soc <= 5e-3 and worst_soh <= 5e-3 and statuses == {"ok"},
                   f"100 points: max |dSOC| {worst_soc:.1e}, max |dSOH| {worst_soh:.1e} <= 5e-3")
    ok &= clock.check(criterion, 4)
    assert ok


def test_criterion_5_convergence_map(surface, criterion):
    clock = Clock(60)
    socs, soc_rmse, soh_rmse = rmse_by_soc(convergence_map(surface))
    near = soh_rmse[np.abs(socs - 0.5) <= 0.05].max()
    band = soh_rmse[(socs >= 0.57) & (socs <= 0.77)].max()
    ok = criterion(5, soc_rmse.max() <= 5e-3, f"max SOC RMSE {100 * soc_rmse.max():.2f}% <= 0.5%")
    ok &= criterion(5, near >= 5 * band, f"SOH RMSE near 0.5 {100 * near:.2f}% vs band max {100 * band:.1e}% "
                                         f"(x{near / band:.0f})")
    ok &= clock.check(criterion, 5)
    assert ok


def test_criterion_6_scenario_ordering(surface, criterion):
    clock = Clock(300)
    one = {c: run_scenario(ScenarioSpec("sim_1rc", c), surface=surface).soh_rmse for c in C_RATES}
    two_default = run_scenario(ScenarioSpec("sim_2rc", 1.0), surface=surface).soh_rmse
    two_known = run_scenario(ScenarioSpec("sim_2rc", 1.0, toggles=Toggles(known_capacitor_voltage=True)),
                             surface=surface).soh_rmse
    vals = [one[c] for c in C_RATES]
    ok = criterion(6, vals[0] < vals[1] < vals[2],
                   "1RC default SOH RMSE " + " < ".join(f"{100 * v:.2f}%" for v in vals))
    ok &= criterion(6, two_known < two_default,
                    f"2RC 1 C known uc {100 * two_known:.2f}% < default {100 * two_default:.2f}%")
    factors = [one[c] / PUBLISHED_1RC_DEFAULT[c] for c in C_RATES]
    ok &= criterion(6, all(1 / 3 <= f <= 3 for f in factors),
                    "ratio to reference " + ", ".join(f"{f:.2f}" for f in factors) + " within x3")
    ok &= clock.check(criterion, 6)
    assert ok


def test_criterion_7_resistance_compensation(surface, criterion):
    clock = Clock(60)
    pairs = compensation_pairs(20, surface=surface)
    wins = int(np.sum(pairs[:, 1] < pairs[:, 0]))
    ok = criterion(7, wins == 20, f"compensated error lower in {wins}/20 paired runs "
                                  f"(mean {100 * pairs[:, 1].mean():.2f}% vs {100 * pairs[:, 0].mean():.2f}%)")
    ok &= clock.check(criterion, 7)
    assert ok


def test_criterion_8_ekf_tracking(surface, criterion):
    clock = Clock(30)
    spec = CellSpec(2.2)
    p = EcmParams(0.035, 0.02, 7500.0)
    prof = [Segment("cc", 1800, 1.1), Segment("rest", 600), Segment("cc", 1200, 1.1)]
    tr = simulate_profile(prof, spec, ParamSchedule("constant", p), surface, 0.9, NoiseModel(seed=8), soc0=0.3)
    model = ParamEstimate(p.r1, p.r2, p.c, p.tau, 0.0)
    err, sym, psd = [], 0.0, math.inf
    rows = track_trace(tr, init_ekf(tr.soc[0] + 0.1), model, spec, surface, PackSnapshot([tr.soc[0]], [0.9]))
    for _, soc, _, st in rows:
        err.append(soc)
        sym = max(sym, float(np.max(np.abs(st.p - st.p.T))))
        psd = min(psd, float(np.linalg.eigvalsh(st.p).min()))
    err = np.abs(np.array(err) - tr.soc)
    settled = np.flatnonzero(err >= 0.01)
    t_settle = tr.t[settled[-1] + 1] - tr.t[0] if settled.size else 0.0
    ok = criterion(8, t_settle <= 600, f"+10% SOC error below 1% after {t_settle:.0f} s <= 600 s")
    ok &= criterion(8, sym <= 1e-12 and psd >= -1e-12, f"max asymmetry {sym:.1e}, min eigenvalue {psd:.1e}")
    ok &= clock.check(criterion, 8)
    assert ok


def test_criterion_9_runtime_ratios(surface, criterion):
    clock = Clock(120)
    trace = simulate_case(ScenarioSpec("sim_1rc", 0.5), 0.9, 0, 1, surface)
    rows = {m: (ms, r) for m, ms, r in benchmark(["plain", "dr_comp", "ukf"], [trace], surface, reps=100)}
    ukf, dr = rows["ukf"][1], rows["dr_comp"][1]
    ok = criterion(9, ukf >= 50, f"UKF/plain {ukf:.0f}x >= 50 ({rows['plain'][0]:.2f} ms vs {rows['ukf'][0]:.1f} ms)")
    ok &= criterion(9, 1.2 <= dr <= 2.5, f"dR/plain {dr:.2f} in [1.2, 2.5]")
    ok &= clock.check(criterion, 9)
    assert ok
