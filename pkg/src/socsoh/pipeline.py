"""Scenario runner for the simulated ablation table and a timing harness."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .detect import detect_relaxations, gap_between, onset_index
from .ecm import (
    NOISELESS,
    CellTrace,
    EcmParams,
    NoiseModel,
    ParamSchedule,
    ParamSlope,
    build_incremental_capacity_profile,
    load_trace,
    simulate_profile,
)
from .errors import DivergenceError, InputError, SocSohError
from .ocv import CellSpec, OcvSurface
from .relax import (
    DEFAULT_TAIL,
    estimate_from_relaxation,
    estimate_record,
    estimate_with_dr_compensation,
)
from .synthetic import synthetic_surface
from .ukf import protocol_slice, run_ukf_protocol

DEFAULT_SPEC = CellSpec(q0=2.2)
DEFAULT_PARAMS = EcmParams(r1=0.035, r2=0.02, c=7500.0)  # tau = 150 s
DEFAULT_SLOPE = ParamSlope(r1=-0.01, r2=-0.006)  # ohms per unit SOC
SOC_START = 0.4
CELL_SPREAD = 0.1  # relative spread of per-cell parameters
FROZEN_AT_SOC = 0.7
ACCURATE_TAIL = 2

SOURCES = ("experiment_csv", "sim_1rc", "sim_2rc")
SCENARIO_ORDER = (
    ("Default", None),
    ("Known capacitor voltage", "known_capacitor_voltage"),
    ("No voltage noise", "no_voltage_noise"),
    ("Fixed RC parameters", "fixed_rc_parameters"),
    ("More accurate dV/dt", "accurate_dv_dt"),
    ("Fixed OCV curve", "fixed_ocv_curve"),
    ("Known SOC", "known_soc"),
)
C_RATES = (0.2, 0.5, 1.0)


@dataclass(frozen=True)
class Toggles:
    known_capacitor_voltage: bool = False
    no_voltage_noise: bool = False
    fixed_rc_parameters: bool = False
    accurate_dv_dt: bool = False
    fixed_ocv_curve: bool = False
    known_soc: bool = False

    def enabled(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name)]


@dataclass(frozen=True)
class ScenarioSpec:
    data_source: str = "sim_1rc"
    c_rate: float = 0.5
    temperature: float = 25.0
    toggles: Toggles = field(default_factory=Toggles)
    seed: int = 0
    traces: tuple[str, ...] = ()  # experiment_csv only
    x1: float = 10.0
    x3: float = 120.0

    def __post_init__(self):
        if self.data_source not in SOURCES:
            raise InputError(f"data_source must be one of {SOURCES}, got {self.data_source!r}")
        if self.data_source == "experiment_csv":
            sim_only = set(self.toggles.enabled()) - {"fixed_ocv_curve", "known_soc"}
            if sim_only:
                raise InputError(f"toggles {sorted(sim_only)} need a simulated data source")
            if not self.traces:
                raise InputError("experiment_csv needs trace paths")
        elif not self.c_rate > 0:
            raise InputError("c_rate must be positive")

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioSpec":
        try:
            tog = Toggles(**obj.get("toggles", {}))
            rest = {k: v for k, v in obj.items() if k != "toggles"}
            if "traces" in rest:
                rest["traces"] = tuple(rest["traces"])
            return cls(toggles=tog, **rest)
        except TypeError as exc:
            raise InputError(f"malformed scenario JSON: {exc}") from exc

    def to_json(self) -> dict:
        d = asdict(self)
        d["traces"] = list(self.traces)
        return d


@dataclass
class RunReport:
    spec: ScenarioSpec
    records: list[dict]
    soc_rmse: float
    soh_rmse: float
    runtime_ms: float
    n_failed: int = 0

    def to_json(self) -> dict:
        return {"config": self.spec.to_json(), "soc_rmse": self.soc_rmse, "soh_rmse": self.soh_rmse,
                "n_failed": self.n_failed, "runtime_ms": self.runtime_ms, "records": self.records}


def cell_params(cell: int, seed: int) -> EcmParams:
    """Per-cell parameters: the defaults scaled by a seeded +/-10 % factor."""
    if cell == 0:
        return DEFAULT_PARAMS
    g = np.random.default_rng([seed, cell]).uniform(1 - CELL_SPREAD, 1 + CELL_SPREAD, 3)
    return EcmParams(DEFAULT_PARAMS.r1 * g[0], DEFAULT_PARAMS.r2 * g[1], DEFAULT_PARAMS.c * g[2])


def make_schedule(base: EcmParams, *, two_rc: bool, fixed: bool) -> ParamSchedule:
    slope = DEFAULT_SLOPE
    if two_rc:
        frac = 0.7
        base = base.split_2rc(frac)
        slope = ParamSlope(r1=slope.r1, r2=frac * slope.r2, r2b=(1 - frac) * slope.r2)
    sched = ParamSchedule("soc_linear", base, slope)
    return sched.frozen(FROZEN_AT_SOC) if fixed else sched


def simulate_case(spec: ScenarioSpec, soh: float, cell: int, run_seed: int, surface: OcvSurface,
                  cell_spec: CellSpec = DEFAULT_SPEC) -> CellTrace:
    two_rc = spec.data_source == "sim_2rc"
    sched = make_schedule(cell_params(cell, spec.seed), two_rc=two_rc, fixed=spec.toggles.fixed_rc_parameters)
    noise = NOISELESS if spec.toggles.no_voltage_noise else NoiseModel(seed=run_seed)
    prof = build_incremental_capacity_profile(spec.c_rate, cell_spec, soc_start=SOC_START)
    return simulate_profile(prof, cell_spec, sched, surface, soh, noise, two_rc=two_rc, soc0=SOC_START,
                            temperature=spec.temperature)


def estimate_trace(trace: CellTrace, spec: ScenarioSpec, surface: OcvSurface, cell_spec: CellSpec = DEFAULT_SPEC,
                   *, dr_comp: bool = True, soh_true: float | None = None):
    """Detect, pair and estimate one trace under the spec's toggles.

    Returns (estimate, window-1 onset index, converged-or-fallback flag).
    A diverged iteration falls back to its last iterate.
    """
    tog = spec.toggles
    windows = detect_relaxations(trace, x3=spec.x3, attach_uc=tog.known_capacitor_voltage)
    n_tail = ACCURATE_TAIL if tog.accurate_dv_dt else DEFAULT_TAIL
    est_surface = surface
    if tog.fixed_ocv_curve:
        h = soh_true if soh_true is not None else float(trace.soh[0])
        est_surface = surface.at_soh(h)
    w1 = windows[0]
    a = onset_index(trace, w1)
    try:
        if dr_comp:
            if len(windows) < 2:
                raise SocSohError("dR compensation needs two qualifying rests")
            w2 = windows[1]
            b = onset_index(trace, w2)
            known = (float(trace.soc[a]), float(trace.soc[b])) if tog.known_soc else None
            gap = gap_between(trace, w1, w2)
            est = estimate_with_dr_compensation(w1, w2, gap, cell_spec, est_surface, spec.x1, spec.x3,
                                                n_tail=n_tail, known_soc=known)
        else:
            known = float(trace.soc[a]) if tog.known_soc else None
            est, _ = estimate_from_relaxation(w1, cell_spec, est_surface, spec.x1, spec.x3,
                                              n_tail=n_tail, known_soc=known)
        return est, a, True
    except DivergenceError as exc:
        return exc.last, a, False


def run_scenario(spec: ScenarioSpec, n_cells: int = 6, n_soh_levels: int = 3, *,
                 surface: OcvSurface | None = None, cell_spec: CellSpec = DEFAULT_SPEC,
                 dr_comp: bool = True) -> RunReport:
    """Estimate SOC/SOH on every (cell, SOH level) trace and aggregate RMSE against truth."""
    surface = synthetic_surface(spec.temperature) if surface is None else surface
    records, soc_err, soh_err, times = [], [], [], []
    n_failed = 0
    if spec.data_source == "experiment_csv":
        cases = [(Path(p).stem, None, load_trace(p)) for p in spec.traces]
    else:
        cases = []
        for cell in range(n_cells):
            for j, soh in enumerate(np.linspace(0.8, 1.0, n_soh_levels)):
                run_seed = spec.seed * 100_000 + cell * 100 + j
                cases.append((f"cell{cell}_soh{soh:.3f}", (cell, float(soh), run_seed), None))
    for name, sim, trace in cases:
        if trace is None:
            cell, soh, run_seed = sim
            trace = simulate_case(spec, soh, cell, run_seed, surface, cell_spec)
        soh_true = float(trace.soh[0]) if trace.soh is not None else None
        t0 = time.perf_counter()
        try:
            est, a, ok = estimate_trace(trace, spec, surface, cell_spec, dr_comp=dr_comp, soh_true=soh_true)
        except SocSohError as exc:
            raise type(exc)(f"scenario {spec.data_source} {spec.c_rate} C, {name}: {exc}") from exc
        times.append(time.perf_counter() - t0)
        n_failed += not ok
        rec = estimate_record(est, cell_id=name, t0=float(trace.t[a]), method="dr_comp" if dr_comp else "plain")
        if trace.soc is not None:
            rec["soc_true"], rec["soh_true"] = float(trace.soc[a]), soh_true
            soc_err.append(est.soc - trace.soc[a])
            soh_err.append(est.soh - soh_true)
        records.append(rec)

    def rmse(e):
        return float(math.sqrt(np.mean(np.square(e)))) if e else math.nan

    return RunReport(spec, records, rmse(soc_err), rmse(soh_err), 1e3 * float(np.mean(times)), n_failed)


def scenario_block(group: str, *, n_cells: int = 6, n_soh_levels: int = 3, seed: int = 0,
                   c_rates: Sequence[float] = C_RATES, surface: OcvSurface | None = None,
                   ) -> list[tuple[str, float, RunReport]]:
    """Cumulative ablation rows for ``group`` ('1rc' or '2rc'): each row adds one simplification."""
    source = {"1rc": "sim_1rc", "2rc": "sim_2rc"}.get(group)
    if source is None:
        raise InputError(f"unknown scenario group {group!r}; use '1rc' or '2rc'")
    surface = synthetic_surface() if surface is None else surface
    out = []
    for c in c_rates:
        tog = Toggles()
        for name, flag in SCENARIO_ORDER:
            if flag:
                tog = replace(tog, **{flag: True})
            spec = ScenarioSpec(source, c, toggles=tog, seed=seed)
            out.append((name, c, run_scenario(spec, n_cells, n_soh_levels, surface=surface)))
    return out


def write_block_csv(path, rows: list[tuple[str, float, RunReport]]) -> None:
    """One line per scenario with SOC/SOH RMSE (percent) per C-rate."""
    rates = sorted({c for _, c, _ in rows})
    names = list(dict.fromkeys(n for n, _, _ in rows))
    table = {(n, c): r for n, c, r in rows}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario"] + [f"{k}_{c:g}C" for c in rates for k in ("soc_rmse_pct", "soh_rmse_pct")])
        for n in names:
            vals = []
            for c in rates:
                r = table[(n, c)]
                vals += [f"{100 * r.soc_rmse:.2f}", f"{100 * r.soh_rmse:.2f}"]
            w.writerow([n] + vals)


# --- timing --------------------------------------------------------------

def _time_calls(fn: Callable[[], object], reps: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(samples))


def method_callables(trace: CellTrace, surface: OcvSurface, cell_spec: CellSpec = DEFAULT_SPEC,
                     x1: float = 10.0, x3: float = 120.0) -> dict[str, Callable[[], object]]:
    """Zero-argument callables per method on one trace; detection happens once, outside the timed region."""
    w = detect_relaxations(trace, x3=x3)
    gap = gap_between(trace, w[0], w[1]) if len(w) > 1 else None
    proto = protocol_slice(trace, x3=x3)
    calls = {
        "plain": lambda: estimate_from_relaxation(w[0], cell_spec, surface, x1, x3),
        "ukf": lambda: run_ukf_protocol(proto, cell_spec, surface, x1=x1, x3=x3),
    }
    if gap is not None:
        calls["dr_comp"] = lambda: estimate_with_dr_compensation(w[0], w[1], gap, cell_spec, surface, x1, x3)
    return calls


def benchmark(methods: Sequence[str], trace_set: Sequence[CellTrace], surface: OcvSurface | None = None, *,
              reps: int = 100, warmup: int = 5, cell_spec: CellSpec = DEFAULT_SPEC) -> list[tuple[str, float, float]]:
    """(method, median ms per call, ratio to the first method) over ``trace_set``.

    Each method runs ``reps`` timed calls per trace after ``warmup`` discarded calls.
    """
    if reps < 100:
        raise ValueError("benchmark needs at least 100 repetitions")
    surface = synthetic_surface() if surface is None else surface
    per_trace = [method_callables(tr, surface, cell_spec) for tr in trace_set]
    rows = []
    for m in methods:
        meds = [_time_calls(calls[m], reps, warmup) for calls in per_trace]
        rows.append((m, float(np.median(meds))))
    ref = rows[0][1]
    return [(m, ms, ms / ref) for m, ms in rows]


def write_benchmark_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "median_ms", "ratio"])
        for m, ms, r in rows:
            w.writerow([m, f"{ms:.4f}", f"{r:.3f}"])


def report_json(report: RunReport, *, runtime: bool = True) -> str:
    obj = report.to_json()
    if not runtime:
        obj.pop("runtime_ms")
    return json.dumps(obj, indent=2, sort_keys=True)


def compensation_pairs(n_runs: int = 20, *, c_rate: float = 1.0, tau: float = 20.0, seed: int = 0,
                       surface: OcvSurface | None = None, cell_spec: CellSpec = DEFAULT_SPEC,
                       ) -> np.ndarray:
    """Paired |SOH error| (plain, dR-compensated) on noiseless traces with SOC-varying resistances.

    Each run draws SOH and the resistance slopes from ``seed``; ``tau`` sets
    the RC time constant through C.
    """
    surface = synthetic_surface() if surface is None else surface
    spec = ScenarioSpec("sim_1rc", c_rate, toggles=Toggles(no_voltage_noise=True), seed=seed)
    out = []
    for k in range(n_runs):
        g = np.random.default_rng([seed, k, 7])
        soh = float(g.uniform(0.8, 1.0))
        slope = ParamSlope(r1=float(g.uniform(-0.02, -0.005)), r2=float(g.uniform(-0.012, -0.003)))
        base = replace(DEFAULT_PARAMS, c=tau / DEFAULT_PARAMS.r2)
        sched = ParamSchedule("soc_linear", base, slope)
        prof = build_incremental_capacity_profile(c_rate, cell_spec, soc_start=SOC_START)
        trace = simulate_profile(prof, cell_spec, sched, surface, soh, NOISELESS, soc0=SOC_START)
        errs = []
        for dr in (False, True):
            est, _, _ = estimate_trace(trace, spec, surface, cell_spec, dr_comp=dr)
            errs.append(abs(est.soh - soh))
        out.append(errs)
    return np.array(out)
