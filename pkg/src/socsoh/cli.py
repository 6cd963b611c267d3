"""Command-line entry point: ``socsoh <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, pipeline
from .detect import detect_relaxations, gap_between
from .ecm import (
    NOISELESS,
    EcmParams,
    NoiseModel,
    ParamSchedule,
    ParamSlope,
    build_incremental_capacity_profile,
    load_trace,
    save_trace,
    simulate_profile,
)
from .errors import InputError, SocSohError
from .ocv import CellSpec, OcvSurface, fit_surface, read_ocv_csv
from .relax import estimate_from_relaxation, estimate_record, estimate_with_dr_compensation
from .synthetic import synthetic_surface
from .tracking import PackSnapshot, init_ekf, track_trace, write_tracking_csv
from .ukf import protocol_slice, run_ukf_protocol


def _surface(path) -> OcvSurface:
    return synthetic_surface() if path is None else OcvSurface.load(path)


def _spec(args) -> CellSpec:
    return CellSpec(q0=args.q0)


def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from exc


def cmd_fit_surface(args) -> None:
    if args.synthetic:
        surface = synthetic_surface(args.temperature)
    else:
        curves: dict[float, list] = {}
        for item in args.csv:
            level, _, path = item.partition("=")
            if not path:
                raise InputError(f"--csv expects SOH=PATH, got {item!r}")
            curves.setdefault(float(level), []).extend(read_ocv_csv(path).tolist())
        surface, rms = fit_surface(args.temperature, curves)
        for lv, r in rms.items():
            print(f"soh {lv:.3f}: residual RMS {1e3 * r:.3f} mV", file=sys.stderr)
    surface.save(args.out)


def cmd_simulate(args) -> None:
    spec = _spec(args)
    surface = _surface(args.surface)
    base = EcmParams(args.r1, args.r2, args.c)
    if args.two_rc:
        base = base.split_2rc()
    slope = ParamSlope(r1=args.dr1, r2=args.dr2)
    sched = ParamSchedule("constant", base) if args.constant else ParamSchedule("soc_linear", base, slope)
    noise = NOISELESS if args.no_noise else NoiseModel(args.sigma_v, args.sigma_i, args.seed)
    prof = build_incremental_capacity_profile(args.c_rate, spec, soc_start=args.soc_start)
    trace = simulate_profile(prof, spec, sched, surface, args.soh, noise, two_rc=args.two_rc, soc0=args.soc_start)
    save_trace(trace, args.out)
    print(f"wrote {len(trace)} samples to {args.out}", file=sys.stderr)


def cmd_detect(args) -> None:
    trace = load_trace(args.trace)
    ws = detect_relaxations(trace, args.v_threshold, args.i_band, x3=args.x3)
    _emit([{"t0_s": w.t0, "mode": w.mode, "i0_a": w.i0, "delta_u_v": w.delta_u, "duration_s": w.span}
           for w in ws], args.out)


def cmd_estimate(args) -> None:
    trace = load_trace(args.trace)
    spec, surface = _spec(args), _surface(args.surface)
    ws = detect_relaxations(trace, args.v_threshold, args.i_band, x3=args.x3)
    if args.dr_comp:
        if len(ws) < 2:
            raise SocSohError("dR compensation needs two qualifying rests")
        est = estimate_with_dr_compensation(ws[0], ws[1], gap_between(trace, ws[0], ws[1]), spec, surface,
                                            args.x1, args.x3)
    else:
        est, _ = estimate_from_relaxation(ws[0], spec, surface, args.x1, args.x3)
    _emit(estimate_record(est, cell_id=args.cell_id, t0=ws[0].t0, method="dr_comp" if args.dr_comp else "plain"),
          args.out)


def cmd_track(args) -> None:
    trace = load_trace(args.trace)
    spec, surface = _spec(args), _surface(args.surface)
    ws = detect_relaxations(trace, x3=args.x3)
    est, params = estimate_from_relaxation(ws[0], spec, surface, args.x1, args.x3)
    a = int(np.searchsorted(trace.t, ws[0].t0))
    tail = trace.slice(a, len(trace))
    soh = est.soh if args.soh is None else args.soh
    if bool(args.pack_soc0) != bool(args.pack_soh):
        raise InputError("--pack-soc0 and --pack-soh must be given together")
    if args.pack_soc0:
        soc0, sohs = _floats(args.pack_soc0), _floats(args.pack_soh)
        snap = PackSnapshot(soc0, sohs, args.reference)
    else:
        snap = PackSnapshot([est.soc], [soh])
    # at the rest onset the terminal voltage is OCV plus the capacitor voltage
    state = init_ekf(float(snap.soc0[snap.reference]), float(trace.v[a]) - params.ocv)
    n = write_tracking_csv(args.out, track_trace(tail, state, params, spec, surface, snap))
    print(f"wrote {n} rows to {args.out}", file=sys.stderr)


def cmd_compare_ukf(args) -> None:
    trace = load_trace(args.trace)
    spec, surface = _spec(args), _surface(args.surface)
    proto = protocol_slice(trace, x3=args.x3)
    soc, soh, runtime = run_ukf_protocol(proto, spec, surface, x1=args.x1, x3=args.x3)
    rec = {"cell_id": args.cell_id, "t0_s": float(proto.t[0]), "soc": soc, "soh": soh, "method": "ukf",
           "runtime_ms": 1e3 * runtime}
    if proto.soc is not None:
        rec["soc_true"], rec["soh_true"] = float(proto.soc[-1]), float(proto.soh[-1])
    _emit(rec, args.out)


def cmd_scenarios(args) -> None:
    rows = pipeline.scenario_block(args.group, n_cells=args.n_cells, n_soh_levels=args.n_soh, seed=args.seed,
                                   c_rates=_floats(args.c_rates))
    pipeline.write_block_csv(args.out, rows)
    print(f"wrote {args.out}", file=sys.stderr)


def cmd_sensitivity(args) -> None:
    x3s = np.linspace(args.x3_min, args.x3_max, args.n)
    rows = analysis.sensitivity_sweep(args.x1, args.tau, x3s)
    analysis.write_sweep_csv(args.out, rows)
    for x1, x2, x3, tau, f in rows[:: max(len(rows) // 5, 1)]:
        print(f"x3={x3:8.2f} s  noise amplification sqrt(f)={math.sqrt(f):.4g}", file=sys.stderr)


def cmd_convergence_map(args) -> None:
    surface = _surface(args.surface)
    soc = np.linspace(args.soc_min, args.soc_max, args.n_soc)
    soh = np.linspace(args.soh_min, args.soh_max, args.n_soh)
    cells = analysis.convergence_map(surface, soc, soh)
    analysis.write_map_csv(args.out, cells)
    _, soc_r, _ = analysis.rmse_by_soc(cells)
    print(f"wrote {len(cells)} cells; max per-SOC SOC RMSE {100 * np.nanmax(soc_r):.3f}%", file=sys.stderr)


def cmd_benchmark(args) -> None:
    surface = _surface(args.surface)
    traces = [load_trace(p) for p in args.trace]
    rows = pipeline.benchmark(args.methods.split(","), traces, surface, reps=args.reps, cell_spec=_spec(args))
    pipeline.write_benchmark_csv(args.out, rows)
    for m, ms, r in rows:
        print(f"{m:8s} {ms:10.4f} ms  x{r:.2f}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="socsoh", description="Relaxation-based SOC/SOH estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, surface=True, window=True):
        sp.add_argument("--q0", type=float, default=2.2, help="new-cell capacity, Ah")
        if surface:
            sp.add_argument("--surface", help="surface JSON (default: built-in synthetic surface)")
        if window:
            sp.add_argument("--x1", type=float, default=10.0)
            sp.add_argument("--x3", type=float, default=120.0)

    sp = sub.add_parser("fit-surface", help="fit an OCV surface from CSV curves or write the synthetic one")
    sp.add_argument("--csv", action="append", default=[], metavar="SOH=PATH")
    sp.add_argument("--synthetic", action="store_true")
    sp.add_argument("--temperature", type=float, default=25.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit_surface)

    sp = sub.add_parser("simulate", help="simulate an incremental-capacity charge")
    common(sp, window=False)
    sp.add_argument("--c-rate", type=float, default=0.5)
    sp.add_argument("--soh", type=float, default=0.9)
    sp.add_argument("--soc-start", type=float, default=pipeline.SOC_START)
    sp.add_argument("--r1", type=float, default=pipeline.DEFAULT_PARAMS.r1)
    sp.add_argument("--r2", type=float, default=pipeline.DEFAULT_PARAMS.r2)
    sp.add_argument("--c", type=float, default=pipeline.DEFAULT_PARAMS.c)
    sp.add_argument("--dr1", type=float, default=pipeline.DEFAULT_SLOPE.r1)
    sp.add_argument("--dr2", type=float, default=pipeline.DEFAULT_SLOPE.r2)
    sp.add_argument("--constant", action="store_true", help="SOC-independent RC parameters")
    sp.add_argument("--two-rc", action="store_true")
    sp.add_argument("--no-noise", action="store_true")
    sp.add_argument("--sigma-v", type=float, default=0.15e-3)
    sp.add_argument("--sigma-i", type=float, default=0.1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("detect", help="list qualifying rests in a trace")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--x3", type=float, default=120.0)
    sp.add_argument("--v-threshold", type=float, default=3.9)
    sp.add_argument("--i-band", type=float, default=0.01)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("estimate", help="SOC/SOH estimate from a trace")
    common(sp)
    sp.add_argument("--trace", required=True)
    sp.add_argument("--dr-comp", action="store_true")
    sp.add_argument("--v-threshold", type=float, default=3.9)
    sp.add_argument("--i-band", type=float, default=0.01)
    sp.add_argument("--cell-id", default="cell")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("track", help="EKF SOC tracking after the first rest, with pack propagation")
    common(sp)
    sp.add_argument("--trace", required=True)
    sp.add_argument("--soh", type=float, help="reference-cell SOH (default: estimated)")
    sp.add_argument("--pack-soc0", help="comma-separated per-cell SOC at the first rest")
    sp.add_argument("--pack-soh", help="comma-separated per-cell SOH")
    sp.add_argument("--reference", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("compare-ukf", help="run the UKF baseline on the rest/pulse/rest/charge/rest protocol")
    common(sp)
    sp.add_argument("--trace", required=True)
    sp.add_argument("--cell-id", default="cell")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare_ukf)

    sp = sub.add_parser("scenarios", help="simulated ablation block as CSV")
    sp.add_argument("--group", choices=("1rc", "2rc"), required=True)
    sp.add_argument("--n-cells", type=int, default=6)
    sp.add_argument("--n-soh", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--c-rates", default="0.2,0.5,1.0")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_scenarios)

    sp = sub.add_parser("sensitivity", help="noise amplification sweep over x3 with midpoint x2")
    sp.add_argument("--x1", type=float, default=10.0)
    sp.add_argument("--tau", type=float, default=60.0)
    sp.add_argument("--x3-min", type=float, default=60.0)
    sp.add_argument("--x3-max", type=float, default=240.0)
    sp.add_argument("--n", type=int, default=50)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("convergence-map", help="|L| and manufactured-input RMSE over a SOC x SOH grid")
    sp.add_argument("--surface")
    sp.add_argument("--soc-min", type=float, default=analysis.MAP_SOC_RANGE[0])
    sp.add_argument("--soc-max", type=float, default=analysis.MAP_SOC_RANGE[1])
    sp.add_argument("--n-soc", type=int, default=analysis.MAP_SOC_POINTS)
    sp.add_argument("--soh-min", type=float, default=0.8)
    sp.add_argument("--soh-max", type=float, default=1.0)
    sp.add_argument("--n-soh", type=int, default=analysis.MAP_SOH_POINTS)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_convergence_map)

    sp = sub.add_parser("benchmark", help="median run time per method on the same traces")
    common(sp, window=False)
    sp.add_argument("--trace", action="append", required=True)
    sp.add_argument("--methods", default="plain,dr_comp,ukf")
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (SocSohError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
