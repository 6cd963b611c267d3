"""First- and second-order RC equivalent-circuit cell simulator.

Current is positive on charge. The capacitor update uses the exact
exponential solution for a current held constant over each step, so the
noiseless trace does not depend on the sampling period.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import InputError, SimulationError
from .ocv import CellSpec, OcvSurface, eval_ocv

SOC_TOLERANCE = 0.01


@dataclass(frozen=True)
class EcmParams:
    """Series resistance r1 plus RC pair (r2, c); (r2b, cb) is the optional second pair."""

    r1: float
    r2: float
    c: float
    r2b: float = 0.0
    cb: float = 1.0

    def __post_init__(self):
        if self.r1 < 0:
            raise ValueError("r1 must be >= 0")
        if not (self.r2 > 0 and self.c > 0):
            raise ValueError("r2 and c must be positive")
        if self.r2b < 0 or self.cb <= 0:
            raise ValueError("second RC pair needs r2b >= 0 and cb > 0")
        if not math.isfinite(self.r2 * self.c):
            raise ValueError("time constant must be finite")

    @property
    def tau(self) -> float:
        return self.r2 * self.c

    @property
    def tau_b(self) -> float:
        return self.r2b * self.cb

    def split_2rc(self, fraction: float = 0.7) -> "EcmParams":
        """Split r2 and tau between two pairs (default 70/30)."""
        ra, rb = fraction * self.r2, (1 - fraction) * self.r2
        ta, tb = fraction * self.tau, (1 - fraction) * self.tau
        return EcmParams(self.r1, ra, ta / ra, rb, tb / rb)


@dataclass(frozen=True)
class ParamSlope:
    """Per-unit-SOC change of each parameter."""

    r1: float = 0.0
    r2: float = 0.0
    c: float = 0.0
    r2b: float = 0.0
    cb: float = 0.0


@dataclass(frozen=True)
class ParamSchedule:
    mode: str = "constant"  # "constant" | "soc_linear"
    base: EcmParams = field(default_factory=lambda: EcmParams(0.03, 0.015, 6000.0))
    slope_per_soc: ParamSlope = field(default_factory=ParamSlope)

    def __post_init__(self):
        if self.mode not in ("constant", "soc_linear"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        for soc in (0.0, 1.0):
            self.at(soc)  # raises if an endpoint violates EcmParams invariants

    def at(self, soc: float) -> EcmParams:
        if self.mode == "constant":
            return self.base
        s = min(max(soc, 0.0), 1.0)
        b, d = self.base, self.slope_per_soc
        return EcmParams(b.r1 + d.r1 * s, b.r2 + d.r2 * s, b.c + d.c * s, b.r2b + d.r2b * s, b.cb + d.cb * s)

    def frozen(self, soc: float = 0.0) -> "ParamSchedule":
        return replace(self, mode="constant", base=self.at(soc))


@dataclass(frozen=True)
class CellState:
    soc: float
    uc: float = 0.0
    uc2: float = 0.0

    @property
    def saturated(self) -> bool:
        return not (0.0 <= self.soc <= 1.0)

    @property
    def out_of_range(self) -> bool:
        return not (-SOC_TOLERANCE <= self.soc <= 1 + SOC_TOLERANCE)


@dataclass(frozen=True)
class NoiseModel:
    sigma_v: float = 0.15e-3
    sigma_i: float = 0.1e-3
    seed: int = 0

    def __post_init__(self):
        if self.sigma_v < 0 or self.sigma_i < 0:
            raise ValueError("noise sigmas must be >= 0")


NOISELESS = NoiseModel(0.0, 0.0, 0)


@dataclass(frozen=True)
class Segment:
    """One profile segment.

    kind ``cc`` holds ``value`` amperes (``rest`` is cc at 0 A); kind ``cv``
    holds ``value`` volts with the current capped at ``i_max``. A cc segment
    with ``v_limit`` ends early once the terminal voltage reaches it, and the
    simulator then skips ahead to the next cv segment.
    """

    kind: str
    duration: float
    value: float = 0.0
    i_max: float = math.inf
    v_limit: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("cc", "rest", "cv"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")


@dataclass
class CellTrace:
    """Measured channels plus noise-free ground truth, one row per sample."""

    t: np.ndarray
    i: np.ndarray
    v: np.ndarray
    temp: np.ndarray
    soc: np.ndarray | None = None
    uc: np.ndarray | None = None
    soh: np.ndarray | None = None
    i_true: np.ndarray | None = None
    v_true: np.ndarray | None = None

    def __post_init__(self):
        for name in ("t", "i", "v", "temp", "soc", "uc", "soh", "i_true", "v_true"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, np.asarray(val, dtype=float))
        n = self.t.size
        if any(getattr(self, k).size != n for k in ("i", "v", "temp")):
            raise ValueError("measured channels must have equal length")
        if self.has_truth and any(getattr(self, k).size != n for k in ("soc", "uc", "soh")):
            raise ValueError("truth channels must match measured length")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("t must be strictly increasing")

    @property
    def has_truth(self) -> bool:
        return self.soc is not None

    def __len__(self):
        return self.t.size

    def slice(self, start: int, stop: int) -> "CellTrace":
        def cut(a):
            return None if a is None else a[start:stop]

        return CellTrace(*(cut(getattr(self, k)) for k in
                           ("t", "i", "v", "temp", "soc", "uc", "soh", "i_true", "v_true")))


def step(state: CellState, params: EcmParams, i: float, dt: float, q: float) -> CellState:
    """Advance one step of length ``dt`` seconds at constant current ``i``; ``q`` in Ah."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not q > 0:
        raise ValueError("q must be positive")
    a = math.exp(-dt / params.tau)
    uc = state.uc * a + params.r2 * (1.0 - a) * i
    uc2 = state.uc2
    if params.r2b > 0:
        b = math.exp(-dt / params.tau_b)
        uc2 = state.uc2 * b + params.r2b * (1.0 - b) * i
    return CellState(state.soc + i * dt / (q * 3600.0), uc, uc2)


def terminal_voltage(state: CellState, params: EcmParams, i: float, surface: OcvSurface, soh: float) -> float:
    return eval_ocv(surface, state.soc, soh) + state.uc + state.uc2 + params.r1 * i


def simulate_profile(
    profile: Sequence[Segment],
    spec: CellSpec,
    schedule: ParamSchedule,
    surface: OcvSurface,
    soh_true: float,
    noise: NoiseModel = NOISELESS,
    sample_dt: float = 1.0,
    *,
    two_rc: bool = False,
    soc0: float = 0.0,
    uc0: float = 0.0,
    temperature: float | None = None,
    t0: float = 0.0,
) -> CellTrace:
    """Simulate a segment profile and sample it every ``sample_dt`` seconds.

    Row k carries the current applied over (t_k, t_k + dt] and the terminal
    voltage just after that current is switched on. Noise is added after the
    truth channels are recorded. In 1RC mode the second pair is ignored.
    """
    if not sample_dt > 0:
        raise ValueError("sample_dt must be positive")
    if not profile:
        raise ValueError("profile is empty")
    q = spec.q0 * soh_true
    q_as = q * 3600.0
    coeffs = surface.coeffs_at(soh_true)
    temp = surface.temperature if temperature is None else temperature

    ts, cur, volt, socs, ucs = [], [], [], [], []
    soc, uc_a, uc_b = soc0, uc0, 0.0
    t = t0
    skip_to_cv = False

    for seg in profile:
        if skip_to_cv and seg.kind != "cv":
            continue
        skip_to_cv = False
        n = max(int(round(seg.duration / sample_dt)), 1)
        for _ in range(n):
            p = schedule.at(soc)
            ocv = P.polyval(soc, coeffs)
            if seg.kind == "cv":
                if p.r1 <= 0:
                    raise SimulationError("constant-voltage segment needs r1 > 0")
                i = (seg.value - ocv - uc_a - (uc_b if two_rc else 0.0)) / p.r1
                if abs(i) > seg.i_max:
                    raise SimulationError(
                        f"CV setpoint {seg.value} V unreachable: needs {i:.4f} A, limit {seg.i_max} A at t={t:.1f} s")
            else:
                i = seg.value if seg.kind == "cc" else 0.0
            uc_tot = uc_a + (uc_b if two_rc else 0.0)
            v = ocv + uc_tot + p.r1 * i
            if seg.kind == "cc" and seg.v_limit is not None and v >= seg.v_limit:
                skip_to_cv = True
                break
            ts.append(t)
            cur.append(i)
            volt.append(v)
            socs.append(soc)
            ucs.append(uc_tot)
            a = math.exp(-sample_dt / p.tau)
            uc_a = uc_a * a + p.r2 * (1.0 - a) * i
            if two_rc and p.r2b > 0:
                b = math.exp(-sample_dt / p.tau_b)
                uc_b = uc_b * b + p.r2b * (1.0 - b) * i
            soc += i * sample_dt / q_as
            t += sample_dt

    if not ts:
        raise SimulationError("profile produced no samples")
    rng = np.random.default_rng(noise.seed)
    i_true = np.array(cur)
    v_true = np.array(volt)
    n = v_true.size
    v_meas = v_true + (rng.normal(0.0, noise.sigma_v, n) if noise.sigma_v > 0 else 0.0)
    i_meas = i_true + (rng.normal(0.0, noise.sigma_i, n) if noise.sigma_i > 0 else 0.0)
    return CellTrace(
        t=np.array(ts), i=i_meas, v=v_meas, temp=np.full(n, float(temp)),
        soc=np.array(socs), uc=np.array(ucs), soh=np.full(n, float(soh_true)),
        i_true=i_true, v_true=v_true,
    )


def build_incremental_capacity_profile(
    c_rate: float,
    spec: CellSpec,
    rest_s: float = 180.0,
    pulse: tuple[float, float] | None = None,
    soc_step: float = 0.05,
    *,
    soc_start: float = 0.0,
    cv_voltage: float | None = None,
    cv_duration: float = 1800.0,
) -> list[Segment]:
    """Incremental-capacity charge: CC by ``soc_step``, rest, discharge pulse, rest; repeat; finish with CV.

    ``pulse`` is (current A, duration s) and defaults to a 10 s 1 C discharge.
    Step lengths use the new-cell capacity ``spec.q0``.
    """
    if not c_rate > 0:
        raise ValueError("c_rate must be positive")
    i_cc = c_rate * spec.q0
    i_pulse, dur_pulse = pulse if pulse is not None else (-spec.q0, 10.0)
    v_cv = spec.v_max if cv_voltage is None else cv_voltage
    cc_s = soc_step * 3600.0 / c_rate
    n = int(math.ceil((1.0 - soc_start) / soc_step - 1e-9))
    prof: list[Segment] = []
    for k in range(n):
        prof.append(Segment("cc", cc_s, i_cc, v_limit=v_cv, label=f"cc{k}"))
        prof.append(Segment("rest", rest_s, label=f"rest{k}a"))
        prof.append(Segment("cc", dur_pulse, i_pulse, label=f"pulse{k}"))
        prof.append(Segment("rest", rest_s, label=f"rest{k}b"))
    prof.append(Segment("cc", 3600.0 / c_rate, i_cc, v_limit=v_cv, label="cc_final"))
    prof.append(Segment("cv", cv_duration, v_cv, i_max=2.0 * i_cc, label="cv"))
    return prof


# --- CSV persistence -------------------------------------------------------

TRACE_HEADER = ["t_s", "i_a", "v_v", "temp_c"]
TRUTH_HEADER = ["t_s", "soc", "uc_v", "soh"]


def truth_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".truth.csv")


def save_trace(trace: CellTrace, path, truth: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in zip(trace.t, trace.i, trace.v, trace.temp):
            w.writerow([repr(float(x)) for x in row])
    if truth and trace.has_truth:
        with open(truth_path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRUTH_HEADER)
            for row in zip(trace.t, trace.soc, trace.uc, trace.soh):
                w.writerow([repr(float(x)) for x in row])


def _read_columns(path, header) -> dict[str, np.ndarray]:
    cols: dict[str, list[float]] = {h: [] for h in header}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(header) - set(reader.fieldnames or [])
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            for h in header:
                try:
                    cols[h].append(float(row[h]))
                except (TypeError, ValueError):
                    raise InputError(f"{path}:{lineno}: field {h!r} has bad value {row[h]!r}") from None
    return {h: np.array(v) for h, v in cols.items()}


def load_trace(path, truth: bool | None = None) -> CellTrace:
    """Read a trace CSV; the truth sidecar is read if present (or required if ``truth``)."""
    m = _read_columns(path, TRACE_HEADER)
    tp = truth_path(path)
    kw = {}
    if truth or (truth is None and tp.exists()):
        g = _read_columns(tp, TRUTH_HEADER)
        if g["t_s"].size != m["t_s"].size or np.any(g["t_s"] != m["t_s"]):
            raise InputError(f"{tp}: truth rows do not match trace rows")
        kw = dict(soc=g["soc"], uc=g["uc_v"], soh=g["soh"])
    try:
        return CellTrace(t=m["t_s"], i=m["i_a"], v=m["v_v"], temp=m["temp_c"], **kw)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
