"""SOC/SOH estimation from a single rest period after charging.

Pipeline per relaxation: 15-point median filter at three equally spaced
instants, closed-form fit of the RC decay (R2, C, OCV), least-squares slope
of the voltage just before the rest, then a fixed-point iteration between
OCV inversion (SOC) and the capacity relation (SOH). With two relaxations
the change of R1 + R2 between them corrects the slope for resistance drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DivergenceError,
    FilterError,
    ImplausibleEstimateError,
    RegressionError,
    SocSohError,
    WindowError,
)
from .ocv import CellSpec, OcvSurface, invert_ocv

MEDIAN_POINTS = 15
SOH_TOL = 1e-6
MAX_ITER = 100
SOH_BAND = (0.5, 1.2)
DEFAULT_TAIL = 50


class ZeroCurrentError(SocSohError, ZeroDivisionError):
    pass


@dataclass(frozen=True)
class RelaxationWindow:
    """One rest period.

    ``dt``/``v`` are rest samples with ``dt[0] == 0`` at the onset;
    ``tail_t``/``tail_v`` are samples just before the onset. ``tail_uc`` is
    the true capacitor voltage over the tail, available only in simulation.
    """

    t0: float
    dt: np.ndarray
    v: np.ndarray
    i0: float
    delta_u: float
    tail_t: np.ndarray
    tail_v: np.ndarray
    mode: str = "after_cc"
    di_dt: float = 0.0
    tail_i: np.ndarray | None = None
    tail_uc: np.ndarray | None = None
    uc0: float | None = None

    def __post_init__(self):
        for name in ("dt", "v", "tail_t", "tail_v", "tail_i", "tail_uc"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float))
        if self.mode not in ("after_cc", "after_cv"):
            raise WindowError(f"unknown window mode {self.mode!r}")
        if self.dt.size != self.v.size or self.dt.size == 0:
            raise WindowError("rest samples are empty or mismatched")
        if np.any(np.diff(self.dt) <= 0):
            raise WindowError("rest samples must be sorted by time")
        if self.tail_t.size != self.tail_v.size:
            raise WindowError("tail time/voltage mismatch")
        if self.mode == "after_cc" and self.i0 == 0:
            raise WindowError("after_cc window needs nonzero pre-rest current")

    @property
    def sample_dt(self) -> float:
        return float(np.median(np.diff(self.dt))) if self.dt.size > 1 else 1.0

    @property
    def span(self) -> float:
        return float(self.dt[-1])


@dataclass(frozen=True)
class ParamEstimate:
    r1: float
    r2: float
    c: float
    tau: float
    ocv: float


@dataclass(frozen=True)
class SocSohEstimate:
    soc: float
    soh: float
    iterations: int
    converged: bool
    docv_dt: float
    residual: float
    params: tuple[ParamEstimate, ...] = field(default=(), compare=False)


class ThreePoints(NamedTuple):
    y1: float
    y2: float
    y3: float
    x_d: float
    x1: float


def median_filter_point(samples, idx: int) -> float:
    """Median of the 15 samples centred on ``idx``, shifted inward at the edges."""
    v = np.asarray(samples, dtype=float)
    if v.ndim == 2:
        v = v[:, -1]
    n = v.size
    if n < MEDIAN_POINTS:
        raise FilterError(f"median filter needs {MEDIAN_POINTS} samples, got {n}")
    if not 0 <= idx < n:
        raise FilterError(f"index {idx} outside 0..{n - 1}")
    half = MEDIAN_POINTS // 2
    start = min(max(idx - half, 0), n - MEDIAN_POINTS)
    return float(np.median(v[start:start + MEDIAN_POINTS]))


def pick_three_points(window: RelaxationWindow, x1: float = 10.0, x3: float = 120.0, *,
                      median: bool = True) -> ThreePoints:
    """Median-filtered voltages at x1, (x1+x3)/2 and x3 seconds into the rest.

    Times snap to the nearest sample; x_d is taken from the snapped times so
    the three points stay equally spaced.
    """
    if not x3 > x1 or x1 < 0:
        raise WindowError(f"need 0 <= x1 < x3, got x1={x1}, x3={x3}")
    dt = window.dt
    half = MEDIAN_POINTS // 2
    if dt.size < MEDIAN_POINTS or dt[-1] < x3 + half * window.sample_dt - 1e-9:
        raise WindowError(f"rest of {dt[-1]:.1f} s too short for x3={x3} s plus filter margin")
    i1 = int(np.argmin(np.abs(dt - x1)))
    x_d = dt[int(np.argmin(np.abs(dt - (dt[i1] + 0.5 * (x3 - x1)))))] - dt[i1]
    i2 = int(np.argmin(np.abs(dt - (dt[i1] + x_d))))
    i3 = int(np.argmin(np.abs(dt - (dt[i1] + 2 * x_d))))
    if x_d <= 0 or abs((dt[i3] - dt[i2]) - x_d) > 1e-6 * max(x_d, 1.0):
        raise WindowError("cannot place three equally spaced samples in this window")
    if i3 + half >= dt.size:
        raise WindowError("rest too short for filter margin after x3")
    if median:
        ys = [median_filter_point(window.v, k) for k in (i1, i2, i3)]
    else:
        ys = [float(window.v[k]) for k in (i1, i2, i3)]
    return ThreePoints(ys[0], ys[1], ys[2], float(x_d), float(dt[i1]))


def estimate_r1(delta_u: float, i0: float) -> float:
    if i0 == 0:
        raise ZeroCurrentError("pre-rest current is zero; R1 undefined")
    return -delta_u / i0


def solve_three_point(y1: float, y2: float, y3: float, x_d: float, i0: float, *,
                      x1: float = 0.0, r1: float = 0.0,
                      v_window: tuple[float, float] | None = None) -> ParamEstimate:
    """Closed-form R2, C, OCV and tau from three equally spaced rest voltages.

    ``x1`` is the time of the first point after rest onset; the decay
    amplitude is referred back to the onset, where it equals I0*R2.
    """
    if not x_d > 0:
        raise DegenerateGeometryError(f"x_d must be positive, got {x_d}")
    if i0 == 0:
        raise ZeroCurrentError("pre-rest current is zero; R2 undefined")
    num, den = y1 - y2, y2 - y3
    if den == 0 or num == 0:
        raise DegenerateGeometryError("equal voltages: noise dominates the decay")
    ratio = num / den
    if not ratio > 0 or ratio == 1.0:
        raise DegenerateGeometryError(f"voltage ratio {ratio:.4g} is not a decaying exponential")
    log_ratio = math.log(ratio)
    tau = x_d / log_ratio
    if not tau > 0:
        raise DegenerateGeometryError(f"non-decaying fit (tau={tau:.4g} s)")
    m = math.exp(x_d / tau)
    amp = num * m / (m - 1.0)  # decay amplitude at x1
    ocv = y1 - amp
    r2 = amp * math.exp(x1 / tau) / i0
    if not r2 > 0:
        raise DegenerateGeometryError(f"R2={r2:.4g} not positive; current sign inconsistent with decay")
    if v_window is not None and not (v_window[0] <= ocv <= v_window[1]):
        raise ImplausibleEstimateError(f"OCV estimate {ocv:.4f} V outside {v_window}")
    return ParamEstimate(r1=r1, r2=r2, c=tau / r2, tau=tau, ocv=ocv)


def fit_dv_dt(pre_tail) -> float:
    """Ordinary least-squares slope of v against t, volts per second."""
    arr = np.asarray(pre_tail, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise RegressionError("need at least two (t, v) points")
    t, v = arr[:, 0], arr[:, 1]
    tc = t - t.mean()
    sxx = float(tc @ tc)
    if sxx == 0:
        raise RegressionError("all tail times are equal")
    return float(tc @ (v - v.mean())) / sxx


def docv_dt_cc(dv_dt: float) -> float:
    """Terminal-voltage slope stands in for dOCV/dt at low constant current."""
    return dv_dt


def docv_dt_cv(di_dt: float, r1: float, r2: float) -> float:
    """dOCV/dt during constant-voltage charging from the current decay rate."""
    return -di_dt * (r1 + r2)


def iterate_soc_soh(ocv: float, docv_dt: float, i: float, spec: CellSpec, surface: OcvSurface, *,
                    soh0: float = 1.0, tol: float = SOH_TOL, max_iter: int = MAX_ITER,
                    lag_s: float = 0.0, known_soc: float | None = None,
                    soc_band: tuple[float, float] = (0.0, 1.0)) -> SocSohEstimate:
    """Alternate SOC = f^-1(OCV, SOH) and SOH = (I/Q0) f'(SOC, SOH) / (dOCV/dt).

    ``lag_s`` is how long before the rest onset the slope estimate applies
    (the centre of the regression tail); the OCV slope is taken at the SOC
    of that instant. ``known_soc`` replaces the inversion by the true SOC.
    Raises DivergenceError (with ``.last``) when SOH leaves [0.5, 1.2] or the
    surface's SOH band.
    """
    if docv_dt == 0:
        raise ZeroCurrentError("dOCV/dt is zero")
    if i == 0:
        raise ZeroCurrentError("current is zero")
    lo = max(SOH_BAND[0], surface.soh_band[0])
    hi = min(SOH_BAND[1], surface.soh_band[1])
    q0_as = spec.q0_as
    k_cap = i / (q0_as * docv_dt)

    def soc_at(soh):
        return known_soc if known_soc is not None else invert_ocv(surface, ocv, soh, soc_band)

    soh = soh0
    soc = soc_at(soh)
    residual = math.inf
    for k in range(1, max_iter + 1):
        s_eval = soc - i * lag_s / (q0_as * soh)
        s_eval = min(max(s_eval, 0.0), 1.0)
        new = k_cap * float(surface.docv_dsoc(s_eval, soh))
        residual = abs(new - soh)
        if not (lo <= new <= hi) or not math.isfinite(new):
            err = DivergenceError(f"SOH iterate {new:.4f} left [{lo:.2f}, {hi:.2f}] at iteration {k}")
            err.last = SocSohEstimate(soc, soh, k, False, docv_dt, residual)
            raise err
        soh = new
        soc = soc_at(soh)
        if residual <= tol:
            return SocSohEstimate(soc, soh, k, True, docv_dt, residual)
    return SocSohEstimate(soc, soh, max_iter, False, docv_dt, residual)


def _tail(window: RelaxationWindow, n_tail: int):
    n = min(n_tail, window.tail_t.size)
    if n < 2:
        raise RegressionError("pre-rest tail has fewer than two samples")
    t = window.tail_t[-n:]
    v = window.tail_v[-n:]
    if window.tail_uc is not None:
        v = v - window.tail_uc[-n:]
    return t, v


def identify_params(window: RelaxationWindow, x1: float = 10.0, x3: float = 120.0, *,
                    spec: CellSpec | None = None, median: bool = True) -> ParamEstimate:
    tp = pick_three_points(window, x1, x3, median=median)
    r1 = estimate_r1(window.delta_u, window.i0)
    v_window = (spec.v_min, spec.v_max) if spec is not None else None
    return solve_three_point(tp.y1, tp.y2, tp.y3, tp.x_d, window.i0, x1=tp.x1, r1=r1, v_window=v_window)


def window_slope(window: RelaxationWindow, params: ParamEstimate, n_tail: int = DEFAULT_TAIL) -> tuple[float, float]:
    """(dOCV/dt estimate, lag in seconds) before any resistance-drift correction."""
    t, v = _tail(window, n_tail)
    lag = window.t0 - float(t.mean())
    if window.mode == "after_cv":
        return docv_dt_cv(window.di_dt, params.r1, params.r2), lag
    return docv_dt_cc(fit_dv_dt(np.column_stack([t, v]))), lag


def estimate_from_relaxation(window: RelaxationWindow, spec: CellSpec, surface: OcvSurface,
                             x1: float = 10.0, x3: float = 120.0, *, n_tail: int = DEFAULT_TAIL,
                             known_soc: float | None = None, median: bool = True,
                             ) -> tuple[SocSohEstimate, ParamEstimate]:
    """Plain estimate from one relaxation (no resistance-drift compensation)."""
    params = identify_params(window, x1, x3, spec=spec, median=median)
    slope, lag = window_slope(window, params, n_tail)
    est = iterate_soc_soh(params.ocv, slope, window.i0, spec, surface, lag_s=lag, known_soc=known_soc)
    return replace(est, params=(params,)), params


def _tagged(exc: Exception, which: int) -> Exception:
    new = type(exc)(f"window {which}: {exc}")
    if hasattr(exc, "last"):
        new.last = exc.last
    new.window = which
    return new


def estimate_with_dr_compensation(window1: RelaxationWindow, window2: RelaxationWindow,
                                  cc_gap: tuple[float, float], spec: CellSpec, surface: OcvSurface,
                                  x1: float = 10.0, x3: float = 120.0, *, n_tail: int = DEFAULT_TAIL,
                                  known_soc: tuple[float, float] | None = None,
                                  median: bool = True) -> SocSohEstimate:
    """Average of two relaxation estimates with slopes corrected for R1+R2 drift.

    ``cc_gap`` is (duration s, current A) of the charge between the windows.
    The drift rate at a window's current ``i`` is
    d(R1+R2)/dt = delta(R1+R2) * i / (gap current * gap duration), which is
    delta/duration when the window and gap currents match. When the tail
    capacitor voltage is known it is already removed from the slope, so only
    R1 drift is corrected. SOC is reported at window 1.
    """
    if not window2.t0 > window1.t0:
        raise WindowError("windows must be in time order (window1 before window2)")
    gap_s, gap_i = cc_gap
    if not gap_s > 0 or gap_i == 0:
        raise WindowError("cc_gap needs positive duration and nonzero current")
    params = []
    for k, w in enumerate((window1, window2), start=1):
        try:
            params.append(identify_params(w, x1, x3, spec=spec, median=median))
        except SocSohError as exc:
            raise _tagged(exc, k) from exc
    p1, p2 = params
    if window1.tail_uc is not None and window2.tail_uc is not None:
        d_r = p2.r1 - p1.r1
    else:
        d_r = (p2.r1 + p2.r2) - (p1.r1 + p1.r2)
    gap_charge = gap_s * gap_i
    ests = []
    for k, (w, p) in enumerate(zip((window1, window2), params), start=1):
        try:
            slope, lag = window_slope(w, p, n_tail)
            corrected = slope - w.i0 * d_r * w.i0 / gap_charge
            ks = None if known_soc is None else known_soc[k - 1]
            ests.append(iterate_soc_soh(p.ocv, corrected, w.i0, spec, surface, lag_s=lag, known_soc=ks))
        except SocSohError as exc:
            raise _tagged(exc, k) from exc
    e1, e2 = ests
    soh = 0.5 * (e1.soh + e2.soh)
    d_soc = gap_charge / (spec.q0_as * soh)
    soc = 0.5 * (e1.soc + e2.soc - d_soc)
    return SocSohEstimate(
        soc=soc, soh=soh, iterations=e1.iterations + e2.iterations,
        converged=e1.converged and e2.converged,
        docv_dt=0.5 * (e1.docv_dt + e2.docv_dt), residual=max(e1.residual, e2.residual),
        params=(p1, p2),
    )


def estimate_record(est: SocSohEstimate, *, cell_id: str = "cell", t0: float = 0.0, method: str = "plain") -> dict:
    """JSON-ready estimate record."""
    p = est.params[0] if est.params else None

    def num(x):
        return None if x is None or not math.isfinite(x) else float(x)

    return {
        "cell_id": cell_id,
        "t0_s": float(t0),
        "soc": num(est.soc),
        "soh": num(est.soh),
        "r1_ohm": num(p.r1) if p else None,
        "r2_ohm": num(p.r2) if p else None,
        "c_f": num(p.c) if p else None,
        "ocv_v": num(p.ocv) if p else None,
        "docv_dt_vps": num(est.docv_dt),
        "iterations": int(est.iterations),
        "converged": bool(est.converged),
        "method": method,
    }


__all__ = [
    "ParamEstimate", "RelaxationWindow", "SocSohEstimate", "ThreePoints",
    "docv_dt_cc", "docv_dt_cv", "estimate_from_relaxation", "estimate_r1", "estimate_record",
    "estimate_with_dr_compensation", "fit_dv_dt", "identify_params", "iterate_soc_soh",
    "median_filter_point", "pick_three_points", "solve_three_point", "window_slope",
]
