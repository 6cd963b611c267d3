"""Unscented Kalman filter over (remaining charge, capacitor voltage, capacity): the comparison baseline."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .detect import I_ZERO_BAND, detect_relaxations
from .ecm import CellTrace
from .errors import DetectionError, FilterHealthError, MeasurementError, ProtocolError
from .ocv import CellSpec, OcvSurface, invert_ocv
from .relax import ParamEstimate, identify_params

SIGMA_V = 0.15e-3


@dataclass(frozen=True)
class SigmaConfig:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0

    def weights(self, n: int) -> tuple[np.ndarray, np.ndarray, float]:
        """Mean weights, covariance weights and the spread factor n + lambda."""
        lam = self.alpha ** 2 * (n + self.kappa) - n
        c = n + lam
        wm = np.full(2 * n + 1, 0.5 / c)
        wc = wm.copy()
        wm[0] = lam / c
        wc[0] = lam / c + (1.0 - self.alpha ** 2 + self.beta)
        return wm, wc, c


def default_process_noise(q0_as: float, scale: float = 1.0) -> np.ndarray:
    return scale * np.diag([1e-6 * q0_as ** 2, 1e-8, 1e-8 * q0_as ** 2])


@dataclass(frozen=True)
class UkfState:
    """x = (q_r [A s], uc [V], q [A s]) with covariance ``p``; ``i`` applies until the next sample."""

    x: np.ndarray
    p: np.ndarray
    q_process: np.ndarray
    r_meas: float = SIGMA_V ** 2
    sigma_cfg: SigmaConfig = field(default_factory=SigmaConfig)
    t: float | None = None
    i: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(3))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3, 3))
        if not self.x[2] > 0:
            raise ValueError("capacity state must be positive")

    def soc(self) -> float:
        return float(self.x[0] / self.x[2])

    def soh(self, spec: CellSpec) -> float:
        return float(self.x[2] / spec.q0_as)


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        pass
    sym = 0.5 * (m + m.T) + 1e-15 * np.eye(m.shape[0]) * max(np.trace(m), 1.0)
    try:
        return np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise FilterHealthError("covariance is not positive definite") from exc


def _output(chi: np.ndarray, i: float, params: ParamEstimate, spec: CellSpec, surface: OcvSurface) -> np.ndarray:
    lo, hi = surface.soh_band
    out = np.empty(chi.shape[0])
    for k, (qr, uc, q) in enumerate(chi):
        soc = min(max(qr / q, 0.0), 1.0)
        soh = min(max(q / spec.q0_as, lo), hi)
        out[k] = surface.ocv(soc, soh) + uc + params.r1 * i
    return out


def ukf_step(state: UkfState, meas, params: ParamEstimate, spec: CellSpec, surface: OcvSurface,
             output=None) -> UkfState:
    """Linear predict with the exact RC discretisation, then an unscented measurement update.

    ``output`` replaces the terminal-voltage map (used to check the
    transform against a plain Kalman update).
    """
    i, v, _temp, t = (float(m) for m in meas)
    if not all(math.isfinite(m) for m in (i, v, t)):
        raise MeasurementError(f"non-finite measurement {meas!r}")
    x, p = state.x.copy(), state.p.copy()
    if state.t is not None:
        dt = t - state.t
        if not dt > 0:
            raise MeasurementError(f"time must increase: {state.t} -> {t}")
        a = math.exp(-dt / params.tau)
        f = np.diag([1.0, a, 1.0])
        b = np.array([dt, params.r2 * (1.0 - a), 0.0])
        x = f @ x + b * state.i
        p = f @ p @ f.T + state.q_process
    n = 3
    wm, wc, c = state.sigma_cfg.weights(n)
    s = _sqrt_psd(c * p)
    chi = np.vstack([x, x + s.T, x - s.T])
    h = output if output is not None else (lambda pts: _output(pts, i, params, spec, surface))
    ys = h(chi)
    y_hat = float(wm @ ys)
    dy = ys - y_hat
    dx = chi - x
    pyy = float(wc @ (dy * dy)) + state.r_meas
    pxy = (wc * dy) @ dx
    k = pxy / pyy
    x = x + k * (v - y_hat)
    p = p - np.outer(k, k) * pyy
    p = 0.5 * (p + p.T)
    return replace(state, x=x, p=p, t=t, i=i)


def _runs(i: np.ndarray, band: float) -> list[tuple[str, int, int]]:
    kind = np.where(i > band, 1, np.where(i < -band, -1, 0))
    edges = np.flatnonzero(np.diff(kind)) + 1
    starts = np.concatenate([[0], edges])
    stops = np.concatenate([edges, [i.size]])
    names = {1: "charge", -1: "discharge", 0: "rest"}
    return [(names[int(kind[a])], int(a), int(b)) for a, b in zip(starts, stops)]


def protocol_segments(trace: CellTrace, band: float = I_ZERO_BAND) -> dict[str, tuple[int, int]]:
    """Locate charge, rest, pulse, rest, charge, rest at the start of ``trace``."""
    runs = _runs(trace.i, band)
    want = ["charge", "rest", "discharge", "rest", "charge", "rest"]
    if [r[0] for r in runs[:6]] != want:
        raise ProtocolError(f"expected segments {want}, found {[r[0] for r in runs[:6]]}")
    keys = ["lead", "rest1", "pulse", "rest2", "cc", "rest3"]
    return {k: (a, b) for k, (_, a, b) in zip(keys, runs)}


def protocol_slice(trace: CellTrace, v_threshold: float = 3.9, lead: int = 60, x3: float = 120.0) -> CellTrace:
    """Cut the protocol out of a longer charge trace, starting ``lead`` samples before the first qualifying rest."""
    w = detect_relaxations(trace, v_threshold, x3=x3)[0]
    a = int(np.searchsorted(trace.t, w.t0))
    runs = [r for r in _runs(trace.i, I_ZERO_BAND) if r[1] >= a]
    if len(runs) < 5:
        raise ProtocolError("trace ends before the protocol completes")
    return trace.slice(a - lead, runs[4][2])


def run_ukf_protocol(trace: CellTrace, spec: CellSpec, surface: OcvSurface, *, x1: float = 10.0,
                     x3: float = 120.0, q_scale: float = 1.0, params: ParamEstimate | None = None,
                     ) -> tuple[float, float, float]:
    """(soc, soh, runtime s) at the end of the protocol.

    Parameters come from the first rest; the filter starts at the discharge
    pulse with SOH = 1, uc = 0 and SOC from inverting the identified OCV.
    """
    t_start = time.perf_counter()
    seg = protocol_segments(trace)
    if params is None:
        try:
            window = detect_relaxations(trace, v_threshold=-math.inf, x3=x3)[0]
        except DetectionError as exc:
            raise ProtocolError(f"first rest unusable: {exc}") from exc
        params = identify_params(window, x1, x3, spec=spec)
    soc0 = invert_ocv(surface, params.ocv, 1.0)
    q0 = spec.q0_as
    p0 = np.diag([(0.05 * q0) ** 2, 0.01 ** 2, (0.1 * q0) ** 2])
    state = UkfState(np.array([soc0 * q0, 0.0, q0]), p0, default_process_noise(q0, q_scale))
    start = seg["pulse"][0]
    for k in range(start, len(trace)):
        state = ukf_step(state, (trace.i[k], trace.v[k], trace.temp[k], trace.t[k]), params, spec, surface)
    return state.soc(), state.soh(spec), time.perf_counter() - t_start
