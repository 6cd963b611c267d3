"""Two-state EKF SOC tracking of a reference cell and series-pack SOC propagation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ecm import CellTrace
from .errors import DomainError, FilterHealthError, MeasurementError
from .ocv import CellSpec, OcvSurface
from .relax import ParamEstimate

SIGMA_V = 0.15e-3
MODEL_MISMATCH_V = 1e-3
PSD_TOL = 1e-12


def default_q() -> np.ndarray:
    """Process noise per second for (soc, uc)."""
    return np.diag([1e-10, 1e-8])


DEFAULT_R = SIGMA_V ** 2 + MODEL_MISMATCH_V ** 2


@dataclass(frozen=True)
class EkfState:
    """Filter state x = (soc, uc) with covariance ``p``.

    ``t`` and ``i`` are the time and current of the last processed sample;
    the current applies until the next sample. ``nis`` is the last
    normalised innovation squared.
    """

    x: np.ndarray
    p: np.ndarray
    q_process: np.ndarray = field(default_factory=default_q)
    r_meas: float = DEFAULT_R
    t: float | None = None
    i: float = 0.0
    nis: float = math.nan

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(2))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(2, 2))
        object.__setattr__(self, "q_process", np.asarray(self.q_process, dtype=float).reshape(2, 2))
        if not self.r_meas > 0:
            raise ValueError("r_meas must be positive")
        if np.min(np.linalg.eigvalsh(self.q_process)) < -PSD_TOL:
            raise ValueError("q_process must be PSD")
        _check_psd(self.p)

    @property
    def soc(self) -> float:
        return float(self.x[0])

    @property
    def uc(self) -> float:
        return float(self.x[1])


def _check_psd(p: np.ndarray) -> None:
    if not np.allclose(p, p.T, atol=PSD_TOL, rtol=0):
        raise FilterHealthError("covariance is not symmetric")
    lam = np.linalg.eigvalsh(p).min()
    if lam < -PSD_TOL:
        raise FilterHealthError(f"covariance has negative eigenvalue {lam:.3g}")


def init_ekf(soc: float, uc: float = 0.0, *, sigma_soc: float = 0.1, sigma_uc: float = 0.01,
             t: float | None = None, **kw) -> EkfState:
    return EkfState(np.array([soc, uc]), np.diag([sigma_soc ** 2, sigma_uc ** 2]), t=t, **kw)


def ekf_step(state: EkfState, meas: tuple[float, float, float, float], params: ParamEstimate, soh_i: float,
             spec: CellSpec, surface: OcvSurface) -> EkfState:
    """One predict/update cycle for the measurement (i, v, temp, t).

    The first call only anchors the time and runs the update.
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
        f = np.diag([1.0, a])
        b = np.array([dt / (spec.q0_as * soh_i), params.r2 * (1.0 - a)])
        x = f @ x + b * state.i
        p = f @ p @ f.T + state.q_process * dt
    soc_eval = min(max(x[0], 0.0), 1.0)
    h = np.array([float(surface.docv_dsoc(soc_eval, soh_i)), 1.0])
    v_hat = float(surface.ocv(soc_eval, soh_i)) + x[1] + params.r1 * i
    y = v - v_hat
    s = float(h @ p @ h) + state.r_meas
    k = p @ h / s
    x = x + k * y
    p = (np.eye(2) - np.outer(k, h)) @ p
    p = 0.5 * (p + p.T)
    _check_psd(p)
    return replace(state, x=x, p=p, t=t, i=i, nis=y * y / s)


@dataclass(frozen=True)
class PackSnapshot:
    """Per-cell SOC at the anchor time, per-cell SOH and the reference cell index."""

    soc0: np.ndarray
    soh: np.ndarray
    reference: int = 0

    def __post_init__(self):
        soc0 = np.asarray(self.soc0, dtype=float).reshape(-1)
        soh = np.asarray(self.soh, dtype=float).reshape(-1)
        if soc0.size != soh.size or soc0.size == 0:
            raise ValueError("soc0 and soh must be non-empty and of equal length")
        if not 0 <= self.reference < soc0.size:
            raise ValueError(f"reference index {self.reference} out of range")
        object.__setattr__(self, "soc0", soc0)
        object.__setattr__(self, "soh", soh)


def propagate_pack(snapshot: PackSnapshot, soc_i_now: float) -> np.ndarray:
    """Series cells see the same charge: dSOC_j = dSOC_i * SOH_i / SOH_j."""
    soh = snapshot.soh
    if np.any(soh <= 0) or np.any(soh > 1.2):
        raise DomainError("every soh must lie in (0, 1.2]")
    i = snapshot.reference
    d = soc_i_now - snapshot.soc0[i]
    return snapshot.soc0 + d * soh[i] / soh


def track_trace(trace: CellTrace, state: EkfState, params: ParamEstimate, spec: CellSpec, surface: OcvSurface,
                snapshot: PackSnapshot | None = None):
    """Yield (t, soc_ref, per-cell socs) for every sample of ``trace``.

    ``snapshot`` anchors the pack at the first sample; without one only the
    reference cell is reported.
    """
    soh_i = 1.0 if snapshot is None else float(snapshot.soh[snapshot.reference])
    for k in range(len(trace)):
        state = ekf_step(state, (trace.i[k], trace.v[k], trace.temp[k], trace.t[k]), params, soh_i, spec, surface)
        cells = np.array([state.soc]) if snapshot is None else propagate_pack(snapshot, state.soc)
        yield float(trace.t[k]), state.soc, cells, state


def write_tracking_csv(path, rows) -> int:
    """Stream (t, soc_ref, cells, ...) rows to ``t_s,soc_ref,soc_cell_1..N``; returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for t, soc_ref, cells, *_ in rows:
            if n == 0:
                w.writerow(["t_s", "soc_ref"] + [f"soc_cell_{j + 1}" for j in range(len(cells))])
            w.writerow([f"{t:.6g}", f"{soc_ref:.8f}"] + [f"{c:.8f}" for c in cells])
            n += 1
    return n
