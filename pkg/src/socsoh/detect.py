"""Rest-period detection in cell traces."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as P

from .ecm import CellTrace
from .errors import DetectionError
from .relax import MEDIAN_POINTS, RelaxationWindow, fit_dv_dt

V_THRESHOLD = 3.9
I_ZERO_BAND = 0.01
MIN_PRE = 50


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) index ranges where ``mask`` is True."""
    m = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(m)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def _pre_mode(i: np.ndarray, v: np.ndarray, band: float) -> str | None:
    """Classify the samples before a rest as constant current, constant voltage, or neither."""
    if np.any(i <= band):
        return None
    ref = float(np.median(i))
    if np.max(np.abs(i - ref)) <= max(0.02 * abs(ref), 5 * band):
        return "after_cc"
    if np.ptp(v) <= 2e-3 and i[-1] < i[0]:
        return "after_cv"
    return None


def detect_relaxations(trace: CellTrace, v_threshold: float = V_THRESHOLD, i_zero_band: float = I_ZERO_BAND, *,
                       x3: float = 120.0, min_pre: int = MIN_PRE, attach_uc: bool = False) -> list[RelaxationWindow]:
    """Charge-side rests whose onset voltage exceeds ``v_threshold``.

    A rest qualifies when |i| <= ``i_zero_band`` for at least x3 + 15
    samples and the preceding ``min_pre`` samples are a constant-current or
    constant-voltage charge. The instantaneous drop at onset is measured
    against a cubic fit of the pre-rest voltage extrapolated to the
    onset time, so OCV curvature does not leak into R1. With
    ``attach_uc`` the truth capacitor voltage over the tail is attached.
    """
    if len(trace) == 0:
        raise DetectionError("empty trace")
    t, i, v = trace.t, trace.i, trace.v
    dt = float(np.median(np.diff(t))) if t.size > 1 else 1.0
    need = int(np.ceil(x3 / dt)) + MEDIAN_POINTS
    out: list[RelaxationWindow] = []
    for a, b in _runs(np.abs(i) <= i_zero_band):
        if b - a < need or a < min_pre:
            continue
        if not v[a] > v_threshold:
            continue
        ti, vi, ii = t[a - min_pre:a], v[a - min_pre:a], i[a - min_pre:a]
        mode = _pre_mode(ii, vi, i_zero_band)
        if mode is None:
            continue
        if mode == "after_cc":
            i0 = float(np.mean(ii))
            di_dt = 0.0
        else:
            di_dt = fit_dv_dt(np.column_stack([ti, ii]))
            i0 = float(np.mean(ii) + di_dt * (t[a - 1] - ti.mean()))
        delta_u = float(v[a] - P.polyfit(ti - t[a], vi, 3)[0])
        uc_tail = trace.uc[a - min_pre:a] if (attach_uc and trace.uc is not None) else None
        uc0 = float(trace.uc[a]) if (attach_uc and trace.uc is not None) else None
        out.append(RelaxationWindow(
            t0=float(t[a]), dt=t[a:b] - t[a], v=v[a:b].copy(), i0=i0, delta_u=delta_u,
            tail_t=ti.copy(), tail_v=vi.copy(), mode=mode, di_dt=di_dt, tail_i=ii.copy(),
            tail_uc=None if uc_tail is None else uc_tail.copy(), uc0=uc0,
        ))
    if not out:
        raise DetectionError(
            f"no rest with onset above {v_threshold} V, |i| <= {i_zero_band} A for >= {need} samples "
            f"and >= {min_pre} samples of charge before it")
    return out


def onset_index(trace: CellTrace, window: RelaxationWindow) -> int:
    return int(np.searchsorted(trace.t, window.t0))


def gap_between(trace: CellTrace, w1: RelaxationWindow, w2: RelaxationWindow,
                i_zero_band: float = I_ZERO_BAND) -> tuple[float, float]:
    """Equivalent CC gap (charging seconds, current) carrying the net charge between two onsets."""
    a, b = onset_index(trace, w1), onset_index(trace, w2)
    t, i = trace.t, trace.i
    dts = np.diff(t[a:b + 1])
    charge = float(np.sum(i[a:b] * dts))
    charging = float(np.sum(dts[i[a:b] > i_zero_band]))
    if charging <= 0 or charge <= 0:
        raise DetectionError("no net charge between the paired windows")
    return charging, charge / charging
