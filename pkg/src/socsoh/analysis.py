"""Noise amplification of the three-point fit and local convergence of the SOC/SOH iteration."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, FlatCurveError, SingularGeometryError, SocSohError
from .ocv import CellSpec, OcvSurface, invert_ocv
from .relax import ParamEstimate, iterate_soc_soh, solve_three_point

MAP_SOC_POINTS = 101
MAP_SOH_POINTS = 21
MAP_SOC_RANGE = (0.05, 0.95)  # at 0 and 1 a shifted SOH has no OCV root


@dataclass(frozen=True)
class SensitivityTerms:
    """A1, A2, A3 (seconds), a = R2*I0 (volts), b = -1/tau (1/s), m = exp(x_d/tau)."""

    a1: float
    a2: float
    a3: float
    a: float
    b: float
    m: float

    @property
    def denom(self) -> float:
        return self.a1 + self.a2 - self.a3


def _gaps(x1: float, x2: float, x3: float, tau: float) -> tuple[float, float]:
    if not (x1 < x2 < x3):
        raise SingularGeometryError(f"need x1 < x2 < x3, got {x1}, {x2}, {x3}")
    if not tau > 0:
        raise SingularGeometryError(f"tau must be positive, got {tau}")
    return x2 - x1, x3 - x2


def sensitivity_terms(x1: float, x2: float, x3: float, tau: float, a: float = 1.0) -> SensitivityTerms:
    d21, d32 = _gaps(x1, x2, x3, tau)
    return SensitivityTerms(
        a1=d21 * math.exp(d32 / tau), a2=d32 * math.exp(-d21 / tau), a3=x3 - x1,
        a=a, b=-1.0 / tau, m=math.exp(d32 / tau),
    )


def _expm1_minus_x(x: float) -> float:
    """exp(x) - 1 - x, by its Taylor series where the subtraction would cancel."""
    if abs(x) >= 0.5:
        return math.expm1(x) - x
    term, total = x * x / 2.0, 0.0
    for k in range(3, 30):
        total += term
        term *= x / k
    return total


def _denominator(d21: float, d32: float, tau: float, scale: float = 0.0) -> float:
    """(A1 + A2 - A3) * exp(-scale).

    Near zero gaps it is tau (b E(a) + a E(-b)) with a = d32/tau, b = d21/tau,
    where the linear terms have cancelled exactly; elsewhere the direct form
    is well conditioned and ``scale`` keeps it finite.
    """
    a, b = d32 / tau, d21 / tau
    if a < 0.5 and b < 0.5:
        return tau * (b * _expm1_minus_x(a) + a * _expm1_minus_x(-b)) * math.exp(-scale)
    return d21 * (math.exp(a - scale) - math.exp(-scale)) + d32 * math.expm1(-b) * math.exp(-scale)


def noise_amplification_f(x1: float, x2: float, x3: float, tau: float) -> float:
    """Variance ratio sigma_OCV^2 / sigma_y^2 for samples at x1, x2, x3."""
    d21, d32 = _gaps(x1, x2, x3, tau)
    r = d32 / tau
    # everything divided by exp(r) so large gaps do not overflow
    den = _denominator(d21, d32, tau, scale=r)
    if den == 0:
        raise SingularGeometryError("A1 + A2 - A3 = 0")
    a2 = d32 * math.exp(-d21 / tau - r)
    a3 = (x3 - x1) * math.exp(-r)
    return (d21 ** 2 + a2 ** 2 + a3 ** 2) / den ** 2


def f_symmetric(x_d: float, tau: float) -> float:
    """Closed form of f with x2 at the midpoint: (m^4 + 4 m^2 + 1) / (m - 1)^4."""
    if not x_d > 0:
        raise SingularGeometryError(f"x_d must be positive, got {x_d}")
    u = math.exp(-x_d / tau)
    return (1.0 + 4.0 * u * u + u ** 4) / (-math.expm1(-x_d / tau)) ** 4


def sensitivity_matrix(x1: float, x2: float, x3: float, params: ParamEstimate, i0: float) -> np.ndarray:
    """Rows d(R2)/R2, dC/C, dOCV/OCV per unit change of (y1, y2, y3).

    Times are measured from the rest onset, where the decay amplitude is
    a = R2*I0.
    """
    d21, d32 = _gaps(x1, x2, x3, params.tau)
    den = _denominator(d21, d32, params.tau)
    if den == 0:
        raise SingularGeometryError("A1 + A2 - A3 = 0")
    a = params.r2 * i0
    b = -1.0 / params.tau
    e = np.exp(b * np.array([x1, x2, x3]))
    xe = np.array([x1, x2, x3]) * e
    be = (b * np.array([x1, x2, x3]) - 1.0) * e
    # common factor -exp(-b(x1 + x3)) rescales the A-terms to the onset origin
    k = -math.exp(-b * (x1 + x3)) / (a * den)
    r2_row = k * np.array([xe[2] - xe[1], xe[0] - xe[2], xe[1] - xe[0]])
    c_row = k / b * np.array([be[1] - be[2], be[2] - be[0], be[0] - be[1]])
    t = sensitivity_terms(x1, x2, x3, params.tau, a)
    ocv_row = np.array([t.a2, -t.a3, t.a1]) / (den * params.ocv)
    return np.vstack([r2_row, c_row, ocv_row])


def optimal_x2_gap(x1: float, x3: float, tau: float, n: int = 1000) -> tuple[float, float, float]:
    """(x2 minimising f on an n-point interior grid, that minimum, f at the midpoint)."""
    if not x3 > x1:
        raise SingularGeometryError(f"need x1 < x3, got {x1}, {x3}")
    grid = np.linspace(x1, x3, n + 2)[1:-1]
    fs = np.array([noise_amplification_f(x1, x2, x3, tau) for x2 in grid])
    k = int(np.argmin(fs))
    return float(grid[k]), float(fs[k]), noise_amplification_f(x1, 0.5 * (x1 + x3), x3, tau)


def ocv_noise_sigma(x1: float, x_d: float, tau: float, sigma_y: float, n_trials: int = 20000,
                    r2: float = 0.05, i0: float = 1.1, ocv: float = 3.95, rng=None) -> float:
    """Monte-Carlo standard deviation of the closed-form OCV under i.i.d. voltage noise."""
    rng = np.random.default_rng(rng)
    xs = x1 + x_d * np.arange(3)
    y = ocv + r2 * i0 * np.exp(-xs / tau)
    est = []
    for noise in rng.normal(0.0, sigma_y, size=(n_trials, 3)):
        yy = y + noise
        try:
            est.append(solve_three_point(*yy, x_d, i0, x1=x1).ocv)
        except SocSohError:
            continue  # noise flipped the decay; no estimate this trial
    return float(np.std(est))


# --- local convergence -----------------------------------------------------

def _local_band(soc: float, half: float = 0.05) -> tuple[float, float]:
    return max(soc - half, 0.0), min(soc + half, 1.0)


def local_convergence_l(surface: OcvSurface, soc_true: float, soh_true: float, fd_step: float = 1e-4) -> float:
    """Derivative of the SOH update map at its fixed point.

    L = soh * (f'' dSOC/dSOH + d2f/dSOC dSOH) / f', where dSOC/dSOH is the
    shift of the inverted SOC at fixed OCV. Both partials in SOH use central
    differences of step ``fd_step``.
    """
    fp = float(surface.docv_dsoc(soc_true, soh_true))
    if abs(fp) < 1e-9:
        raise FlatCurveError(f"dOCV/dSOC = {fp:.3g} at soc={soc_true}")
    ocv = float(surface.ocv(soc_true, soh_true))
    band = _local_band(soc_true)
    h = fd_step
    ds_dh = (invert_ocv(surface, ocv, soh_true + h, band) - invert_ocv(surface, ocv, soh_true - h, band)) / (2 * h)
    up, dn = surface.docv_dsoc(soc_true, soh_true + h), surface.docv_dsoc(soc_true, soh_true - h)
    mixed = float(up - dn) / (2 * h)
    fpp = float(surface.d2ocv_dsoc2(soc_true, soh_true))
    return soh_true * (fpp * ds_dh + mixed) / fp


@dataclass(frozen=True)
class ConvergenceCell:
    """One (soc, soh) map point; errors are absolute (a one-sample RMSE)."""

    soc_true: float
    soh_true: float
    l_abs: float
    soc_rmse: float
    soh_rmse: float
    status: str = "ok"  # ok | cap | diverged | error


_UNIT_SPEC = CellSpec(q0=1.0)


def run_manufactured(surface: OcvSurface, soc_true: float, soh_true: float, *,
                     spec: CellSpec = _UNIT_SPEC, current: float = 1.0):
    """Run the iteration from SOH0 = 1 on inputs built exactly from (soc_true, soh_true).

    Returns (soc, soh, status); a diverged run reports its last iterate.
    """
    ocv = float(surface.ocv(soc_true, soh_true))
    docv_dt = current * float(surface.docv_dsoc(soc_true, soh_true)) / (spec.q0_as * soh_true)
    try:
        est = iterate_soc_soh(ocv, docv_dt, current, spec, surface)
    except DivergenceError as exc:
        return exc.last.soc, exc.last.soh, "diverged"
    return est.soc, est.soh, "ok" if est.converged else "cap"


def convergence_map(surface: OcvSurface, soc_grid=None, soh_grid=None) -> list[ConvergenceCell]:
    """|L| (clipped at 1) and manufactured-input errors over a SOC x SOH grid.

    Per-cell failures are recorded in the cell, never raised.
    """
    soc_grid = np.linspace(*MAP_SOC_RANGE, MAP_SOC_POINTS) if soc_grid is None else np.asarray(soc_grid, float)
    soh_grid = np.linspace(0.8, 1.0, MAP_SOH_POINTS) if soh_grid is None else np.asarray(soh_grid, float)
    cells = []
    for s in soc_grid:
        for h in soh_grid:
            s, h = float(s), float(h)
            try:
                l_abs = min(abs(local_convergence_l(surface, s, h)), 1.0)
            except SocSohError:
                l_abs = 1.0
            try:
                soc, soh, status = run_manufactured(surface, s, h)
                cells.append(ConvergenceCell(s, h, l_abs, abs(soc - s), abs(soh - h), status))
            except SocSohError:
                cells.append(ConvergenceCell(s, h, l_abs, math.nan, math.nan, "error"))
    return cells


def rmse_by_soc(cells: list[ConvergenceCell]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-SOC RMSE over the SOH column: (soc, soc_rmse, soh_rmse). Failed cells count as NaN."""
    socs = np.array(sorted({c.soc_true for c in cells}))
    soc_r, soh_r = [], []
    for s in socs:
        col = [c for c in cells if c.soc_true == s]
        soc_r.append(math.sqrt(np.mean([c.soc_rmse ** 2 for c in col])))
        soh_r.append(math.sqrt(np.mean([c.soh_rmse ** 2 for c in col])))
    return socs, np.array(soc_r), np.array(soh_r)


# --- CSV output ----------------------------------------------------------

def write_map_csv(path, cells: list[ConvergenceCell]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["soc", "soh", "l_abs", "soc_rmse", "soh_rmse"])
        for c in cells:
            w.writerow([f"{c.soc_true:.6g}", f"{c.soh_true:.6g}", f"{c.l_abs:.6g}",
                        f"{c.soc_rmse:.6g}", f"{c.soh_rmse:.6g}"])


def sensitivity_sweep(x1: float, tau: float, x3_values, x2_values=None) -> list[tuple[float, ...]]:
    """Rows (x1, x2, x3, tau, f); x2 defaults to the midpoint."""
    rows = []
    for k, x3 in enumerate(x3_values):
        x2 = 0.5 * (x1 + x3) if x2_values is None else x2_values[k]
        rows.append((float(x1), float(x2), float(x3), float(tau), noise_amplification_f(x1, x2, x3, tau)))
    return rows


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "x3", "tau", "f"])
        for r in rows:
            w.writerow([f"{v:.10g}" for v in r])
