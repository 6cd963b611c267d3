"""Open-circuit-voltage surface OCV = f(SOC, SOH) at one temperature.

Each surface holds a degree-9 polynomial in SOC per measured SOH level.
Coefficients between levels are interpolated linearly; outside the grid they
are clamped to the edge level, within a 0.05 SOH margin.
"""

from __future__ import annotations

import csv
import json
from functools import lru_cache
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

from .errors import DomainError, FitError, InputError, NoRootError, NonPhysicalRootError

DEGREE = 9
N_COEFFS = DEGREE + 1
SOH_MARGIN = 0.05
SCAN_STEP = 1e-3
ROOT_TOL_V = 1e-9


@dataclass(frozen=True)
class PolyCoeffs:
    """Coefficients a0..a9 of OCV(SOC) in volts, ascending powers."""

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if a.size != N_COEFFS:
            raise ValueError(f"expected {N_COEFFS} coefficients, got {a.size}")
        if not np.all(np.isfinite(a)):
            raise ValueError("coefficients must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    def __call__(self, soc):
        return P.polyval(soc, self.a)


@dataclass(frozen=True)
class CellSpec:
    q0: float  # Ah, capacity of a new cell
    v_min: float = 2.5
    v_max: float = 4.2

    def __post_init__(self):
        if not self.q0 > 0:
            raise ValueError("q0 must be positive")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")

    @property
    def q0_as(self) -> float:
        """Capacity in ampere-seconds."""
        return self.q0 * 3600.0


class OcvSurface:
    """Per-temperature family of OCV polynomials indexed by SOH level.

    Immutable after construction.
    """

    def __init__(self, temperature: float, grid: Sequence[tuple[float, PolyCoeffs | Sequence[float]]]):
        if len(grid) < 1:
            raise ValueError("surface needs at least one grid entry")
        levels = np.array([float(lv) for lv, _ in grid])
        if np.any(np.diff(levels) <= 0):
            raise ValueError("soh levels must be strictly increasing")
        if np.any(levels <= 0) or np.any(levels > 1.2):
            raise ValueError("soh levels must lie in (0, 1.2]")
        coeffs = [c if isinstance(c, PolyCoeffs) else PolyCoeffs(np.asarray(c)) for _, c in grid]
        self.temperature = float(temperature)
        self._levels = levels
        self._levels.setflags(write=False)
        self._coeffs = np.vstack([c.a for c in coeffs])
        self._coeffs.setflags(write=False)
        self._d1 = np.vstack([P.polyder(c) for c in self._coeffs])
        self._d2 = np.vstack([P.polyder(c, 2) for c in self._coeffs])

    @property
    def soh_levels(self) -> np.ndarray:
        return self._levels

    @property
    def grid(self) -> list[tuple[float, PolyCoeffs]]:
        return [(float(lv), PolyCoeffs(c)) for lv, c in zip(self._levels, self._coeffs)]

    @property
    def soh_band(self) -> tuple[float, float]:
        return self._levels[0] - SOH_MARGIN, self._levels[-1] + SOH_MARGIN

    def __repr__(self):
        return f"OcvSurface(T={self.temperature:g} C, soh_levels={self._levels.tolist()})"

    def _weights(self, soh: float) -> tuple[int, int, float]:
        lo, hi = self.soh_band
        if not (lo - 1e-12 <= soh <= hi + 1e-12) or not np.isfinite(soh):
            raise DomainError(f"soh={soh!r} outside allowed band [{lo:.3f}, {hi:.3f}]")
        lv = self._levels
        if lv.size == 1 or soh <= lv[0]:
            return 0, 0, 0.0
        if soh >= lv[-1]:
            n = lv.size - 1
            return n, n, 0.0
        j = int(np.searchsorted(lv, soh, side="right"))
        w = (soh - lv[j - 1]) / (lv[j] - lv[j - 1])
        return j - 1, j, w

    def _blend(self, table: np.ndarray, soh: float) -> np.ndarray:
        i, j, w = self._weights(soh)
        if w == 0.0:
            return table[i]
        return (1.0 - w) * table[i] + w * table[j]

    def coeffs_at(self, soh: float) -> np.ndarray:
        """Interpolated a0..a9 at a given SOH."""
        return self._blend(self._coeffs, soh)

    def at_soh(self, soh: float) -> "OcvSurface":
        """SOH-independent surface holding the curve at ``soh`` over this surface's SOH band."""
        c = self.coeffs_at(soh)
        lv = self._levels
        if lv.size == 1:
            return OcvSurface(self.temperature, [(lv[0], c)])
        return OcvSurface(self.temperature, [(lv[0], c), (lv[-1], c)])

    def dcoeffs_at(self, soh: float) -> np.ndarray:
        """Coefficients of dOCV/dSOC at a given SOH."""
        return self._blend(self._d1, soh)

    def ocv(self, soc, soh: float):
        return P.polyval(soc, self._blend(self._coeffs, soh))

    def docv_dsoc(self, soc, soh: float):
        return P.polyval(soc, self._blend(self._d1, soh))

    def d2ocv_dsoc2(self, soc, soh: float):
        return P.polyval(soc, self._blend(self._d2, soh))

    def to_json(self) -> dict:
        return {
            "temperature_c": self.temperature,
            "grid": [{"soh": float(lv), "coeffs": [float(x) for x in c]} for lv, c in zip(self._levels, self._coeffs)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OcvSurface":
        try:
            grid = [(float(e["soh"]), [float(x) for x in e["coeffs"]]) for e in obj["grid"]]
            return cls(float(obj["temperature_c"]), grid)
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed surface JSON: missing or bad field {exc}") from exc
        except ValueError as exc:
            raise InputError(f"malformed surface JSON: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "OcvSurface":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_json(obj)


def fit_ocv_poly(samples) -> tuple[PolyCoeffs, float]:
    """Least-squares degree-9 fit of (soc, ocv) samples.

    Returns the coefficients and the residual RMS in volts.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("samples must be (soc, ocv) pairs")
    if arr.shape[0] < 20:
        raise FitError(f"need at least 20 samples, got {arr.shape[0]}")
    soc, ocv = arr[:, 0], arr[:, 1]
    if not (np.all(np.isfinite(soc)) and np.all(np.isfinite(ocv))):
        raise FitError("samples must be finite")
    if soc.max() - soc.min() < 0.5:
        raise FitError("soc samples must span at least 0.5")
    s_sorted = np.sort(soc)
    if np.any(np.diff(s_sorted) <= 1e-9):
        raise FitError("duplicate soc values")
    V = np.vander(soc, N_COEFFS, increasing=True)
    norms = np.linalg.norm(V, axis=0)
    sol, _, rank, _ = np.linalg.lstsq(V / norms, ocv, rcond=None)
    if rank < N_COEFFS:
        raise FitError(f"rank-deficient fit (rank {rank} < {N_COEFFS}); samples too clustered")
    a = sol / norms
    rms = float(np.sqrt(np.mean((V @ a - ocv) ** 2)))
    return PolyCoeffs(a), rms


def fit_surface(temperature: float, curves: dict[float, list]) -> tuple[OcvSurface, dict[float, float]]:
    """Fit one polynomial per SOH level.

    ``curves`` maps SOH level to a list of (soc, ocv) samples; samples from
    several cells at the same level are pooled before fitting.
    """
    grid, rms = [], {}
    for level in sorted(curves):
        coeffs, r = fit_ocv_poly(curves[level])
        grid.append((level, coeffs))
        rms[level] = r
    return OcvSurface(temperature, grid), rms


def eval_ocv(surface: OcvSurface, soc: float, soh: float) -> float:
    _check_soc(soc)
    return float(surface.ocv(soc, soh))


def eval_docv_dsoc(surface: OcvSurface, soc: float, soh: float) -> float:
    _check_soc(soc)
    return float(surface.docv_dsoc(soc, soh))


def eval_d2ocv_dsoc2(surface: OcvSurface, soc: float, soh: float) -> float:
    _check_soc(soc)
    return float(surface.d2ocv_dsoc2(soc, soh))


def _check_soc(soc):
    if not (-1e-12 <= soc <= 1 + 1e-12):
        raise DomainError(f"soc={soc!r} outside [0, 1]")


def _horner(rev_coeffs, x):
    """Evaluate a polynomial given highest-power-first coefficients; cheaper than polyval here."""
    acc = 0.0
    for a in rev_coeffs:
        acc = acc * x + a
    return acc


@lru_cache(maxsize=64)
def _scan_grid(lo: float, hi: float) -> np.ndarray:
    n = max(int(np.ceil((hi - lo) / SCAN_STEP)), 1)
    grid = np.linspace(lo, hi, n + 1)
    grid.setflags(write=False)
    return grid


def invert_ocv(surface: OcvSurface, ocv: float, soh: float, soc_band: tuple[float, float] = (0.0, 1.0)) -> float:
    """SOC in ``soc_band`` at which the surface equals ``ocv``.

    Roots are bracketed on a 1e-3 grid and refined by Brent's method. Only
    roots on increasing segments count; with several, the one nearest the
    band centre wins.
    """
    lo, hi = soc_band
    if not (0.0 <= lo < hi <= 1.0):
        raise DomainError(f"soc_band {soc_band!r} must satisfy 0 <= lo < hi <= 1")
    c = surface.coeffs_at(soh)
    rev = c[::-1].tolist()
    grid = _scan_grid(lo, hi)
    r = _horner(rev, grid) - ocv
    roots = grid[r == 0.0].tolist()
    brackets = np.flatnonzero(r[:-1] * r[1:] < 0)

    def g(s):
        return _horner(rev, s) - ocv

    for k in brackets:
        roots.append(brentq(g, grid[k], grid[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    if not roots:
        raise NoRootError(f"no OCV root for {ocv:.6f} V in soc band [{lo}, {hi}] at soh={soh:.4f}")
    roots = np.array(roots)
    slopes = _horner(surface.dcoeffs_at(soh)[::-1].tolist(), roots)
    good = roots[slopes > 0]
    if good.size == 0:
        raise NonPhysicalRootError(f"all roots for {ocv:.6f} V lie on decreasing OCV segments")
    centre = 0.5 * (lo + hi)
    return float(good[np.argmin(np.abs(good - centre))])


def read_ocv_csv(path) -> np.ndarray:
    """Read a ``soc,ocv_volts`` CSV into an (n, 2) array."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"soc", "ocv_volts"} - set(reader.fieldnames or [])
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((float(row["soc"]), float(row["ocv_volts"])))
            except (TypeError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: bad value in row {row!r}") from exc
    return np.array(rows, dtype=float).reshape(-1, 2)


def write_ocv_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["soc", "ocv_volts"])
        for s, v in np.asarray(samples, dtype=float):
            w.writerow([repr(float(s)), repr(float(v))])
