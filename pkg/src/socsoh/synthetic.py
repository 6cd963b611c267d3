"""Synthetic NMC-like charge OCV family used for simulation and analysis.

The base curve has a low-slope shoulder around 50 % SOC and steepens into
a sigmoid ramp near 57 %, crossing 3.9 V a little below 70 % SOC. Aging
adds a zero-mean slope wavelet centred at 50 % SOC, so the curve's shape
near the shoulder depends on SOH while the voltage at a given SOC barely
moves. Surfaces are produced by fitting the degree-9 polynomial to samples
of this family, the same way measured incremental-OCV data would be fitted.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import expit

from .ocv import OcvSurface, fit_surface

DEFAULT_SOH_LEVELS = tuple(round(0.55 + 0.05 * k, 2) for k in range(13))

_V0 = 3.42
_SLOPE_LOW = 0.32
_SLOPE_RAMP = 0.55
_RAMP_CENTRE = 0.57
_RAMP_WIDTH = 0.035
_LOW_TAIL = 3.5
_LOW_TAIL_POWER = 16
_AGING_GAIN = 0.55
_AGING_WIDTH = 0.09
_AGING_CENTRE = 0.50

_x = np.linspace(0.0, 1.0, 20001)
_slope = (_SLOPE_LOW + _SLOPE_RAMP * expit((_x - _RAMP_CENTRE) / _RAMP_WIDTH)
          + _LOW_TAIL * (1.0 - _x) ** _LOW_TAIL_POWER)
_base = _V0 + cumulative_trapezoid(_slope, _x, initial=0.0)


def true_ocv(soc, soh):
    """Noise-free synthetic OCV in volts (not polynomial)."""
    soc = np.asarray(soc, dtype=float)
    z = (soc - _AGING_CENTRE) / _AGING_WIDTH
    aging = _AGING_GAIN * (soc - _AGING_CENTRE) * np.exp(-0.5 * z * z)
    return np.interp(soc, _x, _base) + (1.0 - soh) * aging


def ocv_samples(soh: float, n: int = 201, noise_v: float = 0.0, rng=None) -> np.ndarray:
    """(soc, ocv) pairs on an even SOC grid, optionally with voltage noise."""
    soc = np.linspace(0.0, 1.0, n)
    v = true_ocv(soc, soh)
    if noise_v > 0:
        rng = np.random.default_rng(rng)
        v = v + rng.normal(0.0, noise_v, size=v.shape)
    return np.column_stack([soc, v])


def synthetic_surface(temperature: float = 25.0, levels=DEFAULT_SOH_LEVELS, n: int = 201) -> OcvSurface:
    surface, _ = fit_surface(temperature, {lv: ocv_samples(lv, n) for lv in levels})
    return surface
