"""Fit an OCV surface from per-SOH charge curves, then evaluate and invert it.

Run: python3 demos/01_ocv_surface.py
"""

import numpy as np

from socsoh import eval_docv_dsoc, eval_ocv, fit_surface, invert_ocv
from socsoh.synthetic import DEFAULT_SOH_LEVELS, ocv_samples

# Incremental-OCV measurements would arrive as (soc, volts) pairs per SOH level.
# Here they come from the synthetic family with 0.5 mV of measurement noise.
rng = np.random.default_rng(0)
curves = {lv: ocv_samples(lv, n=101, noise_v=0.5e-3, rng=rng) for lv in DEFAULT_SOH_LEVELS}
surface, rms = fit_surface(25.0, curves)
print(surface)
print("fit residual per level (mV):", ", ".join(f"{lv:.2f}: {1e3 * r:.2f}" for lv, r in rms.items()))

# Between levels the polynomial coefficients are blended linearly in SOH.
for soh in (0.8, 0.87, 1.0):
    v = eval_ocv(surface, 0.7, soh)
    slope = eval_docv_dsoc(surface, 0.7, soh)
    print(f"SOH {soh:.2f}: OCV(0.70) = {v:.4f} V, dOCV/dSOC = {slope:.3f} V")

# Inversion picks the rising-segment root nearest the middle of the search band.
v = eval_ocv(surface, 0.62, 0.9)
print(f"invert {v:.4f} V at SOH 0.90 -> SOC {invert_ocv(surface, v, 0.9):.6f}")
