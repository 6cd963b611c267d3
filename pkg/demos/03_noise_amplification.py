"""How the spacing of the three rest samples amplifies voltage noise.

f is the ratio of OCV-estimate variance to per-sample voltage variance.
Spacing the samples further apart lowers f toward 1; the middle sample
being at the midpoint costs little unless the spacing exceeds about half a
time constant. Much below 0.3 tau the noise often reverses the decay and
the fit breaks down, so the Monte-Carlo spread stops meaning anything.

Run: python3 demos/03_noise_amplification.py
"""

import math

from socsoh import f_symmetric, optimal_x2_gap
from socsoh.analysis import ocv_noise_sigma

tau, sigma_y = 150.0, 0.15e-3
print(" x_d/tau        f    predicted sigma   Monte-Carlo sigma")
for ratio in (0.3, 0.5, 1.0, 3.0):
    x_d = ratio * tau
    f = f_symmetric(x_d, tau)
    mc = ocv_noise_sigma(10.0, x_d, tau, sigma_y, n_trials=5000, rng=1)
    print(f"{ratio:8.1f} {f:10.1f} {1e3 * math.sqrt(f) * sigma_y:12.3f} mV {1e3 * mc:15.3f} mV")

print("\nmidpoint versus best x2 (x1 = 10 s):")
for x3 in (60.0, 120.0, 300.0, 600.0):
    x2, f_star, f_mid = optimal_x2_gap(10.0, x3, tau)
    print(f"  x3 = {x3:5.0f} s: best x2 = {x2:6.1f} s, f_mid / f_best = {f_mid / f_star:.3f}")
