"""Track one reference cell with the EKF and carry its SOC to the rest of a series pack.

Cells in series pass the same charge, so each cell's SOC change is the
reference change scaled by the ratio of capacities.

Run: python3 demos/05_pack_tracking.py
"""

import numpy as np

from socsoh import CellSpec, EcmParams, NoiseModel, PackSnapshot, ParamEstimate, ParamSchedule, Segment
from socsoh import simulate_profile
from socsoh.tracking import init_ekf, track_trace
from socsoh.synthetic import synthetic_surface

surface = synthetic_surface()
spec = CellSpec(2.2)
true = EcmParams(0.035, 0.02, 7500.0)
sohs = np.array([0.9, 0.82, 0.97])
soc0 = np.array([0.30, 0.36, 0.27])
profile = [Segment("cc", 1800, 1.1), Segment("rest", 600), Segment("cc", 900, -2.2)]
cells = [simulate_profile(profile, spec, ParamSchedule("constant", true), surface, h, NoiseModel(seed=k), soc0=s)
         for k, (h, s) in enumerate(zip(sohs, soc0))]

# The filter starts 10 % off on purpose; rows are printed after each update,
# so even t = 0 already shows the first correction.
model = ParamEstimate(true.r1, true.r2, true.c, true.tau, 0.0)
state = init_ekf(soc0[0] + 0.1)
snapshot = PackSnapshot(soc0, sohs, reference=0)
print("   t (s)   ref error   worst cell error")
for k, (t, soc_ref, pack, _) in enumerate(track_trace(cells[0], state, model, spec, surface, snapshot)):
    if k in (0, 1, 10, 600, 1800, 2400, len(cells[0]) - 1):
        truth = np.array([c.soc[k] for c in cells])
        print(f"{t:8.0f} {100 * (soc_ref - truth[0]):10.3f}% {100 * np.abs(pack - truth).max():12.3f}%")
