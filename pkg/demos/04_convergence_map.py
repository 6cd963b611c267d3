"""Where the SOC/SOH fixed-point iteration converges.

|L| is the slope of the SOH update map at the true SOH; below 1 the
iteration contracts. The manufactured-input run shows the errors that result
when the iteration starts from SOH = 1.

Run: python3 demos/04_convergence_map.py   (about 10 s)
"""

import numpy as np

from socsoh.analysis import convergence_map, rmse_by_soc
from socsoh.synthetic import synthetic_surface

surface = synthetic_surface()
cells = convergence_map(surface, np.linspace(0.40, 0.80, 41), np.linspace(0.8, 1.0, 11))
socs, soc_rmse, soh_rmse = rmse_by_soc(cells)
worst_l = {s: max(c.l_abs for c in cells if c.soc_true == s) for s in socs}

print("  SOC   max|L|   SOC RMSE   SOH RMSE")
for s, a, b in zip(socs[::2], soc_rmse[::2], soh_rmse[::2]):
    bar = "#" * int(round(40 * min(b, 0.1) / 0.1))
    print(f"{s:5.2f} {worst_l[s]:8.2f} {100 * a:9.3f}% {100 * b:9.3f}%  {bar}")
# The aging signature concentrates around 45-50 % SOC, where the curve shape
# changes with SOH; there the iteration stalls and SOH errors reach several percent.
