"""Ablation table for simulated 1RC cells: each row removes one source of error.

Rows are cumulative: "Known capacitor voltage" also keeps every row above it.
Pass --quick for a two-cell version.

Run: python3 demos/07_scenario_table.py [--quick]   (about 45 s in full)
"""

import sys

from socsoh.pipeline import scenario_block
from socsoh.synthetic import synthetic_surface

quick = "--quick" in sys.argv
rows = scenario_block("1rc", n_cells=2 if quick else 6, n_soh_levels=2 if quick else 3, surface=synthetic_surface())
rates = sorted({c for _, c, _ in rows})
table = {(n, c): r for n, c, r in rows}
names = list(dict.fromkeys(n for n, _, _ in rows))
print(f"{'scenario':26s}" + "".join(f"{f'SOC/SOH @ {c:g} C':>22s}" for c in rates))
for n in names:
    cells = "".join(f"{100 * table[n, c].soc_rmse:10.2f}%/{100 * table[n, c].soh_rmse:.2f}%".rjust(22) for c in rates)
    print(f"{n:26s}{cells}")
