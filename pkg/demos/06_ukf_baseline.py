"""Compare the closed-form estimator with a UKF on the same data, and time both.

The UKF runs over the rest / pulse / rest / charge / rest protocol around a
relaxation and estimates remaining charge, capacitor voltage and capacity.

Run: python3 demos/06_ukf_baseline.py   (about 20 s)
"""

from socsoh import benchmark, detect_relaxations, estimate_from_relaxation, run_ukf_protocol
from socsoh.detect import onset_index
from socsoh.pipeline import DEFAULT_SPEC, ScenarioSpec, simulate_case
from socsoh.synthetic import synthetic_surface
from socsoh.ukf import protocol_slice

surface = synthetic_surface()
trace = simulate_case(ScenarioSpec("sim_1rc", 0.5), 0.9, cell=0, run_seed=3, surface=surface)
w = detect_relaxations(trace)[0]
est, _ = estimate_from_relaxation(w, DEFAULT_SPEC, surface)
proto = protocol_slice(trace)
soc_u, soh_u, _ = run_ukf_protocol(proto, DEFAULT_SPEC, surface)
print(f"closed form: SOC {est.soc:.3f} (true {trace.soc[onset_index(trace, w)]:.3f}), SOH {est.soh:.3f} (true 0.900)")
print(f"UKF        : SOC {soc_u:.3f} (true {proto.soc[-1]:.3f}), SOH {soh_u:.3f}")
# Capacity is weakly observable over a few minutes, so the UKF's SOH stays near its prior.

for method, ms, ratio in benchmark(["plain", "dr_comp", "ukf"], [trace], surface, reps=100):
    print(f"{method:8s} {ms:9.3f} ms  x{ratio:.1f}")
