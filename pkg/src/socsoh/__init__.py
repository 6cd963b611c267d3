"""SOC and SOH estimation from charge-side relaxations, with EKF tracking and a UKF baseline."""
# ruff: noqa: F401

from .analysis import (
    ConvergenceCell,
    convergence_map,
    f_symmetric,
    local_convergence_l,
    noise_amplification_f,
    optimal_x2_gap,
    sensitivity_matrix,
)
from .detect import detect_relaxations, gap_between
from .ecm import (
    NOISELESS,
    CellState,
    CellTrace,
    EcmParams,
    NoiseModel,
    ParamSchedule,
    ParamSlope,
    Segment,
    build_incremental_capacity_profile,
    load_trace,
    save_trace,
    simulate_profile,
    step,
    terminal_voltage,
)
from .errors import *  # noqa: F401,F403
from .ocv import (
    CellSpec,
    OcvSurface,
    PolyCoeffs,
    eval_d2ocv_dsoc2,
    eval_docv_dsoc,
    eval_ocv,
    fit_ocv_poly,
    fit_surface,
    invert_ocv,
)
from .pipeline import RunReport, ScenarioSpec, Toggles, benchmark, run_scenario, scenario_block
from .relax import (
    ParamEstimate,
    RelaxationWindow,
    SocSohEstimate,
    estimate_from_relaxation,
    estimate_with_dr_compensation,
    iterate_soc_soh,
    solve_three_point,
)
from .synthetic import synthetic_surface
from .tracking import EkfState, PackSnapshot, ekf_step, propagate_pack
from .ukf import UkfState, run_ukf_protocol, ukf_step

__version__ = "0.1.0"
