"""Design and evaluation of platform trials with a replaceable control arm.

A multi-arm multi-stage trial where the first treatment to beat the control
becomes the new control; remaining arms are then judged against it either on
all concurrent data ("retain") or only on data accrued after the change
("discard").  The package computes exact operating characteristics by
multivariate-normal integration, calibrates stopping boundaries and sample
sizes, and cross-checks everything by forward simulation.
"""

from .design import (Boundaries, Scenario, TrialDesign, ZIndex, accrual,
                     bounds_from_dict, bounds_to_dict, design_from_dict,
                     design_to_dict, max_total_sample_size, scenario_from_dict,
                     scenario_to_dict, stat_key, stat_window, validate_design)
from .jointdist import (JointNormal, StructuralError, assemble_joint, z_corr,
                        z_corr_post, z_mean)
from .events import (Constraint, EventSpec, disjointify, event_E1, event_E2,
                     event_E3, event_E4, intersect_events,
                     last_stage_at_or_before)
from .mvn import Rectangle, factorize_psd, mvn_mc_prob, mvn_rect_prob
from .power import (NotEstimableError, PowerRequest, PowerResult,
                    conditional_power, event_prob, omega, overall_power,
                    retain_benefit_threshold, wrong_control_prob, xi)
from .calibrate import (BOUNDARY_KINDS, BoundaryShape, calibrate_c,
                        find_sample_size, fwer, pairwise_power,
                        shape_boundaries)
from .simulate import (TrialOutcome, estimate, replay_decomposition_check,
                       simulate_trial)
from .sweeps import run_sweep

__version__ = "0.1.0"

__all__ = [
    "BOUNDARY_KINDS",
    "Boundaries", "BoundaryShape", "Constraint", "EventSpec", "JointNormal",
    "NotEstimableError", "PowerRequest", "PowerResult", "Rectangle",
    "Scenario", "StructuralError", "TrialDesign", "TrialOutcome", "ZIndex",
    "accrual", "assemble_joint", "bounds_from_dict", "bounds_to_dict",
    "calibrate_c", "conditional_power", "design_from_dict", "design_to_dict",
    "disjointify", "estimate", "event_E1", "event_E2", "event_E3", "event_E4",
    "event_prob", "factorize_psd", "find_sample_size", "fwer",
    "intersect_events", "last_stage_at_or_before", "max_total_sample_size",
    "mvn_mc_prob", "mvn_rect_prob", "omega", "overall_power", "pairwise_power",
    "replay_decomposition_check", "retain_benefit_threshold", "run_sweep",
    "scenario_from_dict", "scenario_to_dict", "shape_boundaries",
    "simulate_trial", "stat_key", "stat_window", "validate_design",
    "wrong_control_prob", "xi", "z_corr", "z_corr_post", "z_mean",
]
