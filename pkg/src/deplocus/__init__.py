"""Dependence-locus analysis for three-field driftless control systems.

The package detects the locus where a field frame drops rank, integrates
the characteristic direction field living on that locus, attaches the
adjoint lift that certifies trajectories as extremal, certifies rank
deficiency of the endpoint map over piecewise-constant controls, and
measures how robustly those certificates survive bump perturbations.

Hot numeric paths run in a compiled extension when available, with an
equivalent pure-Python fallback (see `deplocus.kernel.BACKEND`; override
with the DEPLOCUS_BACKEND environment variable).
"""
from . import kernel
from .charfield import (Trajectory, characteristic_direction,
                        integrate_characteristic, project_to_locus,
                        transversality_margin_at, write_trajectory_csv)
from .config import RunConfig, load_config, parse_config
from .endpoint import (ControlSignal, SingularityVerdict, endpoint_jacobian,
                       endpoint_map, integrate_trajectory,
                       singularity_verdict)
from .errors import (ChartExitError, ConfigError, ControlSolveError,
                     DegenerateRankError, DeplocusError, EvaluationError,
                     ExprSyntaxError, GridMismatchError, NotOnLocusError,
                     RegularityError, StepFailureError, TangencyError,
                     UnknownIdentifierError)
from .expr import ScalarField, as_field, differentiate, evaluate, parse_expr
from .locus import (LocusMesh, TangencyReport, Verdict, check_regularity,
                    check_transversality, detect_locus, tangency_report,
                    write_mesh_csv)
from .perturb import (BreakdownReport, BumpPerturbation, OpennessReport,
                      apply_perturbation, breakdown_threshold,
                      openness_experiment, random_bump_perturbation)
from .pmp import (AdjointPath, ExtremalLift, ResidualStats, closed_form_p3,
                  constraint_residuals, integrate_adjoint_general,
                  lift_to_extremal, residual_samples, singular_control_at,
                  singular_controls_along, write_lift_csv)
from .system import (Box, VectorFieldSystem, build_general_system,
                     build_model_system)

__version__ = "0.1.0"

__all__ = [
    "kernel", "__version__",
    # expressions
    "ScalarField", "parse_expr", "differentiate", "evaluate", "as_field",
    # systems
    "Box", "VectorFieldSystem", "build_model_system", "build_general_system",
    # locus
    "LocusMesh", "Verdict", "TangencyReport", "detect_locus",
    "check_regularity", "check_transversality", "tangency_report",
    "write_mesh_csv",
    # characteristic field
    "Trajectory", "characteristic_direction", "integrate_characteristic",
    "project_to_locus", "transversality_margin_at", "write_trajectory_csv",
    # adjoint lifts
    "ExtremalLift", "AdjointPath", "ResidualStats", "closed_form_p3",
    "lift_to_extremal", "residual_samples", "constraint_residuals",
    "integrate_adjoint_general", "singular_control_at",
    "singular_controls_along", "write_lift_csv",
    # endpoint map
    "ControlSignal", "SingularityVerdict", "integrate_trajectory",
    "endpoint_map", "endpoint_jacobian", "singularity_verdict",
    # perturbations
    "BumpPerturbation", "OpennessReport", "BreakdownReport",
    "apply_perturbation", "random_bump_perturbation", "openness_experiment",
    "breakdown_threshold",
    # configuration
    "RunConfig", "parse_config", "load_config",
    # errors
    "DeplocusError", "ExprSyntaxError", "UnknownIdentifierError",
    "EvaluationError", "ChartExitError", "NotOnLocusError",
    "RegularityError", "DegenerateRankError", "TangencyError",
    "StepFailureError", "GridMismatchError", "ControlSolveError",
    "ConfigError",
]
