"""Branching Brownian motion with two-sided selection: simulation and
numerical verification of its hydrodynamic limit.

The package has three layers.  `particles` and `discrete` simulate the
N-particle system and its discrete-time bounding systems; `density` and
`wave` handle the deterministic grid scheme and the closed-form travelling
wave of the limiting free boundary problem; `exits` cross-validates both
against killed Brownian motion.  `cli` exposes all of it as subcommands.
"""

__version__ = "0.1.0"

from .randomness import RandomSource
from .particles import (
    CouplingViolationError,
    SimulationStreams,
    TrajectoryRecord,
    SpeedEstimate,
    branch_select_step,
    couple_simulate,
    dominance_check,
    estimate_speed,
    simulate,
    stationarity_diagnostic,
)
from .discrete import (
    BoundStepResult,
    BoundSystemParams,
    BoundsRun,
    free_bbm,
    lower_step,
    run_bounds,
    upper_step,
)
from .density import (
    GridDensity,
    GridSpec,
    GridTooSmallError,
    RefineResult,
    SchemeParams,
    cut_left_amount,
    cut_left_keep,
    cut_right_amount,
    cut_right_keep,
    dominates,
    gaussian_propagate,
    iterate_scheme,
    plan_grid,
    refine_limit,
    sample_from_density,
    scale,
    step,
    tail_mass,
)
from .wave import (
    Barrier,
    ComparisonReport,
    TravellingWave,
    hydrodynamic_report,
    ode_residual,
    travelling_wave,
    wave_barriers,
    wave_density,
    wave_profile,
    wave_speed,
)
from .exits import (
    ExitOutcome,
    ExitStats,
    FluxSequence,
    PathParams,
    RepresentationResult,
    exit_statistics,
    representation_check,
    richardson_extrapolate,
    sample_exit,
    small_delta_flux,
)

__all__ = [
    "__version__",
    "RandomSource",
    "CouplingViolationError",
    "SimulationStreams",
    "TrajectoryRecord",
    "SpeedEstimate",
    "branch_select_step",
    "couple_simulate",
    "dominance_check",
    "estimate_speed",
    "simulate",
    "stationarity_diagnostic",
    "BoundStepResult",
    "BoundSystemParams",
    "BoundsRun",
    "free_bbm",
    "lower_step",
    "run_bounds",
    "upper_step",
    "GridDensity",
    "GridSpec",
    "GridTooSmallError",
    "RefineResult",
    "SchemeParams",
    "cut_left_amount",
    "cut_left_keep",
    "cut_right_amount",
    "cut_right_keep",
    "dominates",
    "gaussian_propagate",
    "iterate_scheme",
    "plan_grid",
    "refine_limit",
    "sample_from_density",
    "scale",
    "step",
    "tail_mass",
    "Barrier",
    "ComparisonReport",
    "TravellingWave",
    "hydrodynamic_report",
    "ode_residual",
    "travelling_wave",
    "wave_barriers",
    "wave_density",
    "wave_profile",
    "wave_speed",
    "ExitOutcome",
    "ExitStats",
    "FluxSequence",
    "PathParams",
    "RepresentationResult",
    "exit_statistics",
    "representation_check",
    "richardson_extrapolate",
    "sample_exit",
    "small_delta_flux",
]
