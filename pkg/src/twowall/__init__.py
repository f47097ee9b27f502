"""Penalized simulation of 1D parabolic SPDEs with two reflecting walls.

The package time-steps the penalized equation, differentiates the scheme
with respect to the driving noise, and runs Monte Carlo diagnostics on the
law of the solution at a fixed space-time point.
"""

from twowall.grid import (
    Grid,
    KernelSpec,
    NoiseField,
    heat_kernel,
    make_grid,
    sample_noise,
)
from twowall.walls import (
    CoefficientSet,
    HypothesisReport,
    Rule,
    WallPair,
    validate_coefficients,
    validate_walls,
)
from twowall.solver import (
    InitialProfile,
    PenaltyKind,
    SolutionPath,
    SolverConfig,
    complementarity,
    penalty_forces,
    solve,
    step,
    sweep,
)
from twowall.malliavin import (
    FirstVariationField,
    LocalizedVariation,
    SensitivityRow,
    StoppingInfo,
    dominating,
    factorized,
    first_variation,
    localized_variation,
    malliavin_norm,
    sensitivity_row,
    stopping_time,
    variation_lower_bound,
)
from twowall.density import (
    DensityEstimate,
    EnsembleConfig,
    SampleSet,
    atom_diagnostic,
    detect_event,
    kde,
    run_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientSet",
    "DensityEstimate",
    "EnsembleConfig",
    "FirstVariationField",
    "Grid",
    "HypothesisReport",
    "InitialProfile",
    "KernelSpec",
    "LocalizedVariation",
    "NoiseField",
    "PenaltyKind",
    "Rule",
    "SampleSet",
    "SensitivityRow",
    "SolutionPath",
    "SolverConfig",
    "StoppingInfo",
    "WallPair",
    "atom_diagnostic",
    "complementarity",
    "detect_event",
    "dominating",
    "factorized",
    "first_variation",
    "heat_kernel",
    "kde",
    "localized_variation",
    "make_grid",
    "malliavin_norm",
    "penalty_forces",
    "run_ensemble",
    "sample_noise",
    "sensitivity_row",
    "solve",
    "step",
    "stopping_time",
    "sweep",
    "validate_coefficients",
    "validate_walls",
    "variation_lower_bound",
]
