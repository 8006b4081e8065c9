"""Adjoint-based reconstruction of the tip shear force of a damped AFM cantilever.

The direct problem is a Kelvin-Voigt damped Euler-Bernoulli beam, clamped at
``x = 0`` and loaded at the tip by a shear force ``g(t)`` and the moment
``c g(t)``. The inverse problem recovers ``g`` from the measured tip
displacement with conjugate gradients and the discrepancy principle.
"""

__version__ = "0.1.0"

from .adjoint import AdjointTrace, GradientSignal, assemble_gradient, objective_and_gradient, solve_adjoint
from .beam_model import (
    BeamDomain, BeamProblem, CoefficientField, ForceSignal, TheoreticalConstants, TipGeometry,
    ValidationReport, compute_constants, moment_from_force, validate_problem,
)
from .cg import CGConfig, CGRunRecord, reconstruct, step_length
from .errors import (
    BeamforgeError, FactorizationError, GridMismatchError, InstabilityError, SolverError,
    StagnationError, ValidationError,
)
from .experiments import (
    BenchmarkSpec, ErrorPair, NoiseSpec, benchmark_spec, error_curves, make_noisy_data,
    run_benchmark,
)
from .forward import ForwardModel, ObjectiveValue, OutputTrace, apply_forward, evaluate_objective, lipschitz_probe
from .transient import BeamState, SteppingFactorization, TimeGrid, startup_steps, step_all

__all__ = [
    "AdjointTrace", "BeamDomain", "BeamProblem", "BeamState", "BeamforgeError", "BenchmarkSpec",
    "CGConfig", "CGRunRecord", "CoefficientField", "ErrorPair", "FactorizationError",
    "ForceSignal", "ForwardModel", "GradientSignal", "GridMismatchError", "InstabilityError",
    "NoiseSpec", "ObjectiveValue", "OutputTrace", "SolverError", "StagnationError",
    "SteppingFactorization", "TheoreticalConstants", "TimeGrid", "TipGeometry",
    "ValidationError", "ValidationReport", "apply_forward", "assemble_gradient",
    "benchmark_spec", "compute_constants", "error_curves", "evaluate_objective",
    "lipschitz_probe", "make_noisy_data", "moment_from_force", "objective_and_gradient",
    "reconstruct", "run_benchmark", "solve_adjoint", "startup_steps", "step_all",
    "step_length", "validate_problem",
]
