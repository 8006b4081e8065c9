"""Neumann-to-Dirichlet map ``g -> u(l, .; g)`` and the least-squares objective."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .beam_model import BeamProblem, ForceSignal, compute_constants
from .errors import GridMismatchError
from .fem import BoundaryLoadShape, DofMap, SpaceMesh, assemble_operators
from .quadrature import l2_norm, simpson, time_derivative
from .transient import (
    DEFAULT_STARTUP, BeamState, LoadHistory, SteppingFactorization, TimeGrid, step_all,
)

DEFAULT_ELEMENTS = 100


class ForwardModel:
    """A discretised direct problem: mesh, operators, time grid and the stepping factors.

    Everything is built once and then shared read-only by forward, sensitivity and
    adjoint solves.
    """

    def __init__(self, problem: BeamProblem, elements: int = DEFAULT_ELEMENTS,
                 steps: int | None = None, startup: str = DEFAULT_STARTUP):
        self.problem = problem
        self.mesh = SpaceMesh(problem.domain.length, elements)
        self.dofmap = DofMap(elements)
        if steps is None:
            self.grid = TimeGrid.for_mesh(problem.domain.horizon, problem.domain.length, elements)
        else:
            self.grid = TimeGrid(problem.domain.horizon, steps)
        self.ops = assemble_operators(problem, self.mesh, self.dofmap)
        self.shape = BoundaryLoadShape.for_dofmap(self.dofmap)
        self.factorization = SteppingFactorization.build(self.ops, self.grid.tau, startup)

    def __repr__(self):
        return (f"ForwardModel(M={self.mesh.elements}, N={self.grid.steps}, "
                f"h/tau={self.grid.mesh_ratio(self.mesh.h):.1f})")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def dt(self) -> float:
        return self.grid.tau

    @property
    def coupling(self) -> float:
        return self.problem.coupling

    @cached_property
    def static_gain(self) -> float:
        """Static tip deflection under a unit tip force plus its coupled moment."""
        import scipy.linalg

        b = self.shape.trace + self.coupling * self.shape.slope
        u = scipy.linalg.solveh_banded(self.ops.stiffness_r, b, lower=False)
        return float(u[self.dofmap.tip_value])

    def solve(self, force, moment=None, full=False) -> BeamState:
        """March with tip force samples ``force`` and tip moment ``moment``.

        ``moment`` defaults to ``c * force``. Both may carry a trailing batch axis.
        """
        force = np.asarray(force, dtype=float)
        if force.shape[0] != self.grid.steps + 1:
            raise GridMismatchError(
                f"signal has {force.shape[0]} samples, grid has {self.grid.steps + 1}"
            )
        moment = self.coupling * force if moment is None else np.asarray(moment, dtype=float)
        amps = np.stack([force, moment], axis=1)
        basis = np.stack([self.shape.trace, self.shape.slope], axis=1)
        return step_all(self.ops, self.grid, LoadHistory(basis, amps), self.factorization, full)

    def samples(self, g) -> np.ndarray:
        """Samples of ``g`` on the solver grid, resampling a ForceSignal if needed."""
        if isinstance(g, ForceSignal):
            return resample(g.samples, g.dt, self.grid)
        g = np.asarray(g, dtype=float)
        if g.shape[0] != self.grid.steps + 1:
            raise GridMismatchError(
                f"signal has {g.shape[0]} samples, grid has {self.grid.steps + 1}"
            )
        return g

    def norm(self, values) -> float:
        return l2_norm(values, self.dt)

    def inner(self, a, b) -> float:
        return float(simpson(np.asarray(a) * np.asarray(b), self.dt))


def resample(values, dt, grid: TimeGrid) -> np.ndarray:
    """Piecewise-linear resampling of uniformly sampled data onto ``grid``."""
    values = np.asarray(values, dtype=float)
    src = dt * np.arange(values.size)
    if values.size == grid.steps + 1 and np.isclose(dt, grid.tau, rtol=1e-12, atol=0):
        return values
    if src[-1] < grid.horizon * (1 - 1e-12):
        raise GridMismatchError("signal does not cover the time horizon")
    return np.interp(grid.times, src, values)


@dataclass(frozen=True)
class OutputTrace:
    values: np.ndarray
    slope: np.ndarray
    dt: float

    @property
    def times(self):
        return self.dt * np.arange(self.values.shape[0])


@dataclass(frozen=True)
class ObjectiveValue:
    value: float
    residual: np.ndarray
    output: OutputTrace


def apply_forward(g, model: ForwardModel) -> OutputTrace:
    """Tip displacement (and slope) driven by the shear force ``g`` and its moment."""
    state = model.solve(model.samples(g))
    return OutputTrace(state.tip_value, state.tip_slope, model.dt)


def evaluate_objective(g, measured, model: ForwardModel, output: OutputTrace | None = None
                       ) -> ObjectiveValue:
    """``J(g) = 0.5 ||u(l, .; g) - nu||^2`` by Simpson's rule.

    ``output`` may pass a precomputed ``apply_forward(g)`` to skip the solve.
    """
    nu = model.samples(measured)
    if output is None:
        output = apply_forward(g, model)
    residual = output.values - nu
    return ObjectiveValue(0.5 * float(simpson(residual**2, model.dt)), residual, output)


def lipschitz_probe(g1, g2, model: ForwardModel) -> tuple[float, float]:
    """``(||Psi g1 - Psi g2||, L0 ||g1' - g2'||)`` for checking the Lipschitz bound."""
    d = model.samples(g1) - model.samples(g2)
    lhs = model.norm(apply_forward(d, model).values)
    lip = compute_constants(model.problem).lipschitz
    rhs = lip * model.norm(time_derivative(d, model.dt))
    return lhs, rhs
