"""Adjoint problem and the gradient of the least-squares objective.

The adjoint state solves the backward problem

    rho_A phi_tt - mu phi_t + (r phi_xx - kappa phi_xxt)_xx = 0,
    phi(., T) = phi_t(., T) = 0,

clamped at ``x = 0``, with zero tip moment and tip shear equal to the residual
``u(l, t; g) - nu(t)``. Substituting ``s = T - t`` flips the sign of every odd
time derivative, which turns this into the direct problem with force
``residual(T - s)`` and no moment. It is therefore solved with the same stepping
factors as the forward problem and reversed in time afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ForwardModel, ObjectiveValue, evaluate_objective

COUPLING_MODES = ("consistent", "squared")


@dataclass(frozen=True)
class AdjointTrace:
    value: np.ndarray   # phi(l, t_j)
    slope: np.ndarray   # phi_x(l, t_j)


@dataclass(frozen=True)
class GradientSignal:
    values: np.ndarray
    dt: float


def solve_adjoint(residual, model: ForwardModel) -> AdjointTrace:
    residual = np.asarray(residual, dtype=float)
    reversed_load = residual[::-1]
    state = model.solve(reversed_load, moment=np.zeros_like(reversed_load))
    return AdjointTrace(state.tip_value[::-1].copy(), state.tip_slope[::-1].copy())


def gradient_coupling(model: ForwardModel, mode: str = "consistent") -> float:
    """Weight of ``phi_x(l, t)`` in the gradient.

    ``"consistent"`` uses the same ``c`` as the forward moment, which is what the
    duality between the sensitivity and adjoint problems requires. ``"squared"``
    uses ``c**2`` for comparison runs.
    """
    c = model.coupling
    if mode == "consistent":
        return c
    if mode == "squared":
        return c * c
    raise ValueError(f"unknown gradient coupling mode {mode!r}; expected one of {COUPLING_MODES}")


def assemble_gradient(adj: AdjointTrace, coupling: float, dt: float = 1.0) -> GradientSignal:
    return GradientSignal(adj.value + coupling * adj.slope, dt)


def objective_and_gradient(g, measured, model: ForwardModel, mode: str = "consistent"
                           ) -> tuple[ObjectiveValue, GradientSignal]:
    obj = evaluate_objective(g, measured, model)
    adj = solve_adjoint(obj.residual, model)
    return obj, assemble_gradient(adj, gradient_coupling(model, mode), model.dt)
