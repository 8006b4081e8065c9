"""Discrete checks of the a priori, trace and Lipschitz estimates.

Each check compares a discrete norm of the computed solution (left side) with
the analytic bound built from ``TheoreticalConstants`` (right side). Spatial
norms of ``u_xx`` and ``u_t`` use unit-coefficient Hermite matrices assembled
with the same 3-point Gauss rule as the solver; ``g'`` and time derivatives of
the state use second-order differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beam_model import CoefficientField, compute_constants
from .fem import assemble_mass_type, assemble_stiffness_type, energy_norm_sq
from .forward import ForwardModel, apply_forward
from .quadrature import h1_norm, simpson, time_derivative

DEFAULT_SLACK = 0.05


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    def holds(self, slack: float = DEFAULT_SLACK) -> bool:
        return bool(self.lhs <= (1.0 + slack) * self.rhs)

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("inf")


def estimate_checks(g, model: ForwardModel) -> list[BoundCheck]:
    """The four energy estimates and the output trace estimate for the force ``g``."""
    g = model.samples(g)
    dt = model.dt
    k = compute_constants(model.problem)
    gp_sq = float(simpson(time_derivative(g, dt) ** 2, dt))

    traj = model.solve(g, full=True).trajectory  # (N+1, n)
    unit = CoefficientField.constant(1.0)
    k1 = assemble_stiffness_type(model.mesh, model.dofmap, unit)
    m1 = assemble_mass_type(model.mesh, model.dofmap, unit)
    vel = time_derivative(traj, dt)
    uxx_sq = energy_norm_sq(k1, traj.T)
    ut_sq = energy_norm_sq(m1, vel.T)
    uxxt_sq = energy_norm_sq(k1, vel.T)

    tip = traj[:, model.dofmap.tip_value]
    return [
        BoundCheck("sup_t |u_xx|^2", float(uxx_sq.max()), k.c1_sq * gp_sq),
        BoundCheck("|u_xx|^2_L2L2", float(simpson(uxx_sq, dt)), k.c2_sq * gp_sq),
        BoundCheck("|u_t|^2_L2L2", float(simpson(ut_sq, dt)),
                   k.r0 / (2 * k.rho0) * k.c2_sq * gp_sq),
        BoundCheck("|u_xxt|^2_L2L2", float(simpson(uxxt_sq, dt)),
                   k.r0 / (4 * k.kappa0) * k.c2_sq * gp_sq),
        BoundCheck("|u(l)|^2_H1", h1_norm(tip, dt) ** 2, k.c3_sq * gp_sq),
    ]


def lipschitz_check(g1, g2, model: ForwardModel) -> BoundCheck:
    d = model.samples(g1) - model.samples(g2)
    lhs = model.norm(apply_forward(d, model).values)
    rhs = compute_constants(model.problem).lipschitz * model.norm(time_derivative(d, model.dt))
    return BoundCheck("|Psi g1 - Psi g2|", lhs, rhs)


def random_smooth_force(times, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """A random trigonometric force with ``g(0) = 0``."""
    t = np.asarray(times, dtype=float)
    T = t[-1]
    a = rng.standard_normal(modes) / np.arange(1, modes + 1)
    b = rng.standard_normal(modes) / np.arange(1, modes + 1)
    k = np.arange(1, modes + 1)[:, None]
    return a @ np.sin(k * np.pi * t / T) + b @ (1.0 - np.cos(k * np.pi * t / T))
