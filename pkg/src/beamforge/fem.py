"""Cubic Hermite finite elements for the clamped-free beam.

Global dofs are interleaved per node as ``(u(x_i), u_x(x_i))``. The two dofs at
the clamped node ``x_0 = 0`` are dropped, so free dof ``k`` is global dof
``k + 2`` and the tip value/slope are the last two free dofs.

Symmetric matrices are kept in LAPACK upper banded storage with half-bandwidth
3: ``ab[3 + i - j, j] == A[i, j]`` for ``i <= j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beam_model import BeamProblem, ForceSignal
from .errors import SolverError, ValidationError
from .quadrature import GAUSS3_POINTS, GAUSS3_WEIGHTS

BANDWIDTH = 3


@dataclass(frozen=True)
class SpaceMesh:
    length: float
    elements: int

    def __post_init__(self):
        if int(self.elements) != self.elements or self.elements < 1:
            raise ValidationError(f"element count must be a positive integer, got {self.elements}")

    @property
    def h(self) -> float:
        return self.length / self.elements

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.elements + 1)


@dataclass(frozen=True)
class DofMap:
    elements: int

    @property
    def total_dofs(self) -> int:
        return 2 * (self.elements + 1)

    @property
    def free_dofs(self) -> int:
        return 2 * self.elements

    @property
    def tip_value(self) -> int:
        return self.free_dofs - 2

    @property
    def tip_slope(self) -> int:
        return self.free_dofs - 1

    def element_dofs(self, e: int) -> np.ndarray:
        """Free-dof indices of element ``e``; ``-1`` marks a clamped dof."""
        g = np.arange(2 * e, 2 * e + 4) - 2
        return np.where(g < 0, -1, g)


@dataclass(frozen=True)
class BoundaryLoadShape:
    trace: np.ndarray
    slope: np.ndarray

    @classmethod
    def for_dofmap(cls, dofmap: DofMap):
        ev = np.zeros(dofmap.free_dofs)
        es = np.zeros(dofmap.free_dofs)
        ev[dofmap.tip_value] = 1.0
        es[dofmap.tip_slope] = 1.0
        ev.flags.writeable = False
        es.flags.writeable = False
        return cls(ev, es)


@dataclass(frozen=True)
class DiscreteOperatorSet:
    """Banded mass, viscous damping, bending and Kelvin-Voigt matrices on the free dofs."""

    mass: np.ndarray
    damping_mu: np.ndarray
    stiffness_r: np.ndarray
    stiffness_kappa: np.ndarray
    mesh: SpaceMesh
    dofmap: DofMap

    @property
    def size(self) -> int:
        return self.dofmap.free_dofs

    @property
    def damping(self) -> np.ndarray:
        """Total damping ``D_mu + K_kappa`` (banded)."""
        return self.damping_mu + self.stiffness_kappa

    def dense(self, name: str) -> np.ndarray:
        return banded_to_dense(getattr(self, name))


# --- Hermite basis on the reference element [0, 1] ---------------------------

def hermite_values(xi, h):
    xi = np.asarray(xi, dtype=float)
    return np.stack([
        1 - 3 * xi**2 + 2 * xi**3,
        h * (xi - 2 * xi**2 + xi**3),
        3 * xi**2 - 2 * xi**3,
        h * (-(xi**2) + xi**3),
    ])


def hermite_second_derivatives(xi, h):
    """``d^2 N_i / dx^2`` at reference points ``xi`` for an element of length ``h``."""
    xi = np.asarray(xi, dtype=float)
    return np.stack([
        -6 + 12 * xi,
        h * (-4 + 6 * xi),
        6 - 12 * xi,
        h * (-2 + 6 * xi),
    ]) / h**2


def _gauss_rule(order):
    if order == 3:
        return GAUSS3_POINTS, GAUSS3_WEIGHTS
    pts, wts = np.polynomial.legendre.leggauss(order)
    return 0.5 + 0.5 * pts, 0.5 * wts


def _assemble_banded(mesh, dofmap, coeff_at_points, basis, xi, wts):
    """Sum element matrices ``int psi B_i B_j`` into upper banded storage."""
    h = mesh.h
    x_left = mesh.nodes[:-1]
    xq = x_left[:, None] + h * xi[None, :]
    psi = np.asarray(coeff_at_points(xq), dtype=float)
    if not np.all(np.isfinite(psi)):
        raise SolverError("coefficient evaluation produced non-finite values")
    # element matrices, shape (E, 4, 4)
    elem = np.einsum("eq,q,iq,jq->eij", psi, wts * h, basis, basis)
    n = dofmap.free_dofs
    ab = np.zeros((BANDWIDTH + 1, n))
    for e in range(mesh.elements):
        dofs = dofmap.element_dofs(e)
        for a in range(4):
            i = dofs[a]
            if i < 0:
                continue
            for b in range(a, 4):
                j = dofs[b]
                if j < 0:
                    continue
                ab[BANDWIDTH + i - j, j] += elem[e, a, b]
    return ab


def assemble_mass_type(mesh, dofmap, coeff, quad_order=3):
    xi, wts = _gauss_rule(quad_order)
    return _assemble_banded(mesh, dofmap, coeff, hermite_values(xi, mesh.h), xi, wts)


def assemble_stiffness_type(mesh, dofmap, coeff, quad_order=3):
    xi, wts = _gauss_rule(quad_order)
    return _assemble_banded(mesh, dofmap, coeff, hermite_second_derivatives(xi, mesh.h), xi, wts)


def assemble_operators(problem: BeamProblem, mesh: SpaceMesh, dofmap: DofMap | None = None,
                       quad_order: int = 3) -> DiscreteOperatorSet:
    dofmap = dofmap or DofMap(mesh.elements)
    if not np.isclose(mesh.length, problem.domain.length):
        raise ValidationError("mesh length differs from the beam length")
    ops = DiscreteOperatorSet(
        mass=assemble_mass_type(mesh, dofmap, problem.rho_a, quad_order),
        damping_mu=assemble_mass_type(mesh, dofmap, problem.mu, quad_order),
        stiffness_r=assemble_stiffness_type(mesh, dofmap, problem.r, quad_order),
        stiffness_kappa=assemble_stiffness_type(mesh, dofmap, problem.kappa, quad_order),
        mesh=mesh,
        dofmap=dofmap,
    )
    for name in ("mass", "damping_mu", "stiffness_r", "stiffness_kappa"):
        getattr(ops, name).flags.writeable = False
    return ops


def assemble_distributed_load(mesh: SpaceMesh, dofmap: DofMap, func, quad_order=3):
    """Load vector ``int f(x) phi_i(x) dx`` for a distributed transverse load."""
    xi, wts = _gauss_rule(quad_order)
    h = mesh.h
    xq = mesh.nodes[:-1, None] + h * xi[None, :]
    fq = np.asarray(func(xq), dtype=float)
    elem = np.einsum("eq,q,iq->ei", fq, wts * h, hermite_values(xi, h))
    out = np.zeros(dofmap.free_dofs)
    for e in range(mesh.elements):
        for a, i in enumerate(dofmap.element_dofs(e)):
            if i >= 0:
                out[i] += elem[e, a]
    return out


def boundary_load(t: float, g: ForceSignal, moment: ForceSignal,
                  shape: BoundaryLoadShape) -> np.ndarray:
    """Weak-form load ``g(t) phi_i(l) + M(t) phi_i'(l)`` at a grid time ``t``."""
    j = int(round(t / g.dt))
    if j < 0 or j >= len(g) or not np.isclose(j * g.dt, t, rtol=0, atol=1e-9 * g.dt):
        raise ValidationError(f"t={t} is not a node of the force grid")
    return g.samples[j] * shape.trace + moment.samples[j] * shape.slope


def trace_values(state: np.ndarray) -> tuple[float, float]:
    """Tip displacement and tip slope read from a free-dof vector."""
    state = np.asarray(state)
    return float(state[-2]), float(state[-1])


# --- banded helpers ------------------------------------------------------------

def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    p = ab.shape[0] - 1
    n = ab.shape[1]
    a = np.zeros((n, n))
    for k in range(p + 1):
        d = ab[p - k, k:]
        idx = np.arange(n - k)
        a[idx, idx + k] = d
        a[idx + k, idx] = d
    return a


def banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    p = ab.shape[0] - 1
    y = ab[p] * x if x.ndim == 1 else ab[p][:, None] * x
    for k in range(1, p + 1):
        d = ab[p - k, k:]
        if x.ndim > 1:
            d = d[:, None]
        y[:-k] += d * x[k:]
        y[k:] += d * x[:-k]
    return y


def energy_norm_sq(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``x^T A x`` for a banded ``A``; ``x`` may carry trailing batch axes."""
    return np.einsum("i...,i...->...", x, banded_matvec(ab, x))
