"""Time integration of ``M U'' + (D_mu + K_kappa) U' + K_r U = F(t)``.

Steps ``j >= 3`` use second-order backward differences,

    U''(t_j) ~ (2U^j - 5U^{j-1} + 4U^{j-2} - U^{j-3}) / tau^2
    U'(t_j)  ~ (3U^j - 4U^{j-1} + U^{j-2}) / (2 tau)

so every step solves with the same SPD matrix
``A = 2M/tau^2 + 3C/(2tau) + K``, factored once. The first two steps
need history the march does not have; see ``SteppingFactorization`` for the
startup rules.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg

from .errors import FactorizationError, InstabilityError, ValidationError
from .fem import DiscreteOperatorSet, banded_matvec

log = logging.getLogger(__name__)

TARGET_MESH_RATIO = 142.0


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 2 or self.steps % 2:
            raise ValidationError(f"step count must be a positive even integer, got {self.steps}")
        if not self.horizon > 0:
            raise ValidationError("time horizon must be positive")

    @classmethod
    def for_mesh(cls, horizon, length, elements, ratio=TARGET_MESH_RATIO):
        """Grid with ``h / tau`` close to ``ratio``, rounded up to an even step count."""
        n = int(round(ratio * elements * horizon / length))
        n = max(n + (n % 2), 2)
        return cls(horizon, n)

    @property
    def tau(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.steps + 1)

    def mesh_ratio(self, h: float) -> float:
        return h / self.tau


@dataclass(frozen=True)
class LoadHistory:
    """Load ``F(t_j) = basis @ amplitudes[j]``.

    ``amplitudes`` has shape ``(N+1, m)`` or ``(N+1, m, k)`` for ``k`` independent
    right-hand sides marched together. ``basis=None`` means the amplitudes are
    already full free-dof vectors.
    """

    basis: np.ndarray | None
    amplitudes: np.ndarray

    @classmethod
    def from_callable(cls, func, grid: TimeGrid):
        return cls(None, np.stack([np.asarray(func(t), dtype=float) for t in grid.times]))

    def batched(self):
        a = np.asarray(self.amplitudes, dtype=float)
        return a if a.ndim == 3 else a[:, :, None]


STARTUP_RULES = ("ghost", "euler", "rest", "sdirk")
DEFAULT_STARTUP = "sdirk"
SDIRK_GAMMA = 1.0 - 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class SteppingFactorization:
    """Upper banded Cholesky factors of the stepping matrices.

    ``startup="sdirk"`` (default) takes steps 1 and 2 with the two-stage,
    L-stable, second-order SDIRK method applied to the first-order form
    ``U' = V, M V' = F - C V - K U``. Every stage solves with
    ``M + g tau C + (g tau)^2 K``, ``g = 1 - 1/sqrt(2)``; stage loads are linearly
    interpolated between grid samples. It is the only rule here that stays
    second order when the load jumps at ``t = 0`` (as adjoint loads do) and
    the early inertial layer of the lowest modes spans a few steps.
    ``startup="euler"`` takes steps 1 and 2 with backward Euler,
    ``(M/tau^2 + C/tau + K) U^j = F_j + M(2U^{j-1} - U^{j-2})/tau^2 + C U^{j-1}/tau``.
    ``startup="ghost"`` uses central differences at ``t_0`` and ``t_1`` with the
    ghost state ``U^{-1} = U^1``; that drops the damping from the first step and
    is only accurate when ``tau`` resolves the fastest damped mode.
    ``startup="rest"`` applies the backward-difference step from ``j = 1`` with
    zero history before ``t_0``.
    """

    tau: float
    main: np.ndarray      # 2M/tau^2 + 3C/(2tau) + K
    first: np.ndarray     # euler: M/tau^2 + C/tau + K; sdirk: M + g tau C + (g tau)^2 K;
                          # ghost: 2M/tau^2; rest: same as main
    second: np.ndarray    # ghost: M/tau^2 + C/(2tau); otherwise same as first
    startup: str = DEFAULT_STARTUP

    @classmethod
    def build(cls, ops: DiscreteOperatorSet, tau: float, startup: str = DEFAULT_STARTUP):
        if startup not in STARTUP_RULES:
            raise ValidationError(f"unknown startup rule {startup!r}")
        m, c, k = ops.mass, ops.damping, ops.stiffness_r
        mats = {"main": 2 * m / tau**2 + 1.5 * c / tau + k}
        if startup == "euler":
            mats["first"] = m / tau**2 + c / tau + k
        elif startup == "sdirk":
            gt = SDIRK_GAMMA * tau
            mats["first"] = m + gt * c + gt * gt * k
        elif startup == "ghost":
            mats["first"] = 2 * m / tau**2
            mats["second"] = m / tau**2 + 0.5 * c / tau
        factors = {}
        for name, ab in mats.items():
            try:
                factors[name] = scipy.linalg.cholesky_banded(ab, lower=False)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(
                    f"{name} stepping matrix is not positive definite (tau={tau:g}); "
                    "check the coefficient bounds"
                ) from exc
        factors.setdefault("first", factors["main"])
        factors.setdefault("second", factors["first"])
        return cls(tau=tau, startup=startup, **factors)


@dataclass
class BeamState:
    """Recorded solution of one march.

    ``tip_value`` / ``tip_slope`` have shape ``(N+1,)`` (or ``(N+1, k)`` for batched
    loads); ``trajectory`` is ``(N+1, n[, k])`` when the full field was requested.
    """

    times: np.ndarray
    tip_value: np.ndarray
    tip_slope: np.ndarray
    trajectory: np.ndarray | None = None


# --- compiled kernels ------------------------------------------------------------
# Bandwidth is fixed at 3 (cubic Hermite). Batched right-hand sides are marched
# one after another through the same contiguous work vectors.

@numba.njit(cache=True, nogil=True)
def _matvec_add(ab, x, coef, out):
    n = x.shape[0]
    d0 = ab[3]
    d1 = ab[2]
    d2 = ab[1]
    d3 = ab[0]
    for i in range(n):
        out[i] += coef * d0[i] * x[i]
    for j in range(1, n):
        a = coef * d1[j]
        out[j - 1] += a * x[j]
        out[j] += a * x[j - 1]
    for j in range(2, n):
        a = coef * d2[j]
        out[j - 2] += a * x[j]
        out[j] += a * x[j - 2]
    for j in range(3, n):
        a = coef * d3[j]
        out[j - 3] += a * x[j]
        out[j] += a * x[j - 3]


@numba.njit(cache=True, nogil=True)
def _cho_solve_inplace(u, b):
    """Solve ``U^T U x = b`` in place; ``u`` is an upper banded Cholesky factor."""
    n = b.shape[0]
    d0 = u[3]
    d1 = u[2]
    d2 = u[1]
    d3 = u[0]
    for j in range(n):
        acc = b[j]
        if j >= 1:
            acc -= d1[j] * b[j - 1]
        if j >= 2:
            acc -= d2[j] * b[j - 2]
        if j >= 3:
            acc -= d3[j] * b[j - 3]
        b[j] = acc / d0[j]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        if i + 1 < n:
            acc -= d1[i + 1] * b[i + 1]
        if i + 2 < n:
            acc -= d2[i + 2] * b[i + 2]
        if i + 3 < n:
            acc -= d3[i + 3] * b[i + 3]
        b[i] = acc / d0[i]


@numba.njit(cache=True, nogil=True)
def _load_into(basis, amps, j, c, direct, out):
    n = out.shape[0]
    if direct:
        for i in range(n):
            out[i] = amps[j, i, c]
    else:
        m = basis.shape[0]
        for i in range(n):
            out[i] = 0.0
        for q in range(m):
            a = amps[j, q, c]
            if a != 0.0:
                row = basis[q]
                for i in range(n):
                    out[i] += a * row[i]


@numba.njit(cache=True, nogil=True)
def _finite(u):
    for i in range(u.shape[0]):
        if not np.isfinite(u[i]):
            return False
    return True


@numba.njit(cache=True, nogil=True)
def _sdirk_start(f_stage, mass, damp, stiff, tau, basis, amps, direct, c, n_steps,
                 u1, u2, rhs, tmp, rec, out):
    """Steps 1 and 2 by two-stage SDIRK; leaves U^2 in ``u1`` and U^1 in ``u2``."""
    n = u1.shape[0]
    g = 1.0 - 1.0 / np.sqrt(2.0)
    gt = g * tau
    u = np.zeros(n)
    v = np.zeros(n)
    f_lo = np.zeros(n)
    f_mid = np.zeros(n)
    f_hi = np.zeros(n)
    v1 = np.zeros(n)
    w1 = np.zeros(n)
    ut = np.zeros(n)
    for j in range(1, min(2, n_steps) + 1):
        _load_into(basis, amps, j - 1, c, direct, f_lo)
        _load_into(basis, amps, j, c, direct, f_hi)
        for i in range(n):
            f_mid[i] = (1.0 - g) * f_lo[i] + g * f_hi[i]
        # stage 1: W1 = u + g tau V1
        for i in range(n):
            rhs[i] = gt * f_mid[i]
        _matvec_add(mass, v, 1.0, rhs)
        _matvec_add(stiff, u, -gt, rhs)
        _cho_solve_inplace(f_stage, rhs)
        for i in range(n):
            v1[i] = rhs[i]
            w1[i] = u[i] + gt * v1[i]
            ut[i] = u[i] + (1.0 - g) * tau * v1[i]
        # stage 2: W2 = ut + g tau V2
        b = (1.0 - g) * tau
        for i in range(n):
            rhs[i] = b * f_mid[i] + gt * f_hi[i]
        _matvec_add(mass, v, 1.0, rhs)
        _matvec_add(damp, v1, -b, rhs)
        _matvec_add(stiff, w1, -b, rhs)
        _matvec_add(stiff, ut, -gt, rhs)
        _cho_solve_inplace(f_stage, rhs)
        for i in range(n):
            v[i] = rhs[i]
            u[i] = ut[i] + gt * v[i]
        for r in range(rec.shape[0]):
            out[j, r, c] = u[rec[r]]
        if j == 1:
            u2[:] = u
    u1[:] = u


@numba.njit(cache=True, nogil=True)
def _march(f_main, f_first, f_second, startup, mass, damp, stiff, tau, basis, amps, direct, rec,
           out):
    """Run the full time march; returns -1 on success or the first non-finite step."""
    n_steps = amps.shape[0] - 1
    n = mass.shape[1]
    k = amps.shape[2]
    u1 = np.zeros(n)  # U^{j-1}
    u2 = np.zeros(n)  # U^{j-2}
    u3 = np.zeros(n)  # U^{j-3}
    rhs = np.zeros(n)
    tmp = np.zeros(n)
    pred = np.zeros(n)
    inv_t2 = 1.0 / (tau * tau)
    half_inv_t = 0.5 / tau
    for c in range(k):
        u1[:] = 0.0
        u2[:] = 0.0
        u3[:] = 0.0
        for r in range(rec.shape[0]):
            out[0, r, c] = 0.0

        if startup == 2:
            j0 = 1
        elif startup == 3:
            _sdirk_start(f_first, mass, damp, stiff, tau, basis, amps, direct, c, n_steps,
                         u1, u2, rhs, tmp, rec, out)
            if not (_finite(u1) and _finite(u2)):
                return 1
            j0 = 3
        elif startup == 1:
            # j = 1, 2: backward Euler, (M/tau^2 + C/tau + K) U^j = F_j + M(2U^{j-1} - U^{j-2})/tau^2 + C U^{j-1}/tau
            for j in range(1, min(2, n_steps) + 1):
                _load_into(basis, amps, j, c, direct, rhs)
                for i in range(n):
                    tmp[i] = (2.0 * u1[i] - u2[i]) * inv_t2
                _matvec_add(mass, tmp, 1.0, rhs)
                _matvec_add(damp, u1, 1.0 / tau, rhs)
                _cho_solve_inplace(f_first, rhs)
                u2[:] = u1
                u1[:] = rhs
                if not _finite(u1):
                    return j
                for r in range(rec.shape[0]):
                    out[j, r, c] = u1[rec[r]]
            j0 = 3
        else:
            # j = 1: (2M/tau^2) U^1 = F(t_0)
            _load_into(basis, amps, 0, c, direct, rhs)
            _cho_solve_inplace(f_first, rhs)
            u1[:] = rhs
            if not _finite(u1):
                return 1
            for r in range(rec.shape[0]):
                out[1, r, c] = u1[rec[r]]
            # j = 2: central difference at t_1 with U^0 = 0
            _load_into(basis, amps, 1, c, direct, rhs)
            _matvec_add(mass, u1, 2.0 * inv_t2, rhs)
            _matvec_add(stiff, u1, -1.0, rhs)
            _cho_solve_inplace(f_second, rhs)
            u2[:] = u1
            u1[:] = rhs
            if not _finite(u1):
                return 2
            for r in range(rec.shape[0]):
                out[2, r, c] = u1[rec[r]]
            j0 = 3

        # Correction form of the same step, written in the increments
        # d1 = U^{j-1} - U^{j-2} and d2 = U^{j-2} - U^{j-3}: with the predictor
        # P = U^{j-1} + 2 d1 - d2,
        #   A (U^j - P) = F_j - M (d1 - d2) / tau^2 - C (5 d1 - 3 d2) / (2 tau) - K P.
        # After the start the increments are never recomputed from stored states,
        # so the large matrices see no cancellation error and the solve returns
        # only the small correction. Round-off drops by orders of magnitude
        # against the full-state form of the recursion.
        for i in range(n):
            u3[i] = u2[i] - u3[i]
            u2[i] = u1[i] - u2[i]
        d1 = u2
        d2 = u3
        for j in range(j0, n_steps + 1):
            _load_into(basis, amps, j, c, direct, rhs)
            for i in range(n):
                tmp[i] = (d1[i] - d2[i]) * inv_t2
            _matvec_add(mass, tmp, -1.0, rhs)
            for i in range(n):
                tmp[i] = (5.0 * d1[i] - 3.0 * d2[i]) * half_inv_t
            _matvec_add(damp, tmp, -1.0, rhs)
            for i in range(n):
                pred[i] = u1[i] + (2.0 * d1[i] - d2[i])
            _matvec_add(stiff, pred, -1.0, rhs)
            _cho_solve_inplace(f_main, rhs)
            for i in range(n):
                step = (2.0 * d1[i] - d2[i]) + rhs[i]
                d2[i] = d1[i]
                d1[i] = step
                u1[i] += step
            # the banded solve couples every dof, so a blow-up reaches the tip at once
            if not (np.isfinite(u1[n - 1]) and np.isfinite(u1[n - 2])):
                return j
            for r in range(rec.shape[0]):
                out[j, r, c] = u1[rec[r]]
        if not _finite(u1):
            return n_steps
    return -1


# --- public API -------------------------------------------------------------------

def step_all(ops: DiscreteOperatorSet, grid: TimeGrid, load: LoadHistory,
             factorization: SteppingFactorization | None = None,
             full: bool = False, startup: str = DEFAULT_STARTUP) -> BeamState:
    """March the semi-discrete system over ``grid`` from rest.

    ``startup`` is only used when no prebuilt ``factorization`` is passed.
    """
    if factorization is None:
        factorization = SteppingFactorization.build(ops, grid.tau, startup)
    elif not np.isclose(factorization.tau, grid.tau, rtol=1e-12, atol=0):
        raise ValidationError("factorization was built for a different time step")
    if callable(load):
        load = LoadHistory.from_callable(load, grid)
    amps = np.ascontiguousarray(load.batched())
    if amps.shape[0] != grid.steps + 1:
        raise ValidationError(
            f"load has {amps.shape[0]} time samples, grid needs {grid.steps + 1}"
        )
    n = ops.size
    direct = load.basis is None
    if direct:
        if amps.shape[1] != n:
            raise ValidationError("direct load vectors must have one entry per free dof")
        basis = np.zeros((1, n))
    else:
        basis = np.asarray(load.basis, dtype=float)
        if basis.ndim == 1:
            basis = basis[:, None]
        if basis.shape != (n, amps.shape[1]):
            raise ValidationError("load basis shape does not match amplitudes")
        basis = np.ascontiguousarray(basis.T)
    rec = np.arange(n) if full else np.array([n - 2, n - 1])
    out = np.empty((grid.steps + 1, rec.size, amps.shape[2]))
    status = _march(
        factorization.main, factorization.first, factorization.second,
        STARTUP_RULES.index(factorization.startup),
        np.ascontiguousarray(ops.mass), np.ascontiguousarray(ops.damping),
        np.ascontiguousarray(ops.stiffness_r), grid.tau, basis, amps, direct, rec, out,
    )
    if status >= 0:
        raise InstabilityError(
            f"non-finite state at step j={status} (tau={grid.tau:g}); the time step or "
            "coefficients are unsuitable"
        )
    squeeze = np.asarray(load.amplitudes).ndim == 2
    value = out[:, -2, :]
    slope = out[:, -1, :]
    traj = out if full else None
    if squeeze:
        value, slope = value[:, 0], slope[:, 0]
        traj = traj[:, :, 0] if full else None
    return BeamState(grid.times, value, slope, traj)


def startup_steps(ops: DiscreteOperatorSet, grid: TimeGrid, load: LoadHistory,
                  startup: str = DEFAULT_STARTUP):
    """``(U^1, U^2)`` of the startup rule, computed independently with dense algebra."""
    if callable(load):
        load = LoadHistory.from_callable(load, grid)
    amps = load.batched()[:3, :, 0]
    if load.basis is not None:
        basis = np.asarray(load.basis, dtype=float)
        amps = amps @ (basis[:, None] if basis.ndim == 1 else basis).T
    m = ops.dense("mass")
    c = ops.dense("damping_mu") + ops.dense("stiffness_kappa")
    k = ops.dense("stiffness_r")
    tau = grid.tau
    if startup == "sdirk":
        # block form of the stage equations in (U, V), solved without elimination
        g = SDIRK_GAMMA
        n = m.shape[0]
        eye = np.eye(n)
        u, v = np.zeros(n), np.zeros(n)
        out = []
        for j in (1, 2):
            f_mid = (1 - g) * amps[j - 1] + g * amps[j]
            # stage i: W_i - tau sum a_ik V_k = u ;  M V_i + tau sum a_ik (C V_k + K W_k) = M v + tau sum a_ik F_k
            a = np.array([[g, 0.0], [1 - g, g]])
            big = np.zeros((4 * n, 4 * n))
            rhs = np.zeros(4 * n)
            for i in range(2):
                wi, vi = slice(2 * i * n, (2 * i + 1) * n), slice((2 * i + 1) * n, (2 * i + 2) * n)
                big[wi, wi] = eye
                big[vi, vi] = m
                rhs[wi] = u
                rhs[vi] = m @ v
                for q in range(2):
                    if a[i, q] == 0.0:
                        continue
                    wq, vq = slice(2 * q * n, (2 * q + 1) * n), slice((2 * q + 1) * n, (2 * q + 2) * n)
                    big[wi, vq] += -tau * a[i, q] * eye
                    big[vi, vq] += tau * a[i, q] * c
                    big[vi, wq] += tau * a[i, q] * k
                    rhs[vi] += tau * a[i, q] * (f_mid if q == 0 else amps[j])
            sol = np.linalg.solve(big, rhs)
            u, v = sol[2 * n:3 * n], sol[3 * n:]
            out.append(u)
        return out[0], out[1]
    if startup == "euler":
        a = m / tau**2 + c / tau + k
        u1 = np.linalg.solve(a, amps[1])
        u2 = np.linalg.solve(a, amps[2] + 2 * m @ u1 / tau**2 + c @ u1 / tau)
    elif startup == "rest":
        a = 2 * m / tau**2 + 1.5 * c / tau + k
        u1 = np.linalg.solve(a, amps[1])
        u2 = np.linalg.solve(a, amps[2] + 5 * m @ u1 / tau**2 + 2 * c @ u1 / tau)
    elif startup == "ghost":
        u1 = np.linalg.solve(2 * m / tau**2, amps[0])
        u2 = np.linalg.solve(m / tau**2 + c / (2 * tau), amps[1] + 2 * m @ u1 / tau**2 - k @ u1)
    else:
        raise ValidationError(f"unknown startup rule {startup!r}")
    return u1, u2


def discrete_energy(ops: DiscreteOperatorSet, state: BeamState) -> np.ndarray:
    """``0.5 (V^T M V + U^T K_r U)`` with the backward-difference velocity ``V``."""
    if state.trajectory is None:
        raise ValueError("energy needs the full trajectory")
    u = state.trajectory
    tau = state.times[1] - state.times[0]
    v = np.zeros_like(u)
    v[1:] = (u[1:] - u[:-1]) / tau
    kin = np.einsum("ji,ij->j", v, banded_matvec(ops.mass, v.T))
    pot = np.einsum("ji,ij->j", u, banded_matvec(ops.stiffness_r, u.T))
    return 0.5 * (kin + pot)
