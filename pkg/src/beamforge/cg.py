"""Conjugate gradient reconstruction of the tip shear force.

Fletcher-Reeves directions built from the adjoint gradient, the closed-form step
``alpha = ||grad J||^2 / ||u(l, .; p)||^2`` (one sensitivity solve per iteration),
and Morozov's discrepancy principle as the stopping rule for noisy data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adjoint import COUPLING_MODES, assemble_gradient, gradient_coupling, solve_adjoint
from .errors import InstabilityError, StagnationError, ValidationError
from .forward import ForwardModel, apply_forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CGConfig:
    max_iterations: int = 200
    morozov_epsilon: float = 1.2
    noise_level: float = 0.0
    gradient_floor: float = 1e-12
    restart_every: int = 50
    stagnation_rtol: float = 1e-9
    coupling_mode: str = "consistent"
    stop_at_discrepancy: bool = True

    def __post_init__(self):
        if not self.morozov_epsilon > 1:
            raise ValidationError("Morozov parameter must exceed 1")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.noise_level < 0:
            raise ValidationError("noise level must be non-negative")
        if self.coupling_mode not in COUPLING_MODES:
            raise ValidationError(f"coupling_mode must be one of {COUPLING_MODES}")
        if self.restart_every < 0 or self.gradient_floor < 0:
            raise ValidationError("restart_every and gradient_floor must be non-negative")


@dataclass
class CGRunRecord:
    """Per-iteration history of one reconstruction.

    Entry ``i`` of each list belongs to iterate ``g^(i)``; ``alpha[i]`` and
    ``grad_norm[i]`` are NaN where no step was taken from ``g^(i)``.
    """

    times: np.ndarray
    objective: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)
    conv_error: list[float] = field(default_factory=list)
    acc_error: list[float] = field(default_factory=list)
    stop_reason: str = ""
    force: np.ndarray | None = None
    output: np.ndarray | None = None
    threshold: float = float("nan")
    discrepancy_iteration: int | None = None
    discrepancy_force: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.objective) - 1

    def rows(self):
        for i in range(len(self.objective)):
            yield (i, self.objective[i], self.grad_norm[i], self.alpha[i],
                   self.conv_error[i], self.acc_error[i])


def step_length(grad_norm_sq: float, direction, model: ForwardModel,
                stagnation_rtol: float = 1e-9):
    """Exact line-search step along ``direction`` and the output it drives.

    Raises StagnationError when ``||u(l, .; p)||^2`` is negligible relative to
    ``(static gain * ||p||)^2``, i.e. the direction is invisible in the data.
    """
    response = apply_forward(direction, model).values
    denom = model.norm(response) ** 2
    scale = (model.static_gain * model.norm(direction)) ** 2
    if not np.isfinite(denom):
        raise InstabilityError("sensitivity solve returned non-finite output")
    if denom <= max(1e-30, stagnation_rtol * scale):
        raise StagnationError(
            f"direction is in the numerical null space of the forward map "
            f"(||u(l;p)||^2 = {denom:.3e}, reference {scale:.3e})"
        )
    return grad_norm_sq / denom, response


def reconstruct(measured, cfg: CGConfig, model: ForwardModel, initial_guess=None,
                truth=None, reference_norm: float | None = None) -> CGRunRecord:
    """Minimise ``J(g) = 0.5 ||u(l, .; g) - nu||^2`` from measured tip displacement.

    With ``cfg.stop_at_discrepancy=False`` the run continues past the first
    iterate that meets the discrepancy threshold (recorded in
    ``discrepancy_iteration``), which exposes semi-convergence.

    ``reference_norm`` is ``||nu||`` of the noise-free data used to scale the
    discrepancy threshold ``epsilon * gamma * ||nu||``; it defaults to the norm of
    ``measured``.
    """
    nu = model.samples(measured)
    g = np.zeros_like(nu) if initial_guess is None else model.samples(initial_guess).copy()
    g[0] = 0.0
    g_true = None if truth is None else model.samples(truth)
    ref = model.norm(nu) if reference_norm is None else reference_norm
    threshold = cfg.morozov_epsilon * cfg.noise_level * ref
    c_grad = gradient_coupling(model, cfg.coupling_mode)

    rec = CGRunRecord(times=model.times, threshold=threshold)
    output = apply_forward(g, model).values if np.any(g) else np.zeros_like(nu)
    residual = output - nu
    grad_prev_sq = None
    direction = None
    grad0 = None

    for i in range(cfg.max_iterations + 1):
        err = model.norm(residual)
        rec.objective.append(0.5 * err**2)
        rec.conv_error.append(err)
        rec.acc_error.append(model.norm(g_true - g) if g_true is not None else float("nan"))
        rec.alpha.append(float("nan"))
        rec.grad_norm.append(float("nan"))

        if cfg.noise_level > 0 and err <= threshold and rec.discrepancy_iteration is None:
            rec.discrepancy_iteration = i
            rec.discrepancy_force = g.copy()
            if cfg.stop_at_discrepancy:
                rec.stop_reason = "discrepancy"
                break

        grad = assemble_gradient(solve_adjoint(residual, model), c_grad).values
        grad[0] = 0.0  # g(0) is pinned, so its component carries no descent
        grad_sq = model.norm(grad) ** 2
        rec.grad_norm[-1] = np.sqrt(grad_sq)
        if grad0 is None:
            grad0 = np.sqrt(grad_sq)
        if grad_sq == 0.0 or np.sqrt(grad_sq) <= cfg.gradient_floor * grad0:
            rec.stop_reason = "gradient_floor"
            break
        if i == cfg.max_iterations:
            rec.stop_reason = "max_iter"
            break

        restart = direction is None or (cfg.restart_every and i % cfg.restart_every == 0)
        if restart:
            direction = -grad
        else:
            direction = -grad + (grad_sq / grad_prev_sq) * direction
            if model.inner(grad, direction) >= 0:
                log.debug("iteration %d: non-descent direction, resetting", i)
                direction = -grad
        grad_prev_sq = grad_sq

        alpha, response = step_length(grad_sq, direction, model, cfg.stagnation_rtol)
        rec.alpha[-1] = alpha
        g = g + alpha * direction
        g[0] = 0.0
        residual = residual + alpha * response
        if not np.all(np.isfinite(g)):
            raise InstabilityError(f"iterate {i + 1} is not finite")
        log.debug("iter %d: J=%.6e |grad|=%.3e alpha=%.3e", i, rec.objective[-1],
                  rec.grad_norm[-1], alpha)

    rec.force = g
    rec.output = residual + nu
    return rec
