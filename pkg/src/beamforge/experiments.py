"""Synthetic measurements and the two reference benchmarks.

Noise follows ``nu_gamma(t_j) = nu(t_j) + gamma ||nu|| R_j`` for ``j >= 1`` with
``R_j`` standard normal. The variates come from the raw PCG64 stream turned into
uniforms on the open interval (0, 1) and pushed through the normal inverse CDF,
so the same seed gives the same bits on every platform.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .beam_model import (
    BeamDomain, BeamProblem, CoefficientField, TipGeometry, compile_expression,
)
from .cg import CGConfig, CGRunRecord, reconstruct
from .errors import ValidationError
from .forward import ForwardModel, apply_forward
from .quadrature import l2_norm

log = logging.getLogger(__name__)

BENCHMARK_NAMES = ("test1", "test2")


@dataclass(frozen=True)
class NoiseSpec:
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValidationError(f"noise level must be a non-negative number, got {self.gamma}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError("noise seed must be an integer in [0, 2**64)")


def standard_normal(count: int, seed: int) -> np.ndarray:
    """``count`` standard normal variates by inverse CDF from a seeded PCG64 stream."""
    raw = np.random.PCG64(int(seed)).random_raw(count)
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    return ndtri(u)


def make_noisy_data(nu, spec: NoiseSpec, dt: float) -> np.ndarray:
    """Noisy copy of the trace ``nu``; sample 0 (the rest state) is left exact."""
    nu = np.asarray(nu, dtype=float)
    out = nu.copy()
    if spec.gamma == 0:
        return out
    scale = spec.gamma * l2_norm(nu, dt)
    out[1:] += scale * standard_normal(nu.size - 1, spec.seed)
    return out


def derive_seed(seed: int, gamma: float) -> int:
    """Reproducible seed for the run at noise level ``gamma``.

    It depends on the level itself, not on its position in a list, so a run
    gets the same noise whichever other levels are run with it.
    """
    key = int(round(float(gamma) * 1e9))
    return int(np.random.SeedSequence([int(seed), key]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    problem: BeamProblem
    truth: str                  # expression in t
    noise_levels: tuple[float, ...]

    def truth_samples(self, times) -> np.ndarray:
        return compile_expression(self.truth, var="t")(np.asarray(times, dtype=float))


def benchmark_spec(name: str) -> BenchmarkSpec:
    domain = BeamDomain(1.0, 1.0)
    if name == "test1":
        const = CoefficientField.constant
        problem = BeamProblem(
            domain,
            rho_a=const(1.864e-7), mu=const(8.16e-6), r=const(2.265e-3), kappa=const(3.5875e-5),
            tip=TipGeometry(0.2, math.pi / 36, coupling_override=math.cos(math.pi / 36) / (5 * math.pi)),
        )
        return BenchmarkSpec(name, problem, "t*sin(7*pi*t/2)", (0.0, 0.03, 0.06))
    if name == "test2":
        expr = CoefficientField.expression
        problem = BeamProblem(
            domain,
            rho_a=expr("exp(x)"), mu=expr("sin(pi*x)"), r=expr("2 + x^2"), kappa=expr("1 + exp(-x)"),
            tip=TipGeometry(1.0, math.pi / 4),
        )
        return BenchmarkSpec(name, problem, "0.5*H(0.5 - t) + sin(3*pi*t)*H(t - 0.5)",
                             (0.0, 0.05, 0.10))
    raise ValidationError(f"unknown benchmark {name!r}; expected one of {BENCHMARK_NAMES}")


@dataclass(frozen=True)
class ErrorPair:
    iteration: int
    conv_error: float
    acc_error: float


def error_curves(record: CGRunRecord) -> list[ErrorPair]:
    """Convergence and accuracy errors per iteration of a run made with a known truth."""
    if record.acc_error and not np.isfinite(record.acc_error[0]):
        raise ValueError("run was made without a true force; accuracy errors are unavailable")
    return [ErrorPair(i, e, a) for i, (e, a) in
            enumerate(zip(record.conv_error, record.acc_error))]


@dataclass
class BenchmarkResult:
    spec: BenchmarkSpec
    model: ForwardModel
    seed: int
    truth: np.ndarray
    clean: np.ndarray
    noisy: dict[float, np.ndarray] = field(default_factory=dict)
    records: dict[float, CGRunRecord] = field(default_factory=dict)

    @property
    def clean_norm(self) -> float:
        return self.model.norm(self.clean)


def run_benchmark(spec: BenchmarkSpec, seed: int = 42, elements: int = 100,
                  steps: int | None = None, cg: CGConfig | None = None,
                  noise_levels=None, workers: int = 1,
                  model: ForwardModel | None = None) -> BenchmarkResult:
    """Synthesize data from the true force and reconstruct it at every noise level.

    Runs are independent; ``workers > 1`` runs them on a thread pool (the
    compiled march releases the GIL). Results do not depend on ``workers``.
    """
    model = model or ForwardModel(spec.problem, elements, steps)
    levels = tuple(spec.noise_levels if noise_levels is None else noise_levels)
    truth = spec.truth_samples(model.times)
    clean = apply_forward(truth, model).values
    result = BenchmarkResult(spec, model, seed, truth, clean)
    base = cg or CGConfig()
    ref = model.norm(clean)
    for gamma in levels:
        result.noisy[gamma] = make_noisy_data(clean, NoiseSpec(gamma, derive_seed(seed, gamma)), model.dt)

    def run(gamma):
        cfg = replace(base, noise_level=gamma)
        log.info("%s: reconstructing at gamma=%g", spec.name, gamma)
        return reconstruct(result.noisy[gamma], cfg, model, truth=truth, reference_norm=ref)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            recs = list(pool.map(run, levels))
    else:
        recs = [run(gamma) for gamma in levels]
    result.records = dict(zip(levels, recs))
    return result
