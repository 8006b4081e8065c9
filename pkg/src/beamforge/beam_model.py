"""Physical problem definition for the damped cantilever.

The cantilever obeys

    rho_A u_tt + mu u_t + (r u_xx + kappa u_xxt)_xx = 0   on (0, l) x (0, T)

with zero initial data, a clamped end at x = 0 and, at the tip x = l,

    (r u_xx + kappa u_xxt)(l, t)    = M(t) = c g(t)
    -(r u_xx + kappa u_xxt)_x(l, t) = g(t)

where ``g`` is the unknown shear force and ``c`` the coupling constant of the
cone-shaped tip.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .quadrature import h1_norm

COEFFICIENT_NAMES = ("rho_a", "mu", "r", "kappa")
BOUNDS_SCAN_POINTS = 1001


@dataclass(frozen=True)
class BeamDomain:
    length: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValidationError(f"beam length must be positive, got {self.length}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValidationError(f"time horizon must be positive, got {self.horizon}")


# --- expression coefficients ------------------------------------------------

_FUNCS: dict[str, Callable] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "log": np.log,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "H": lambda z: np.where(z >= 0, 1.0, 0.0),  # Heaviside with H(0) = 1
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def compile_expression(text: str, var: str = "x") -> Callable[[np.ndarray], np.ndarray]:
    """Turn a whitelisted arithmetic expression in ``var`` into a vectorised function."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse coefficient expression {text!r}") from exc

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
                raise ValidationError(f"function not allowed in {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ValidationError(f"functions take exactly one argument in {text!r}")
            check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id != var and node.id not in _CONSTS:
                raise ValidationError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        else:
            raise ValidationError(f"unsupported syntax in coefficient expression {text!r}")

    check(tree)

    def ev(node, x):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, x), ev(node.right, x))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](ev(node.operand, x))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](ev(node.args[0], x))
        if isinstance(node, ast.Name):
            return x if node.id == var else _CONSTS[node.id]
        return float(node.value)

    body = tree.body

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(ev(body, x), dtype=float), x.shape).copy()

    return func


@dataclass(frozen=True)
class CoefficientField:
    """A spatially varying beam coefficient.

    ``kind`` is one of ``"constant"`` (``values`` is a float),
    ``"expression"`` (``values`` is a string in ``x``, e.g. ``"2 + x^2"``) or
    ``"table"`` (``values`` is a pair of sequences ``(x_samples, y_samples)``,
    interpolated piecewise linearly).
    """

    kind: str
    values: object
    lower_bound: float | None = None
    upper_bound: float | None = None
    _func: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "constant":
            c = float(self.values)
            func = lambda x: np.full(np.shape(x), c)  # noqa: E731
        elif self.kind == "expression":
            func = compile_expression(str(self.values))
        elif self.kind == "table":
            xs, ys = (np.asarray(v, dtype=float) for v in self.values)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValidationError("table coefficient needs two equal-length 1-D arrays")
            if np.any(np.diff(xs) <= 0):
                raise ValidationError("table abscissae must be strictly increasing")
            func = lambda x: np.interp(x, xs, ys)  # noqa: E731
        else:
            raise ValidationError(f"unknown coefficient kind {self.kind!r}")
        object.__setattr__(self, "_func", func)

    @classmethod
    def constant(cls, value, **kw):
        return cls("constant", float(value), **kw)

    @classmethod
    def expression(cls, text, **kw):
        return cls("expression", text, **kw)

    def __call__(self, x):
        return self._func(x)

    def bounds(self, length):
        """Configured bounds, falling back to the extremes over a 1001-point scan."""
        lo, hi = self.lower_bound, self.upper_bound
        if lo is None or hi is None:
            samples = self(np.linspace(0.0, length, BOUNDS_SCAN_POINTS))
            lo = float(np.min(samples)) if lo is None else lo
            hi = float(np.max(samples)) if hi is None else hi
        return float(lo), float(hi)


@dataclass(frozen=True)
class TipGeometry:
    tip_length: float = 0.2
    half_angle: float = math.pi / 36
    coupling_override: float | None = None

    def coupling(self) -> float:
        """Moment-to-force ratio ``c`` in ``M(t) = c g(t)``."""
        if self.coupling_override is not None:
            return float(self.coupling_override)
        return 2.0 * self.tip_length * math.cos(self.half_angle) / math.pi


@dataclass(frozen=True)
class ForceSignal:
    """Uniformly sampled time signal ``samples[j] = g(j * dt)``."""

    samples: np.ndarray
    dt: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 1:
            raise ValidationError("force samples must be one-dimensional")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_function(cls, func, grid_times):
        t = np.asarray(grid_times, dtype=float)
        return cls(np.asarray(func(t), dtype=float), float(t[1] - t[0]))

    @property
    def times(self):
        return self.dt * np.arange(self.samples.size)

    def h1_norm(self) -> float:
        return h1_norm(self.samples, self.dt)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class BeamProblem:
    """Everything that defines the continuous direct problem."""

    domain: BeamDomain
    rho_a: CoefficientField
    mu: CoefficientField
    r: CoefficientField
    kappa: CoefficientField
    tip: TipGeometry

    @property
    def coefficients(self) -> dict[str, CoefficientField]:
        return {name: getattr(self, name) for name in COEFFICIENT_NAMES}

    @property
    def coupling(self) -> float:
        return self.tip.coupling()


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def raise_if_invalid(self):
        if self.violations:
            raise ValidationError("; ".join(self.violations))


def validate_problem(problem: BeamProblem, g: ForceSignal | None = None,
                     force_bound: float | None = None) -> ValidationReport:
    """Check the basic coefficient conditions and the admissibility of ``g``.

    Never raises: every violated condition is listed in the returned report.
    """
    report = ValidationReport()
    ell = problem.domain.length
    xs = np.linspace(0.0, ell, BOUNDS_SCAN_POINTS)
    strict = {"rho_a": True, "mu": False, "r": True, "kappa": True}
    for name, coeff in problem.coefficients.items():
        vals = coeff(xs)
        if not np.all(np.isfinite(vals)):
            report.violations.append(f"{name} evaluates to non-finite values")
            continue
        lo, hi = coeff.bounds(ell)
        if strict[name] and not lo > 0:
            report.violations.append(f"{name} lower bound must be positive")
        elif not strict[name] and lo < 0:
            report.violations.append(f"{name} lower bound must be non-negative")
        if lo > hi:
            report.violations.append(f"{name} lower bound exceeds upper bound")
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(vals < lo - tol) or np.any(vals > hi + tol):
            report.violations.append(f"{name} leaves its configured bounds [{lo}, {hi}]")

    tip = problem.tip
    if tip.coupling_override is None:
        if not tip.tip_length > 0:
            report.violations.append("tip length must be positive")
        if not 0 < tip.half_angle < math.pi / 2:
            report.violations.append("half-conic angle must lie in (0, pi/2)")
    elif not math.isfinite(tip.coupling_override):
        report.violations.append("coupling override must be finite")

    if g is not None:
        s = g.samples
        if not np.all(np.isfinite(s)):
            report.violations.append("g has non-finite samples")
        else:
            if s.size and s[0] != 0.0:
                report.violations.append("g(0)=0 required")
            if force_bound is not None and s.size >= 3 and g.h1_norm() > force_bound:
                report.violations.append(
                    f"H1 norm of g exceeds the admissible bound {force_bound}"
                )
    return report


@dataclass(frozen=True)
class TheoreticalConstants:
    """Constants of the a priori, trace and Lipschitz estimates (squared where named so)."""

    c0_sq: float
    ctheta_sq: float
    ce_sq: float
    c1_sq: float
    c2_sq: float
    c3_sq: float
    ell_hat: float
    lipschitz: float
    r0: float
    rho0: float
    kappa0: float


def compute_constants(problem: BeamProblem) -> TheoreticalConstants:
    ell = problem.domain.length
    T = problem.domain.horizon
    r0 = problem.r.bounds(ell)[0]
    kappa0 = problem.kappa.bounds(ell)[0]
    rho0 = problem.rho_a.bounds(ell)[0]
    if not r0 > 0:
        raise ValidationError("r0 must be positive to evaluate the estimate constants")
    if not kappa0 > 0:
        raise ValidationError("kappa0 must be positive to evaluate the estimate constants")
    ell_hat = ell + ell**3 / 3.0
    ce_sq = math.exp(T)
    c0_sq = 4.0 * ell_hat * (1.0 + T) / r0**2
    ctheta_sq = problem.coupling**2
    c1_sq = c0_sq * (1.0 + ctheta_sq) * ce_sq
    c2_sq = c0_sq * (1.0 + ctheta_sq) * (1.0 + ce_sq)
    c3_sq = ell**3 / 3.0 * (c1_sq + r0 / (4.0 * kappa0) * c2_sq)
    lipschitz = math.sqrt(ell**3 / 3.0) * math.sqrt(c1_sq)
    return TheoreticalConstants(
        c0_sq=c0_sq, ctheta_sq=ctheta_sq, ce_sq=ce_sq, c1_sq=c1_sq, c2_sq=c2_sq,
        c3_sq=c3_sq, ell_hat=ell_hat, lipschitz=lipschitz,
        r0=r0, rho0=rho0, kappa0=kappa0,
    )


def moment_from_force(g: ForceSignal, tip: TipGeometry) -> ForceSignal:
    return ForceSignal(tip.coupling() * g.samples, g.dt)
