"""Command line interface: ``beamforge <command> [--config FILE] [overrides]``.

Exit codes: 0 success, 1 failed check (gradient-check only), 2 invalid input or
configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import objective_and_gradient
from .beam_model import ForceSignal, compile_expression, compute_constants, validate_problem
from .cg import reconstruct
from .config import build_config, load_config
from .errors import SolverError, ValidationError
from .experiments import (
    BENCHMARK_NAMES, benchmark_spec, make_noisy_data, run_benchmark,
)
from .forward import ForwardModel, apply_forward, evaluate_objective
from .reporting import (
    config_hash, read_trace, write_benchmark_bundle, write_csv, write_force, write_gnuplot,
    write_gradient, write_run_record, write_trace, write_trajectory,
)

log = logging.getLogger("beamforge")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3
OUTPUT_ENV = "BEAMFORGE_OUTPUT_DIR"
DEFAULT_OUTPUT = "beamforge_out"


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--elements", type=int, help="number of beam elements M")
    p.add_argument("--steps", type=int, help="number of time steps N (even)")
    p.add_argument("--startup", help="startup rule for the first two time steps")
    p.add_argument("--output-dir", help="output directory (default: config, then $%s)" % OUTPUT_ENV)
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--gamma", type=float, help="relative noise level")
    p.add_argument("-v", "--verbose", action="store_true")


def _force_args(p: argparse.ArgumentParser, required=True):
    grp = p.add_mutually_exclusive_group(required=required)
    grp.add_argument("--force", help="force expression in t, e.g. 't*sin(7*pi*t/2)'")
    grp.add_argument("--force-csv", help="CSV file with columns t,g")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamforge",
        description="Tip shear force reconstruction for a damped cantilever from tip displacement.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="validate the problem and print the estimate constants")
    _common(p)

    p = sub.add_parser("forward", help="tip displacement produced by a given force")
    _common(p)
    _force_args(p)
    p.add_argument("--full", action="store_true", help="also dump every free dof")

    p = sub.add_parser("make-data", help="synthesize (noisy) measured tip displacement")
    _common(p)
    _force_args(p)

    p = sub.add_parser("reconstruct", help="recover the force from measured tip displacement")
    _common(p)
    p.add_argument("--data", required=True, help="measured trace CSV with columns t,value")
    p.add_argument("--truth", help="true force expression in t, for accuracy errors")
    p.add_argument("--reference-norm", type=float,
                   help="||nu|| of the noise-free data for the discrepancy threshold "
                        "(default: norm of the measured data)")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--epsilon", type=float, help="discrepancy parameter (> 1)")

    p = sub.add_parser("gradient-check", help="compare the adjoint gradient with finite differences")
    _common(p)
    _force_args(p, required=False)
    p.add_argument("--directions", type=int, default=5)
    p.add_argument("--tolerance", type=float, default=1e-3)

    p = sub.add_parser("benchmark", help="run a reference benchmark and write its CSV bundle")
    _common(p)
    p.add_argument("name", choices=BENCHMARK_NAMES)
    p.add_argument("--levels", type=float, nargs="+", help="noise levels (default: benchmark's)")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--workers", type=int, default=1, help="concurrent reconstructions")
    return parser


def _raw_config(args) -> dict:
    raw = load_config(args.config) if args.config else {}
    raw = copy.deepcopy(raw)
    grid = raw.setdefault("grid", {})
    if args.elements is not None:
        grid["elements"] = args.elements
    if args.steps is not None:
        grid["steps"] = args.steps
    if args.startup is not None:
        grid["startup"] = args.startup
    noise = raw.setdefault("noise", {})
    if args.seed is not None:
        noise["seed"] = args.seed
    if args.gamma is not None:
        noise["gamma"] = args.gamma
    cg = raw.setdefault("cg", {})
    if getattr(args, "max_iterations", None) is not None:
        cg["max_iterations"] = args.max_iterations
    if getattr(args, "epsilon", None) is not None:
        cg["morozov_epsilon"] = args.epsilon
    if args.output_dir is not None:
        raw["output_dir"] = args.output_dir
    return raw


def _output_dir(cfg, default_leaf: str) -> Path:
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)) / default_leaf


def _force(args, model: ForwardModel) -> np.ndarray:
    if args.force is not None:
        return compile_expression(args.force, var="t")(model.times)
    t, g = read_trace(args.force_csv)
    return model.samples(ForceSignal(g, float(t[1] - t[0])))


def _model(cfg) -> ForwardModel:
    validate_problem(cfg.problem).raise_if_invalid()
    return ForwardModel(cfg.problem, cfg.elements, cfg.steps, cfg.startup)


def _check_force(cfg, g, dt):
    report = validate_problem(cfg.problem, ForceSignal(g, dt))
    for v in report.violations:
        log.warning("force: %s", v)


def cmd_constants(args, cfg) -> int:
    report = validate_problem(cfg.problem)
    out = {"valid": report.ok, "violations": report.violations,
           "coupling": cfg.problem.coupling}
    if report.ok:
        out["constants"] = asdict(compute_constants(cfg.problem))
    print(json.dumps(out, indent=2))
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_forward(args, cfg) -> int:
    model = _model(cfg)
    g = _force(args, model)
    _check_force(cfg, g, model.dt)
    state = model.solve(g, full=args.full)
    out = _output_dir(cfg, "forward")
    path = write_trajectory(out / "forward_trace.csv", state, cfg.digest)
    write_gnuplot(out / "forward_trace.gp", path.name, [(2, "u(l,t)")],
                  "tip displacement", "t", "u(l,t)")
    print(f"{model}: ||u(l)|| = {model.norm(state.tip_value):.6e}; wrote {path}")
    return EXIT_OK


def cmd_make_data(args, cfg) -> int:
    model = _model(cfg)
    g = _force(args, model)
    _check_force(cfg, g, model.dt)
    clean = apply_forward(g, model).values
    noisy = make_noisy_data(clean, cfg.noise, model.dt)
    out = _output_dir(cfg, "data")
    write_trace(out / "clean.csv", model.times, clean, cfg.digest)
    path = write_trace(out / "data.csv", model.times, noisy, cfg.digest)
    print(f"gamma={cfg.noise.gamma:g} seed={cfg.noise.seed} ||nu||={model.norm(clean):.6e}; "
          f"wrote {path}")
    return EXIT_OK


def cmd_reconstruct(args, cfg) -> int:
    model = _model(cfg)
    t, values = read_trace(args.data)
    measured = ForceSignal(values, float(t[1] - t[0]))
    truth = compile_expression(args.truth, var="t")(model.times) if args.truth else None
    rec = reconstruct(measured, cfg.cg, model, truth=truth, reference_norm=args.reference_norm)
    out = _output_dir(cfg, "reconstruct")
    write_run_record(out / "run_record.csv", rec, cfg.digest)
    path = write_force(out / "force.csv", model.times, rec.force, cfg.digest)
    write_gnuplot(out / "force.gp", path.name, [(2, "g")], "reconstructed force", "t", "g(t)")
    write_gnuplot(out / "errors.gp", "run_record.csv", [(5, "convergence error")],
                  "convergence error", "iteration", "L2 error", logscale_y=True)
    print(f"stop={rec.stop_reason} iterations={rec.iterations} J={rec.objective[-1]:.6e}; "
          f"wrote {path}")
    return EXIT_OK


def cmd_gradient_check(args, cfg) -> int:
    model = _model(cfg)
    truth = _force(args, model) if (args.force or args.force_csv) else \
        benchmark_spec("test1").truth_samples(model.times)
    nu = apply_forward(truth, model).values
    g0 = np.zeros_like(nu)
    obj, grad = objective_and_gradient(g0, nu, model, cfg.cg.coupling_mode)
    rng = np.random.Generator(np.random.PCG64(cfg.noise.seed))
    t = model.times / model.grid.horizon
    rows, worst = [], 0.0
    for d in range(args.directions):
        a = rng.standard_normal(6)
        p = sum(a[k] * np.sin((k + 1) * np.pi * t / 2) for k in range(6))
        exact = model.inner(grad.values, p)
        for eps in (1e-3, 1e-4, 1e-5):
            jp = evaluate_objective(g0 + eps * p, nu, model).value
            jm = evaluate_objective(g0 - eps * p, nu, model).value
            fd = (jp - jm) / (2 * eps)
            rel = abs(fd - exact) / abs(fd)
            worst = max(worst, rel)
            rows.append((d, eps, fd, exact, rel))
            print(f"direction {d} eps={eps:.0e}: fd={fd:.10e} adjoint={exact:.10e} rel={rel:.3e}")
    out = _output_dir(cfg, "gradient_check")
    write_gradient(out / "gradient.csv", model.times, grad.values, cfg.digest)
    write_csv(out / "fd_check.csv", ["direction", "eps", "fd", "adjoint", "rel_error"],
              list(zip(*rows)), cfg.digest)
    ok = worst <= args.tolerance
    print(f"worst relative error {worst:.3e} ({'PASS' if ok else 'FAIL'} at {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_benchmark(args, cfg) -> int:
    spec = benchmark_spec(args.name)
    raw = copy.deepcopy(cfg.raw)
    # the benchmark fixes the physics; where the files go must not change their hash
    for key in ("domain", "coefficients", "tip", "output_dir"):
        raw.pop(key, None)
    levels = tuple(args.levels) if args.levels else spec.noise_levels
    digest = config_hash({"benchmark": args.name, "levels": levels, "config": raw})
    res = run_benchmark(spec, seed=cfg.noise.seed, elements=cfg.elements, steps=cfg.steps,
                        cg=cfg.cg, noise_levels=levels, workers=args.workers,
                        model=ForwardModel(spec.problem, cfg.elements, cfg.steps, cfg.startup))
    out = _output_dir(cfg, args.name)
    write_benchmark_bundle(res, out, digest)
    gnorm = res.model.norm(res.truth)
    for g, rec in res.records.items():
        print(f"gamma={g:g}: stop={rec.stop_reason} iterations={rec.iterations} "
              f"relative accuracy error={rec.acc_error[-1] / gnorm:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "forward": cmd_forward,
    "make-data": cmd_make_data,
    "reconstruct": cmd_reconstruct,
    "gradient-check": cmd_gradient_check,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(_raw_config(args))
        return COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"beamforge: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"beamforge: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
