"""CSV import/export and gnuplot script emission.

Every CSV written here starts with a ``# config_sha256=<hex>`` comment line,
followed by a mandatory header row. Floats are written with ``repr`` (shortest
round-trip form), so equal arrays always produce identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

HASH_PREFIX = "# config_sha256="


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of a configuration mapping."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, header, columns, digest: str) -> Path:
    """Write equal-length ``columns`` under ``header``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [list(c) for c in columns]
    if len(cols) != len(header) or len({len(c) for c in cols}) > 1:
        raise ValueError("columns must match the header and have equal lengths")
    with path.open("w", newline="") as fh:
        fh.write(f"{HASH_PREFIX}{digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and float data of a CSV; ``#`` lines are skipped, the header is required."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    if not lines:
        raise ValidationError(f"{path}: no header row")
    rows = list(csv.reader(lines))
    header = [h.strip() for h in rows[0]]
    if all(_is_number(h) for h in header):
        raise ValidationError(f"{path}: first row is numeric; a header row is mandatory")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric data ({exc})") from None
    if data.size == 0 or data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{path}: rows do not match the {len(header)}-column header")
    return header, data


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_hash(path) -> str | None:
    with Path(path).open() as fh:
        first = fh.readline().strip()
    return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None


def read_trace(path) -> tuple[np.ndarray, np.ndarray]:
    """``(t, value)`` from the first two columns of a trace CSV on a uniform grid."""
    header, data = read_csv(path)
    if data.shape[1] < 2:
        raise ValidationError(f"{path}: a trace needs columns t,value")
    t, v = data[:, 0], data[:, 1]
    if t.size < 3 or abs(t[0]) > 1e-12 * max(1.0, abs(t[-1])):
        raise ValidationError(f"{path}: trace must start at t=0 with at least 3 samples")
    dt = np.diff(t)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-6 * dt.mean():
        raise ValidationError(f"{path}: trace times must be uniformly spaced")
    return t, v


def write_trace(path, t, values, digest: str, name: str = "value") -> Path:
    return write_csv(path, ["t", name], [t, values], digest)


def write_run_record(path, record, digest: str) -> Path:
    rows = list(record.rows())
    cols = list(zip(*rows)) if rows else [[] for _ in range(6)]
    return write_csv(path, ["iteration", "J", "grad_norm", "alpha", "conv_error", "acc_error"],
                     cols, digest)


def write_force(path, t, g, digest: str) -> Path:
    return write_csv(path, ["t", "g"], [t, g], digest)


def write_gradient(path, t, grad, digest: str) -> Path:
    return write_csv(path, ["t", "grad"], [t, grad], digest)


def write_trajectory(path, state, digest: str) -> Path:
    """Tip traces ``(t, u, u_x)``; with a full trajectory every free dof is appended."""
    header = ["t", "u_tip", "ux_tip"]
    cols = [state.times, state.tip_value, state.tip_slope]
    if state.trajectory is not None:
        n = state.trajectory.shape[1]
        header += [f"{'u' if k % 2 == 0 else 'ux'}_{k // 2 + 1}" for k in range(n)]
        cols += [state.trajectory[:, k] for k in range(n)]
    return write_csv(path, header, cols, digest)


def write_gnuplot(path, csv_name: str, series, title: str, xlabel: str, ylabel: str,
                  logscale_y: bool = False) -> Path:
    """Emit a gnuplot script plotting ``series`` = [(column index, label), ...] of a CSV."""
    path = Path(path)
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{Path(csv_name).stem}.png'",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set grid",
    ]
    if logscale_y:
        lines.append("set logscale y")
    plots = [f"'{csv_name}' using 1:{col} with lines title '{label}'" for col, label in series]
    lines.append("plot " + ", \\\n     ".join(plots))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_benchmark_bundle(result, out_dir, digest: str) -> list[Path]:
    """CSV files (and gnuplot scripts) with the data behind the data, force and error plots."""
    out = Path(out_dir)
    t = result.model.times
    levels = list(result.records)
    written = []
    tag = {g: f"{g:g}" for g in levels}

    data_header = ["t", "nu"] + [f"nu_gamma_{tag[g]}" for g in levels if g > 0]
    data_cols = [t, result.clean] + [result.noisy[g] for g in levels if g > 0]
    written.append(write_csv(out / "data.csv", data_header, data_cols, digest))

    force_header = ["t", "g_true"] + [f"g_gamma_{tag[g]}" for g in levels]
    force_cols = [t, result.truth] + [result.records[g].force for g in levels]
    written.append(write_csv(out / "forces.csv", force_header, force_cols, digest))

    summary = {k: [] for k in ("gamma", "iterations", "stop_reason", "final_conv_error",
                               "final_acc_error", "relative_acc_error", "threshold",
                               "noise_scale")}
    gnorm = result.model.norm(result.truth)
    for g in levels:
        rec = result.records[g]
        written.append(write_run_record(out / f"run_gamma_{tag[g]}.csv", rec, digest))
        written.append(write_gnuplot(
            out / f"errors_gamma_{tag[g]}.gp", f"run_gamma_{tag[g]}.csv",
            [(5, "convergence error"), (6, "accuracy error")],
            f"{result.spec.name}: errors, gamma = {tag[g]}", "iteration", "L2 error",
            logscale_y=True))
        summary["gamma"].append(g)
        summary["iterations"].append(rec.iterations)
        summary["stop_reason"].append(rec.stop_reason)
        summary["final_conv_error"].append(rec.conv_error[-1])
        summary["final_acc_error"].append(rec.acc_error[-1])
        summary["relative_acc_error"].append(rec.acc_error[-1] / gnorm)
        summary["threshold"].append(rec.threshold)
        summary["noise_scale"].append(g * result.clean_norm)
    written.append(write_csv(out / "summary.csv", list(summary), list(summary.values()), digest))

    written.append(write_gnuplot(
        out / "data.gp", "data.csv",
        [(k + 2, name) for k, name in enumerate(data_header[1:])],
        f"{result.spec.name}: tip displacement data", "t", "u(l,t)"))
    written.append(write_gnuplot(
        out / "forces.gp", "forces.csv",
        [(k + 2, name) for k, name in enumerate(force_header[1:])],
        f"{result.spec.name}: true and reconstructed shear force", "t", "g(t)"))
    return written
