import json

import numpy as np
import pytest

from beamforge.cli import main
from beamforge.reporting import read_csv, read_hash, read_trace

SMALL = ["--elements", "6"]


@pytest.fixture(autouse=True)
def _outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("BEAMFORGE_OUTPUT_DIR", str(tmp_path / "env"))


def test_constants(capsys):
    assert main(["constants"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["valid"] and out["constants"]["ell_hat"] == pytest.approx(4 / 3)


def test_forward_writes_under_env_dir(tmp_path):
    assert main(["forward", "--force", "t*sin(pi*t)", *SMALL]) == 0
    path = tmp_path / "env" / "forward" / "forward_trace.csv"
    header, data = read_csv(path)
    assert header == ["t", "u_tip", "ux_tip"] and data.shape[0] == 6 * 142 + 1
    assert (tmp_path / "env" / "forward" / "forward_trace.gp").exists()


def test_forward_full_dump(tmp_path):
    out = tmp_path / "o"
    assert main(["forward", "--force", "t", "--full", *SMALL, "--output-dir", str(out)]) == 0
    header, _ = read_csv(out / "forward_trace.csv")
    assert len(header) == 3 + 12 and header[-2:] == ["u_6", "ux_6"]


def test_make_data_then_reconstruct(tmp_path, capsys):
    d = tmp_path / "d"
    args = [*SMALL, "--gamma", "0.05", "--seed", "9"]
    assert main(["make-data", "--force", "t*sin(7*pi*t/2)", *args, "--output-dir", str(d)]) == 0
    t, noisy = read_trace(d / "data.csv")
    _, clean = read_trace(d / "clean.csv")
    assert noisy[0] == clean[0] and not np.array_equal(noisy, clean)
    r = tmp_path / "r"
    ref = float(np.sqrt(np.trapezoid(clean**2, t)))
    code = main(["reconstruct", "--data", str(d / "data.csv"), "--truth", "t*sin(7*pi*t/2)",
                 "--reference-norm", str(ref), *args, "--output-dir", str(r)])
    assert code == 0
    assert "stop=discrepancy" in capsys.readouterr().out
    header, rows = read_csv(r / "run_record.csv")
    assert header == ["iteration", "J", "grad_norm", "alpha", "conv_error", "acc_error"]
    assert np.all(np.isfinite(rows[:, 5]))
    assert read_hash(r / "force.csv") == read_hash(r / "run_record.csv")


def test_force_csv_input(tmp_path):
    src = tmp_path / "g.csv"
    t = np.linspace(0, 1, 101)
    src.write_text("t,g\n" + "\n".join(f"{a:.17g},{b:.17g}" for a, b in zip(t, t * t)))
    assert main(["forward", "--force-csv", str(src), *SMALL, "--output-dir", str(tmp_path / "o")]) == 0


def test_gradient_check_exit_codes(tmp_path):
    assert main(["gradient-check", "--elements", "60", "--directions", "2",
                 "--output-dir", str(tmp_path / "g")]) == 0
    assert (tmp_path / "g" / "fd_check.csv").exists()
    assert main(["gradient-check", "--elements", "4", "--directions", "1", "--tolerance", "1e-9",
                 "--output-dir", str(tmp_path / "h")]) == 1


@pytest.mark.parametrize("argv", [
    ["forward", "--force", "t", "--steps", "7"],
    ["forward", "--force", "__import__('os')"],
    ["forward", "--force", "t", "--startup", "leapfrog"],
    ["reconstruct", "--data", "/nonexistent.csv"],
    ["constants", "--config", "/nonexistent.json"],
])
def test_invalid_input_exits_2(argv, capsys):
    assert main(argv + SMALL) == 2
    assert "invalid input" in capsys.readouterr().err


def test_invalid_physics_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"coefficients": {"kappa": 0.0}}))
    assert main(["constants", "--config", str(cfg)]) == 2
    assert main(["forward", "--force", "t", "--config", str(cfg), *SMALL]) == 2


def test_solver_failure_exits_3(tmp_path, capsys):
    src = tmp_path / "g.csv"
    src.write_text("t,g\n0,0\n0.5,nan\n1,1\n")
    assert main(["forward", "--force-csv", str(src), *SMALL, "--output-dir", str(tmp_path / "o")]) == 3
    assert "solver failure" in capsys.readouterr().err


def test_benchmark_bundle(tmp_path):
    out = tmp_path / "b"
    assert main(["benchmark", "test2", "--elements", "8", "--levels", "0.05", "0.1",
                 "--output-dir", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"data.csv", "forces.csv", "summary.csv", "run_gamma_0.05.csv", "run_gamma_0.1.csv",
            "errors_gamma_0.05.gp", "data.gp", "forces.gp"} <= names
    header, _ = read_csv(out / "forces.csv")
    assert header == ["t", "g_true", "g_gamma_0.05", "g_gamma_0.1"]
