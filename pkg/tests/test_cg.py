import numpy as np
import pytest

from beamforge import (
    CGConfig, NoiseSpec, StagnationError, ValidationError, apply_forward, benchmark_spec,
    evaluate_objective, make_noisy_data, objective_and_gradient, reconstruct, step_length,
)


@pytest.fixture(scope="module")
def data2(model2_small):
    spec = benchmark_spec("test2")
    truth = spec.truth_samples(model2_small.times)
    return truth, apply_forward(truth, model2_small).values


def test_zero_data_stops_immediately(model2_small):
    rec = reconstruct(np.zeros(model2_small.grid.steps + 1), CGConfig(), model2_small)
    assert rec.iterations == 0 and rec.stop_reason == "gradient_floor"
    assert not np.any(rec.force)


def test_objective_is_monotone(model2_small, data2):
    _, nu = data2
    rec = reconstruct(nu, CGConfig(max_iterations=15), model2_small)
    assert rec.stop_reason == "max_iter" and rec.iterations == 15
    assert np.all(np.diff(rec.objective) <= 1e-12 * rec.objective[0])
    assert rec.objective[-1] < 1e-2 * rec.objective[0]


def test_first_step_is_exact_steepest_descent(model2_small, data2):
    # [DERIVED] from g = 0 the iterate is -alpha grad J(0), alpha = ||grad||^2 / ||Psi grad||^2
    _, nu = data2
    zero = np.zeros_like(nu)
    _, grad = objective_and_gradient(zero, nu, model2_small)
    d = -grad.values
    d[0] = 0.0
    alpha = model2_small.norm(d) ** 2 / model2_small.norm(apply_forward(d, model2_small).values) ** 2
    rec = reconstruct(nu, CGConfig(max_iterations=1), model2_small)
    np.testing.assert_allclose(rec.force, alpha * d, rtol=1e-12, atol=1e-14 * np.abs(d).max())
    assert rec.alpha[0] == pytest.approx(alpha, rel=1e-12)


def test_first_step_minimises_along_the_line(model2_small, data2):
    _, nu = data2
    g1 = reconstruct(nu, CGConfig(max_iterations=1), model2_small).force
    j = [evaluate_objective(s * g1, nu, model2_small).value for s in (0.0, 1.0, 2.0)]
    # J(s g1) is an exact quadratic in s; its vertex sits at s = 1 up to the adjoint consistency error
    vertex = 1.0 - 0.5 * (j[2] - j[0]) / (j[2] - 2 * j[1] + j[0])
    assert vertex == pytest.approx(1.0, abs=5e-3)


def test_exact_line_minimum(problem1):
    # [DERIVED] 1-D finite-difference oracle on phi(a) = J(g + a p) at the gate resolution
    from beamforge import ForwardModel

    model = ForwardModel(problem1, 60)
    nu = apply_forward(benchmark_spec("test1").truth_samples(model.times), model).values
    g = np.zeros_like(nu)
    _, grad = objective_and_gradient(g, nu, model)
    p = -grad.values
    p[0] = 0.0
    a, _ = step_length(model.norm(p) ** 2, p, model)

    def dphi(x, h=1e-3 * a):
        return (evaluate_objective(g + (x + h) * p, nu, model).value
                - evaluate_objective(g + (x - h) * p, nu, model).value) / (2 * h)

    assert abs(dphi(a)) <= 1e-4 * abs(dphi(0.0))


def test_step_length_homogeneity(model2_small, data2):
    # [DERIVED] numerator fixed, denominator scales with |p|^2
    _, nu = data2
    _, grad = objective_and_gradient(np.zeros_like(nu), nu, model2_small)
    p = -grad.values
    p[0] = 0.0
    gsq = model2_small.norm(p) ** 2
    a1, _ = step_length(gsq, p, model2_small)
    a2, _ = step_length(gsq, 2.0 * p, model2_small)
    assert a2 == pytest.approx(a1 / 4, rel=1e-14)


def test_objective_is_quadratic_along_a_line(model2_small, data2, rng):
    # [DERIVED] Psi is linear, so J(g + a p) is a parabola in a
    from beamforge.analysis import random_smooth_force

    _, nu = data2
    g = random_smooth_force(model2_small.times, rng)
    p = random_smooth_force(model2_small.times, rng)
    a = np.linspace(-1.0, 2.0, 5)
    phi = np.array([evaluate_objective(g + x * p, nu, model2_small).value for x in a])
    fit = np.polyval(np.polyfit(a, phi, 2), a)
    assert np.abs(fit - phi).max() <= 1e-10 * np.abs(phi).max()


def test_reconstruction_scales_with_data(model2_small, data2):
    _, nu = data2
    cfg = CGConfig(max_iterations=6)
    # a power-of-two factor scales every floating-point operation exactly
    a = reconstruct(nu, cfg, model2_small).force
    b = reconstruct(1024.0 * nu, cfg, model2_small).force
    np.testing.assert_array_equal(b, 1024.0 * a)


def test_restart_every_step_is_steepest_descent(model2_small, data2):
    _, nu = data2
    rec = reconstruct(nu, CGConfig(max_iterations=8, restart_every=1), model2_small)
    assert np.all(np.diff(rec.objective) < 0)


def test_discrepancy_stop(model2_small, data2):
    truth, nu = data2
    noisy = make_noisy_data(nu, NoiseSpec(0.05, 7), model2_small.dt)
    ref = model2_small.norm(nu)
    rec = reconstruct(noisy, CGConfig(noise_level=0.05), model2_small, truth=truth, reference_norm=ref)
    assert rec.stop_reason == "discrepancy"
    assert rec.threshold == pytest.approx(1.2 * 0.05 * ref)
    assert rec.conv_error[-1] <= rec.threshold < min(rec.conv_error[:-1])
    assert rec.discrepancy_iteration == rec.iterations
    assert rec.acc_error[-1] < rec.acc_error[0]


def test_continue_past_discrepancy(model2_small, data2):
    truth, nu = data2
    noisy = make_noisy_data(nu, NoiseSpec(0.05, 7), model2_small.dt)
    ref = model2_small.norm(nu)
    stop = reconstruct(noisy, CGConfig(noise_level=0.05), model2_small, reference_norm=ref)
    cont = reconstruct(noisy, CGConfig(noise_level=0.05, stop_at_discrepancy=False, max_iterations=20),
                       model2_small, reference_norm=ref)
    assert cont.iterations == 20 and cont.stop_reason == "max_iter"
    assert cont.discrepancy_iteration == stop.iterations
    np.testing.assert_array_equal(cont.discrepancy_force, stop.force)


def test_g0_is_pinned(model2_small, data2):
    _, nu = data2
    rec = reconstruct(nu, CGConfig(max_iterations=3), model2_small, initial_guess=np.ones_like(nu))
    assert rec.force[0] == 0.0


def test_stagnation_on_invisible_direction(model2_small):
    # [DERIVED] causality: a force supported on [T - 2 tau, T] barely reaches the trace
    p = np.zeros(model2_small.grid.steps + 1)
    p[-3:] = 1.0
    with pytest.raises(StagnationError):
        step_length(1.0, p, model2_small)


def test_record_rows(model2_small, data2):
    _, nu = data2
    rec = reconstruct(nu, CGConfig(max_iterations=2), model2_small)
    rows = list(rec.rows())
    assert len(rows) == 3 and rows[0][0] == 0
    assert np.isnan(rows[-1][3]) and np.isnan(rows[0][5])


@pytest.mark.parametrize("kw", [
    {"morozov_epsilon": 1.0}, {"max_iterations": 0}, {"noise_level": -0.1},
    {"coupling_mode": "cubed"}, {"restart_every": -1}, {"gradient_floor": -1.0},
])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        CGConfig(**kw)
