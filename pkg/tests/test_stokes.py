import math

import numpy as np
import pytest

from ksflow.core import ConfigError, GridSpec, Params, divergence, face_gradient, laplacian, zero_velocity
from ksflow.stokes import (
    PoissonSolver,
    SolverError,
    buoyancy_force,
    discrete_symbol,
    max_divergence,
    pressure_poisson,
    project,
    step_velocity,
    stokes_step,
    vector_laplacian,
)

from conftest import make_state, random_velocity
from oracles import observed_orders, stokes_mms_error

FFT = PoissonSolver("fft", tol=1e-12)
CG = PoissonSolver("cg", tol=1e-12, max_iter=5000)


def _solver(grid):
    return FFT if grid.periodic else CG


def test_solver_validation():
    for bad in (dict(method="multigrid"), dict(tol=0.0), dict(max_iter=0)):
        with pytest.raises(ConfigError):
            PoissonSolver(**bad)


def test_fft_needs_periodic_grid():
    g = GridSpec(2, (1, 1), (8, 8), "box")
    with pytest.raises(ConfigError):
        pressure_poisson(np.zeros(g.shape), g, FFT)


def test_poisson_zero_rhs(grid2):
    res = pressure_poisson(np.zeros(grid2.shape), grid2, _solver(grid2))
    assert np.all(res.solution == 0) and res.subtracted_mean == 0


def test_poisson_single_fourier_mode():
    g = GridSpec(2, (2.0, 3.0), (16, 12), "periodic")
    x, y = g.mesh()
    kx, ky = 2 * math.pi * 3 / 2.0, 2 * math.pi * 2 / 3.0
    e = np.cos(kx * x) * np.sin(ky * y)
    # discrete symbol evaluated by hand
    lam = (4 / g.h[0] ** 2) * math.sin(kx * g.h[0] / 2) ** 2 + (4 / g.h[1] ** 2) * math.sin(ky * g.h[1] / 2) ** 2
    q = pressure_poisson(e, g, FFT).solution
    assert np.allclose(q, -e / lam, atol=1e-13)


def test_discrete_symbol_matches_stencil(rng):
    g = GridSpec(3, (1.0, 2.0, 1.5), (6, 8, 10), "periodic")
    q = rng.standard_normal(g.shape)
    via_fft = np.fft.irfftn(discrete_symbol(g) * np.fft.rfftn(q), s=g.shape, axes=(0, 1, 2))
    assert np.allclose(via_fft, laplacian(q, g), atol=1e-10)


def test_poisson_reports_subtracted_mean(grid2, rng):
    rhs = rng.standard_normal(grid2.shape) + 2.5
    res = pressure_poisson(rhs, grid2, _solver(grid2))
    assert res.subtracted_mean == pytest.approx(rhs.mean())
    assert abs(res.solution.mean()) < 1e-12
    assert np.max(np.abs(laplacian(res.solution, grid2) - (rhs - rhs.mean()))) < 1e-9


def test_cg_non_convergence_carries_residual(rng):
    g = GridSpec(2, (1, 1), (32, 32), "box")
    with pytest.raises(SolverError) as info:
        pressure_poisson(rng.standard_normal(g.shape), g, PoissonSolver("cg", tol=1e-14, max_iter=3))
    assert info.value.residual > 0


def test_projection_idempotent(grid3, rng):
    s = _solver(grid3)
    u, _ = project(random_velocity(grid3, rng), grid3, s)
    u2, q2 = project(u, grid3, s)
    assert max(np.max(np.abs(a - b)) for a, b in zip(u, u2)) < 1e-10
    assert np.max(np.abs(q2)) < 1e-10


def test_projection_annihilates_gradients(rng):
    g = GridSpec(3, (1, 1, 1), (8, 8, 8), "periodic")
    psi = rng.standard_normal(g.shape)
    grad = tuple(face_gradient(psi, a, g) for a in range(3))
    u, _ = project(grad, g, FFT)
    assert max(float(np.max(np.abs(c))) for c in u) < 1e-10


def test_random_fft_projection_to_round_off(rng):
    g = GridSpec(2, (1, 1), (32, 32), "periodic")
    u_star = random_velocity(g, rng)
    u, _ = project(u_star, g, FFT)
    assert max_divergence(u, g) <= 1e-10 * max_divergence(u_star, g)


def test_box_projection_keeps_walls_and_tolerance(rng):
    g = GridSpec(2, (1, 1.25), (16, 20), "box")
    u_star = random_velocity(g, rng)
    u, _ = project(u_star, g, CG)
    assert max_divergence(u, g) <= 1e-10 * (1 + max_divergence(u_star, g))
    assert np.all(u[0][[0, -1], :] == 0) and np.all(u[1][:, [0, -1]] == 0)


def test_vector_laplacian_zero_on_box_walls(rng):
    g = GridSpec(3, (1, 1, 1), (6, 7, 8), "box")
    lap = vector_laplacian(random_velocity(g, rng), g)
    assert np.all(lap[0][[0, -1]] == 0)
    assert np.all(lap[1][:, [0, -1]] == 0)
    assert np.all(lap[2][:, :, [0, -1]] == 0)


def test_zero_forcing_no_flow(grid3):
    s = make_state(grid3, 0.0)
    prm = Params(phi=np.zeros(grid3.shape), phi_slope=(0, 0, 1.0))
    u, p = step_velocity(s, 1e-3, prm, _solver(grid3))
    assert all(np.all(c == 0) for c in u) and np.all(p == 0)


def test_linear_potential_drives_uniform_mean_flow():
    g = GridSpec(2, (1.0, 2.0), (8, 16), "periodic")
    n0, slope, dt = 1.3, (0.5, -2.0), 1e-3
    prm = Params(phi_slope=slope)
    s = make_state(g, n0)
    for k in range(1, 4):
        u, p = step_velocity(s, dt, prm, FFT)
        for a in range(2):
            assert np.allclose(u[a], k * dt * n0 * slope[a], rtol=1e-12, atol=1e-15)
        s = s.evolve(u=u, p=p)


def test_buoyancy_uses_cell_centred_product():
    g = GridSpec(2, (1.0, 1.0), (8, 8), "box")
    x, y = g.mesh()
    prm = Params(phi=y.copy())
    fx, fy = buoyancy_force(np.ones(g.shape), prm, g)
    assert np.all(fx == 0)
    assert np.all(fy[:, [0, -1]] == 0)
    assert np.allclose(fy[:, 2:-2], 1.0)


@pytest.mark.parametrize("bc", ["periodic", "box"])
def test_energy_non_increasing_without_forcing(bc, rng):
    g = GridSpec(2, (1, 1), (16, 16), bc)
    solver = _solver(g)
    u, _ = project(random_velocity(g, rng), g, solver)
    force = tuple(np.zeros(g.face_shape(a)) for a in range(2))
    dt = 0.4 * g.h_min ** 2 / 4
    e = sum(np.sum(c ** 2) for c in u)
    for _ in range(50):
        u, _ = stokes_step(u, force, dt, g, solver)
        e_new = sum(np.sum(c ** 2) for c in u)
        assert e_new <= e * (1 + 1e-12)
        e = e_new


def test_no_slip_walls_after_forced_steps(rng):
    g = GridSpec(3, (1, 1, 1), (8, 8, 8), "box")
    s = make_state(g, rng.random(g.shape))
    prm = Params(phi_slope=(0.3, -0.2, 1.0))
    for _ in range(3):
        u, p = step_velocity(s, 1e-3, prm, CG)
        s = s.evolve(u=u, p=p)
    assert np.all(u[0][[0, -1]] == 0) and np.all(u[1][:, [0, -1]] == 0) and np.all(u[2][:, :, [0, -1]] == 0)
    assert max_divergence(u, g) < 1e-8


def test_manufactured_stokes_second_order():
    errs, divs = zip(*(stokes_mms_error(n) for n in (16, 32, 64)))
    assert min(observed_orders(errs)) >= 1.8
    assert max(divs) < 1e-12


def test_zero_velocity_divergence_free(grid3):
    assert np.all(divergence(zero_velocity(grid3), grid3) == 0)
