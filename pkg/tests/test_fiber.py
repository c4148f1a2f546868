import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelson import fiber
from nelson.modes import ModeGrid, ModelParams, build_annulus_grid, build_shell_grid, form_factor_cutoff


def one_mode(k=(0.3, 0.0, 0.0), w=0.2, lam=0.3):
    grid = ModeGrid(np.array([k], float), np.array([w]), 0.0, 1.0)
    return grid, ModelParams(lam=lam)


def two_by_two(P, grid, params, sigma):
    k = grid.k[0]
    c = math.sqrt(grid.w[0]) * form_factor_cutoff(grid.k, sigma, params)[0]
    a = 0.5 * P @ P
    d = 0.5 * (P - k) @ (P - k) + np.linalg.norm(k)
    return 0.5 * (a + d) - math.hypot(0.5 * (a - d), c), a, d, c


def test_free_fiber():
    grid = build_annulus_grid(0.1, 1.0, 2, 6)
    model = fiber.FiberModel(grid, ModelParams(lam=0.0), 2, 0.1)
    P = np.array([0.1, 0, 0])
    H = model.hamiltonian(P)
    assert (H - fiber.sp.diags(H.diagonal())).nnz == 0
    gs = model.ground_state(P)
    assert gs.energy == pytest.approx(0.005, abs=1e-15)
    assert gs.vector[0] == 1 and np.count_nonzero(gs.vector) == 1
    assert np.all(gs.components[1] == 0)
    assert np.all(fiber.froehlich_f1(model, gs) == 0)


@given(st.floats(-0.15, 0.15), st.floats(0.05, 0.8), st.floats(0.0, 0.5))
def test_one_mode_closed_form(px, kx, lam):
    grid, params = one_mode((kx, 0, 0), 0.3, lam)
    model = fiber.FiberModel(grid, params, 1, 0.01)
    P = np.array([px, 0.0, 0.0])
    H = model.hamiltonian(P).toarray()
    E, a, d, c = two_by_two(P, grid, params, 0.01)
    assert np.allclose(H, [[a, c], [c, d]], atol=1e-15)
    gs = model.ground_state(P)
    assert gs.energy == pytest.approx(E, abs=1e-12)


def test_one_mode_components_and_resolvent():
    grid, params = one_mode()
    model = fiber.FiberModel(grid, params, 1, 0.01)
    P = np.array([0.05, 0.0, 0.0])
    gs = model.ground_state(P)
    E, a, d, c = two_by_two(P, grid, params, 0.01)
    assert gs.components.at((0,)) == pytest.approx(gs.vector[1] / math.sqrt(grid.w[0]))
    # eigenvector ratio of the 2x2 block: psi_1 = -c psi_0 / (d - E)
    f1 = fiber.froehlich_f1(model, gs)[0]
    assert f1 == pytest.approx(-c * gs.vector[0] / (d - E) / math.sqrt(grid.w[0]), rel=1e-10)
    assert f1 == pytest.approx(gs.components.at((0,)), rel=1e-10)


@pytest.fixture(scope="module")
def small_model():
    grid = build_annulus_grid(0.1, 1.0, 2, 14)
    return fiber.FiberModel(grid, ModelParams(lam=0.1), 2, 0.1)


def test_hermitian_and_ground_state(small_model):
    P = np.array([0.05, 0.03, 0.0])
    H = small_model.hamiltonian(P)
    assert abs(H - H.T.conj()).max() == 0
    gs = small_model.ground_state(P, dense_below=0)
    dense = np.linalg.eigvalsh(H.toarray())
    assert gs.energy == pytest.approx(dense[0], abs=1e-10)
    assert gs.gap >= dense[1] - dense[0] - 1e-10
    assert gs.vector[0] > 0
    assert sum(gs.components.norm_sq().values()) == pytest.approx(1.0, abs=1e-12)
    assert gs.energy <= 0.5 * P @ P


def test_support_below_cutoff():
    grid = build_annulus_grid(0.02, 1.0, 4, 6)
    model = fiber.FiberModel(grid, ModelParams(lam=0.1), 2, 0.3)
    gs = model.ground_state(np.array([0.05, 0, 0]))
    sub = grid.absk < 0.3
    assert sub.any()
    touches = model.basis.occupation()[:, sub].sum(axis=1) > 0
    assert np.max(np.abs(gs.vector[touches])) <= 1e-12


def test_froehlich_bound_constant_is_stable():
    grid = build_annulus_grid(0.1, 1.0, 2, 14)
    P = np.array([0.05, 0.0, 0.0])
    cs = []
    for lam in (0.005, 0.01, 0.02):
        model = fiber.FiberModel(grid, ModelParams(lam=lam), 2, 0.1)
        f1 = fiber.froehlich_f1(model, model.ground_state(P))
        cs.append(np.max(np.abs(f1) * grid.absk / model.vsig))
    assert max(cs) / min(cs) < 1.05


def test_energy_surface_free_theory():
    grid = build_annulus_grid(0.1, 1.0, 1, 6)
    model = fiber.FiberModel(grid, ModelParams(lam=0.0), 1, 0.1)
    surf = fiber.energy_surface(model, [[0.02, 0.0, 0.01]])
    assert np.allclose(surf.gradients[0], [0.02, 0.0, 0.01], atol=1e-9)
    assert np.allclose(surf.hessians[0], np.eye(3), atol=1e-6)
    with pytest.raises(ValueError):
        fiber.energy_surface(model, [[0.2, 0, 0]])


def test_spectral_bounds_report():
    grid = build_shell_grid([0.05, 0.1, 0.2, 0.4, 1.0], 1, 6)
    params = ModelParams(lam=0.05)
    surfaces, states = [], {}
    for s in (0.4, 0.2, 0.1):
        model = fiber.FiberModel(grid, params, 1, s)
        surfaces.append(fiber.energy_surface(model, [[0.0, 0.0, 0.0]]))
        states[s] = model.ground_state(np.zeros(3))
    rep = fiber.verify_spectral_bounds(surfaces, states)
    assert min(rep["min_curvature"]) > 0
    assert rep["energy_cauchy"][0] > rep["energy_cauchy"][1] > 0
    with pytest.raises(ValueError):
        fiber.verify_spectral_bounds(surfaces[::-1])


def test_aligned_difference_removes_phase():
    v = np.array([1.0, 2.0j, 0.5])
    assert np.linalg.norm(fiber.aligned_difference(np.exp(0.7j) * v, v)) < 1e-14


def test_loglog_slope():
    x = np.array([0.1, 0.2, 0.4])
    assert fiber.loglog_slope(x, 3 * x ** 2) == pytest.approx(2.0)


def test_cg_refuses_indefinite():
    with pytest.raises(fiber.SpectralConditionError):
        fiber.conjugate_gradient(lambda u: -u, np.ones(3))
