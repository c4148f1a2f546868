import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from nelson.modes import (ModelParams, angular_rule, build_annulus_grid, build_lattice_grid, chi_kappa,
                          form_factor, form_factor_check, form_factor_cutoff, g_envelope, g_norm_sq,
                          read_params, smoothstep)


def test_annulus_volume_24_modes():
    g = build_annulus_grid(0.5, 1.0, 4, 6)
    assert len(g) == 24
    assert abs(g.w.sum() - 4 * math.pi / 3 * (1 - 0.125)) < 1e-10


def test_thin_shell_single_mode():
    g = build_annulus_grid(0.999, 1.0, 1, 1)
    assert len(g) == 1
    assert g.w[0] == pytest.approx(4 * math.pi * 0.9995 ** 2 * 0.001, rel=1e-12)


def test_annulus_volume_against_adaptive_quadrature():
    ref, _ = quad(lambda r: 4 * math.pi * r ** 2, 0.1, 1.0, epsabs=1e-14)
    g = build_annulus_grid(0.1, 1.0, 8, 14)
    assert abs(g.w.sum() - ref) <= 1e-9


@pytest.mark.parametrize("n", [1, 6, 14, 26, 8, 18])
def test_angular_rules_integrate_constants(n):
    dirs, w = angular_rule(n)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1)
    assert w.sum() == pytest.approx(4 * math.pi)


def test_unsupported_angular_rule():
    with pytest.raises(ValueError):
        angular_rule(7)


def test_bad_annulus_range():
    with pytest.raises(ValueError):
        build_annulus_grid(1.0, 0.5, 2, 6)


def test_chi_kappa_values():
    p = ModelParams(kappa=1.0, eps0=0.1)
    assert chi_kappa(np.zeros(3), p) == 1
    assert chi_kappa(np.array([1.0, 0, 0]), p) == 0
    assert chi_kappa(np.array([0.95, 0, 0]), p) == pytest.approx(0.5, abs=1e-14)


def test_form_factor_constant_on_plateau():
    p = ModelParams(lam=1.0, alpha_bar=0.5)
    assert form_factor(np.array([0.25, 0, 0]), p) == pytest.approx(1 / math.sqrt(2), rel=1e-14)


def test_form_factor_free_theory():
    k = np.random.default_rng(0).normal(size=(10, 3))
    assert np.all(form_factor(k, ModelParams(lam=0.0)) == 0)


def test_form_factor_scalar_value():
    # 0.1 * 0.5^0.3 / sqrt(2 * 0.5)
    p = ModelParams(lam=0.1, alpha_bar=0.3, eps0=0.1, kappa=1.0)
    assert form_factor(np.array([0.0, 0.5, 0.0]), p) == pytest.approx(0.1 * 0.5 ** 0.3, rel=1e-14)


def test_cutoff_conventions():
    p = ModelParams(lam=0.1)
    assert form_factor_cutoff(np.array([0.1, 0, 0]), 0.2, p) == 0
    assert form_factor_cutoff(np.array([0.2, 0, 0]), 0.2, p) == form_factor(np.array([0.2, 0, 0]), p)
    k = np.array([0.3, 0, 0])
    assert form_factor_cutoff(k, 0.2, p) == form_factor(k, p)
    assert form_factor_check(k, 0.2, p) == 0


@given(st.floats(0.01, 0.99), st.floats(0.02, 0.9))
def test_cutoff_and_check_partition_below_plateau(r, sigma):
    # below the UV shoulder the cutoff and check parts add up to the full form factor
    p = ModelParams(lam=0.2)
    k = np.array([r * 0.89, 0, 0])
    total = form_factor_cutoff(k, sigma, p) + form_factor_check(k, sigma, p)
    assert total == pytest.approx(form_factor(k, p), rel=1e-14)


def test_g_envelope_examples():
    p = ModelParams(lam=0.1, alpha_bar=0.5)
    assert g_envelope([], 0.1, p, 2.0) == 1.0
    assert g_envelope([np.array([2.0, 0, 0])], 0.1, p, 2.0) == 0.0
    # 2 * 0.1 * 0.5^{-1}
    assert g_envelope([np.array([0.5, 0, 0])], 0.1, p, 2.0) == pytest.approx(0.4, rel=1e-14)


def test_g_norm_sq_against_quadrature():
    p = ModelParams(lam=0.1, alpha_bar=0.3)
    ref, _ = quad(lambda r: 4 * math.pi * r ** 2 * (2 * 0.1 * r ** (0.3 - 1.5)) ** 2, 0.05, p.kappa_star)
    assert g_norm_sq(1, 0.05, p, 2.0) == pytest.approx(ref, rel=1e-10)
    assert g_norm_sq(3, 0.05, p, 2.0) == pytest.approx(ref ** 3, rel=1e-10)


@given(st.floats(-1, 2))
def test_smoothstep_range(x):
    assert 0 <= smoothstep(x) <= 1


def test_lattice_grid_on_axis():
    g = build_lattice_grid(0.0, 0.25, 0.05, axes=1)
    assert len(g) == 8
    assert np.all(g.lattice[:, 1:] == 0)
    assert np.allclose(g.w, 0.05 ** 3)


def test_params_validation_and_io(tmp_path):
    with pytest.raises(ValueError, match="gamma"):
        ModelParams(gamma=3.0)
    f = tmp_path / "p.cfg"
    f.write_text("lambda = 0.02  # weak\nkappa=0.5\n")
    p = read_params(f)
    assert p.lam == 0.02 and p.kappa == 0.5
    assert ModelParams.from_mapping(p.to_mapping()) == p


def test_grid_csv(tmp_path):
    g = build_annulus_grid(0.5, 1.0, 1, 6)
    g.to_csv(tmp_path / "g.csv")
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[0] == "kx,ky,kz,w" and len(rows) == 7
