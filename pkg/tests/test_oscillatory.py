import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelson import oscillatory as osc, scattering as sc
from nelson.modes import ModelParams, g_norm_sq

A = 0.05


@pytest.fixture(scope="module")
def setup():
    lab = sc.ScatteringLab(ModelParams(lam=0.05, kappa=0.25), A, 0.1, m_max=1, axes=1)
    h1 = sc.make_bump([-0.1, 0, 0], 0.06, A, axes=1)
    h2 = sc.make_bump([0.1, 0, 0], 0.06, A, axes=1)
    return lab, h1, h2


def test_slow_cutoff_value():
    assert osc.slow_cutoff(1e-3, 1.0, 5.0) == pytest.approx(0.841, abs=5e-4)
    assert osc.slow_cutoff(1e-3, 2.0, 5.0) == pytest.approx(2 * (1e-3 / 2) ** (1 / 40), rel=1e-14)
    assert osc.slow_cutoff(0.3, 0.3, 5.0) == 0.3


def test_degenerate_split_at_kappa():
    p = ModelParams(kappa=1.0)
    r = np.linspace(0.0, 0.9, 50)
    chi1, chi2 = osc.split_weights(r, 1.0, p)
    assert np.all(chi2 == 0) and np.all(chi1 == 1)


@given(st.floats(0, 3), st.floats(1e-4, 0.9))
def test_split_is_partition(r, sigma):
    chi1, chi2 = osc.split_weights(np.array([r]), sigma, ModelParams())
    assert 0 <= chi1[0] <= 1 and chi1[0] + chi2[0] == pytest.approx(1.0, abs=1e-15)


def literal_F(lab, G1, G2, n, m, q, r, p, k):
    total = 0j
    for j in range(lab.J):
        qa = tuple(np.asarray(q) + lab.space.lattice[j])
        pb = tuple(np.asarray(p) - lab.space.lattice[j])
        a = b = None
        for s, site in enumerate(map(tuple, G1.sites)):
            if site == qa:
                a = G1.tables[n + 1][s].reshape((lab.J,) * (n + 1))[tuple(r) + (j,)]
        for s, site in enumerate(map(tuple, G2.sites)):
            if site == pb:
                b = G2.tables[m][s].reshape((lab.J,) * m)[tuple(k)] if m else G2.tables[0][s, 0]
        if a is not None and b is not None:
            total += (n + 1) * lab.grid.w[j] * lab.v[j] * a * b
    return total


def test_eval_F_against_literal_loop(setup):
    lab, h1, h2 = setup
    G1, G2 = lab.kernel(h1, 0.1, 7.0), lab.kernel(h2, 0.1, 7.0)
    rng = np.random.default_rng(0)
    for q, r, p, k in osc.support_tuples(lab, h1, h2, 0.1, 0, 1, 20, rng):
        assert osc.eval_F(lab, G1, G2, 0, 1, q, r, p, k) == pytest.approx(
            literal_F(lab, G1, G2, 0, 1, q, r, p, k), rel=1e-13, abs=1e-300)


def test_eval_F_truncation_and_free(setup):
    lab, h1, h2 = setup
    G1, G2 = lab.kernel(h1, 0.1), lab.kernel(h2, 0.1)
    assert osc.eval_F(lab, G1, G2, 1, 0, h1.sites[0], (0,), h2.sites[0], ()) == 0
    free = sc.ScatteringLab(ModelParams(lam=0.0, kappa=0.25), A, 0.1, m_max=1, axes=1)
    F0 = osc.eval_F(free, free.kernel(h1, 0.1), free.kernel(h2, 0.1), 0, 0, h1.sites[1] - [1, 0, 0], (),
                    h2.sites[1] + [1, 0, 0], ())
    assert F0 == 0


def test_f_table_matches_pointwise(setup):
    lab, h1, h2 = setup
    G1, G2 = lab.kernel(h1, 0.1, 2.0), lab.kernel(h2, 0.1, 2.0)
    F = osc.f_table(lab, G1, G2)
    tab = F.tables[(0, 1)]
    rng = np.random.default_rng(1)
    for _ in range(20):
        iq, ip, ik = rng.integers(len(F.qsites)), rng.integers(len(F.psites)), rng.integers(lab.J)
        ref = osc.eval_F(lab, G1, G2, 0, 1, F.qsites[iq], (), F.psites[ip], (ik,))
        assert tab[iq, 0, ip, ik] == pytest.approx(ref, rel=1e-13, abs=1e-300)


def test_f_table_size_guard(setup):
    lab, h1, h2 = setup
    with pytest.raises(ValueError, match="dense F tables"):
        osc.f_table(lab, lab.kernel(h1, 0.1), lab.kernel(h2, 0.1), max_entries=10)


def test_slow_split_adds_up(setup):
    lab, h1, h2 = setup
    G1, G2 = lab.kernel(h1, 0.1, 9.0), lab.kernel(h2, 0.1, 9.0)
    rng = np.random.default_rng(2)
    for q, r, p, k in osc.support_tuples(lab, h1, h2, 0.1, 0, 1, 30, rng):
        F1, F2, F = osc.slow_cutoff_split(lab, G1, G2, 0, 1, q, r, p, k, 0.1)
        assert abs(F1 + F2 - F) <= 1e-14 * max(abs(F), 1e-300) + 1e-300


@pytest.mark.parametrize("power,model", [(1, "1/t"), (2, "1/t2")])
def test_fit_synthetic(power, model):
    t = np.geomspace(5, 80, 9)
    rep = osc.fit_decay(list(zip(t, 3.0 / t ** power)), model)
    assert rep.exponent == pytest.approx(-power, abs=0.01)
    assert rep.dominated and rep.constant == pytest.approx(3.0)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        osc.fit_decay([(1, 1), (2, 1), (3, 1)])
    with pytest.raises(ValueError):
        osc.fit_decay([(t, 1.0) for t in (1, 2, 3, 4, 5)])
    with pytest.raises(ValueError):
        osc.fit_decay([(t, 1.0) for t in (5, 4, 3, 2, 1)])
    with pytest.raises(ValueError):
        osc.fit_decay([(t, 1.0 / t) for t in (1, 3, 10, 20, 40)], "mixed")


def test_fit_flags_growth():
    t = np.geomspace(1, 100, 6)
    rep = osc.fit_decay(list(zip(t, 1.0 / np.sqrt(t))), "1/t")
    assert not rep.dominated and rep.exponent == pytest.approx(-0.5)


def test_envelope_formula():
    p = ModelParams(alpha_bar=0.5, gamma0=5.0)
    s, t = 0.1, 10.0
    expected = s ** (0.5 / 20) / t + s * t + 1 / (t ** 2 * s ** (1 / 20))
    assert osc.envelope(t, s, p) == pytest.approx(expected, rel=1e-14)


def test_summation_plain_is_exponential():
    p = ModelParams(lam=0.1)
    s = 0.05
    A_ = g_norm_sq(1, s, p, 1.0)
    lhs = osc._summation_lhs(lambda m: g_norm_sq(m, s, p, 1.0), 0, 0)
    assert lhs == pytest.approx(math.exp(4 * A_), rel=1e-13)


def test_summation_limits():
    tiny = osc.summation_check([0.1], ModelParams(lam=1e-9), 1.0)
    assert tiny.lhs["plain@0.1"] == pytest.approx(1.0, abs=1e-12)
    assert tiny.rhs["plain@0.1"] == pytest.approx(1.0, abs=1e-12)
    p = ModelParams(lam=0.1)
    at_top = osc.summation_check([p.kappa_star], p, 1.0, c_eff=1.0)
    key = f"plain@{p.kappa_star:g}"
    assert at_top.lhs[key] == 1.0 and at_top.passed[key]


@pytest.mark.parametrize("norms", ["exact", "log"])
def test_summation_holds(norms):
    rep = osc.summation_check([0.5, 0.2, 0.1, 0.05], ModelParams(lam=0.1), 1.0, norms=norms)
    assert all(rep.passed.values())
    assert rep.lhs["plain@0.05"] <= rep.rhs["plain@0.05"]


@given(st.floats(0.01, 0.3), st.floats(0.5, 3.0))
def test_calibrated_constant_is_tight(lam, c_env):
    p = ModelParams(lam=lam)
    sig = [0.5, 0.2, 0.1, 0.05]
    c = osc.calibrated_constant(sig, p, c_env)
    worst = max(g_norm_sq(1, s, p, c_env) / ((lam * c) ** 2 * math.log(p.kappa_star / s)) for s in sig)
    assert worst == pytest.approx(1.0, rel=1e-12)


def test_decay_series_rows(setup):
    lab, h1, h2 = setup
    tuples = osc.support_tuples(lab, h1, h2, 0.1, 0, 1, 10, np.random.default_rng(4))
    rows = osc.f_decay_series(lab, h1, h2, 0.1, [5, 10], tuples, 0, 1)
    assert [r["t"] for r in rows] == [5.0, 10.0]
    assert all(r["split_err"] <= 1e-14 * r["F"] + 1e-300 for r in rows)
