import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelson import wick


def block_count(n, m, n_t, m_t, a):
    """Patterns with exactly a ket r-slots sent to bra r~-slots, by counting choices."""
    rest = n - a
    if a > min(n, n_t) or rest > m_t:
        return 0
    return (math.comb(n, a) * math.perm(n_t, a) * math.perm(m_t, rest) * math.factorial(m))


def test_pattern_counts():
    assert len(wick.enumerate_patterns(1, 1, 1, 1)) == 2
    pats = wick.enumerate_patterns(2, 1, 1, 2)
    assert len(pats) == 6
    for a in range(2):
        assert sum(len(p.r_hat) == a for p in pats) == block_count(1, 2, 2, 1, a)
    empty = wick.enumerate_patterns(1, 1, 0, 1)
    assert empty == [] and empty.mismatch


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))
def test_block_signatures_by_counting(n, m, n_t):
    m_t = n + m - n_t
    if m_t < 0:
        return
    pats = wick.enumerate_patterns(m, n, m_t, n_t)
    for a in range(n + 1):
        assert sum(len(p.r_hat) == a for p in pats) == block_count(n, m, n_t, m_t, a)
    for p in pats:
        assert len(p.r_hat) + len(p.r_check) == n
        assert len(p.k_hat) + len(p.k_check) == m


def test_pattern_guard():
    with pytest.raises(ValueError):
        wick.enumerate_patterns(5, 4, 5, 4)


@given(st.integers(1, 7), st.integers(0, 2 ** 31))
def test_ryser_matches_expansion(n, seed):
    M = np.random.default_rng(seed).normal(size=(n, n))
    direct = sum(np.prod(M[np.arange(n), list(p)]) for p in itertools.permutations(range(n)))
    assert wick.ryser(M) == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_permanent_known_values():
    assert wick.permanent(np.ones((6, 6))) == pytest.approx(720)
    assert wick.permanent(np.eye(4)) == 1
    assert wick.permanent(np.zeros((0, 0))) == 1


def test_monomial_single_mode_twice():
    assert wick.vev_monomial(((), (0, 0)), ((), (0, 0)), [1.0]) == 2
    word = [("b", 0), ("b", 0), ("bdag", 0), ("bdag", 0)]
    assert wick.brute_force_vev(word) == pytest.approx(2, rel=1e-15)


def test_monomial_disjoint_modes():
    assert wick.vev_monomial(((), (1,)), ((), (0,)), [1.0, 1.0]) == 0


@given(st.lists(st.integers(0, 2), min_size=0, max_size=4), st.data())
def test_monomial_against_fock_vectors(modes, data):
    other = data.draw(st.permutations(modes))
    w = np.array([0.7, 1.3, 2.1])
    ket = wick.FockVector.vacuum()
    bra = wick.FockVector.vacuum()
    for j in modes:
        ket = ket.bdag(j)
    for j in other:
        bra = bra.bdag(j)
    scale = np.prod([1 / math.sqrt(w[j]) for j in modes]) ** 2
    assert wick.vev_monomial(((), tuple(other)), ((), tuple(modes)), w) == \
        pytest.approx(scale * bra.inner(ket).real, rel=1e-12)


def test_vacuum_and_electron_pair():
    assert wick.brute_force_vev([]) == 1
    assert wick.brute_force_vev([("e", (1, 0, 0)), ("edag", (1, 0, 0))]) == 1
    assert wick.brute_force_vev([("e", (1, 0, 0)), ("edag", (0, 1, 0))]) == 0


def space3(w_e=0.8):
    return wick.LatticeSpace(np.array([[1, 0, 0], [0, 1, 0], [1, 1, 0]]), np.array([0.5, 1.5, 2.0]), w_e)


def test_pair_single_elementary():
    sp = space3()
    t = np.zeros((1, 3), complex)
    t[0, 1] = 1
    G = wick.Kernel(np.array([[0, 0, 0]]), {1: t})
    assert wick.pair_single(G, G, 1, sp) == pytest.approx(sp.w_e * sp.w[1])
    assert wick.pair_single(G, G, 1, sp, m_t=2) == 0


def test_pair_single_m2_random():
    rng = np.random.default_rng(3)
    sp = wick.random_space(rng)
    G, Gp = wick.random_kernel(rng, sp, {2}), wick.random_kernel(rng, sp, {2})
    vac = wick.FockVector.vacuum()
    ket, bra = wick.apply_B(vac, G, 2, sp), wick.apply_B(vac, Gp, 2, sp)
    assert abs(wick.pair_single(Gp, G, 2, sp) - bra.inner(ket)) <= 1e-12 * bra.norm() * ket.norm()


def test_pair_double_photon_free_two_terms():
    rng = np.random.default_rng(5)
    sp = space3()
    sites = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0]])
    F = rng.normal(size=(3, 1, 3, 1)) + 1j * rng.normal(size=(3, 1, 3, 1))
    Fp = rng.normal(size=(3, 1, 3, 1)) + 1j * rng.normal(size=(3, 1, 3, 1))
    K, Kp = wick.PairKernel(sites, sites, {(0, 0): F}), wick.PairKernel(sites, sites, {(0, 0): Fp})
    f, fp = F[:, 0, :, 0], Fp[:, 0, :, 0]
    expected = sp.w_e ** 2 * np.sum(np.conj(fp) * (f + f.T))
    assert wick.pair_double(Kp, K, 0, 0, 0, 0, sp) == pytest.approx(expected, rel=1e-13)


def test_pair_double_positive_on_diagonal():
    rng = np.random.default_rng(6)
    sp = wick.random_space(rng)
    F = wick.random_pair_kernel(rng, sp, 1, 0)
    F.tables[(1, 0)] = np.abs(F.tables[(1, 0)])
    val = wick.pair_double(F, F, 1, 0, 1, 0, sp)
    assert abs(val.imag) < 1e-15 and val.real > 0
    vac = wick.FockVector.vacuum()
    ket = wick.apply_B2(vac, F, 1, 0, sp)
    assert val.real == pytest.approx(ket.norm() ** 2, rel=1e-12)


def electron_only(h_sites, h_vals):
    tables = {0: np.asarray(h_vals, complex).reshape(-1, 1)}
    return wick.Kernel(np.asarray(h_sites), tables)


def test_pair_quad_photon_free_electron_wick():
    sp = space3()
    rng = np.random.default_rng(8)
    sites = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]])
    h = [rng.normal(size=3) + 1j * rng.normal(size=3) for _ in range(4)]
    G1, G2, G1p, G2p = (electron_only(sites, x) for x in h)

    def ip(a, b):
        return sp.w_e * np.vdot(a, b)

    expected = ip(h[2], h[0]) * ip(h[3], h[1]) + ip(h[2], h[1]) * ip(h[3], h[0])
    got = wick.pair_quad(G1p, G2p, G1, G2, 0, 0, 0, 0, sp)
    assert got == pytest.approx(expected, rel=1e-13)


def test_pair_quad_disjoint_supports_direct_only():
    sp = space3()
    rng = np.random.default_rng(9)
    left = np.array([[-3, 0, 0], [-4, 0, 0]])
    right = np.array([[3, 0, 0], [4, 0, 0]])

    def kernel(sites):
        return wick.Kernel(sites, {1: rng.normal(size=(2, 3)) + 0j})

    G1, G2 = kernel(left), kernel(right)
    parts = wick.pair_quad_classes(G1, G2, G1, G2, 1, 1, 1, 1, sp)
    assert parts["exchange"] == 0
    vac = wick.FockVector.vacuum()
    ket = wick.apply_B(wick.apply_B(vac, G2, 1, sp), G1, 1, sp)
    total = parts["direct"] + parts["exchange"] + parts["rest"]
    assert total == pytest.approx(ket.norm() ** 2, rel=1e-12)


def test_pair_quad_11_random_against_oracle():
    rng = np.random.default_rng(11)
    res = wick.run_case(rng, 3, (1, 1, 1, 1))
    f, o, scale = res["pair_quad"]
    assert abs(f - o) <= 1e-12 * scale


def test_check_sandwich_free_and_positive():
    rng = np.random.default_rng(12)
    sp = wick.random_space(rng)
    H1, H2 = wick.random_kernel(rng, sp, {1}), wick.random_kernel(rng, sp, {0})
    sub = np.array([[0, 0, 1]])
    zero = wick.pair_checkH(H2, H1, H1, H2, 1, 0, 0, 1, sp, np.zeros(1), sub, np.ones(1))
    assert zero == 0
    val = wick.pair_checkH(H2, H1, H1, H2, 1, 0, 0, 1, sp, np.array([0.4]), sub, np.array([0.9]))
    assert abs(val.imag) < 1e-14 and val.real >= 0


def test_check_sandwich_by_hand():
    # n = m = 0, one soft mode: B*(G_1) H B*(G_2) Omega written out directly
    sp = space3(1.0)
    sites = np.array([[0, 0, 0], [1, 0, 0]])
    g1, g2 = np.array([0.3, -0.5]), np.array([0.7, 0.2])
    G1, G2 = electron_only(sites, g1), electron_only(sites, g2)
    sub, wt, v = np.array([[1, 0, 0]]), np.array([0.6]), np.array([0.9])
    vac = wick.FockVector.vacuum()
    state = wick.apply_B(wick.apply_check(wick.apply_B(vac, G2, 0, sp), v, sub, wt, [sp.J]), G1, 0, sp)
    got = wick.pair_checkH(G2, G1, G1, G2, 0, 0, 0, 0, sp, v, sub, wt)
    # the soft photon moves the second electron from p to p - e_x (the lattice is unbounded)
    amp = {}
    for s1, a in zip(map(tuple, sites), g1):
        for s2, b in zip(map(tuple, sites), g2):
            moved = (s2[0] - 1, s2[1], s2[2])
            key = tuple(sorted([s1, moved]))
            norm = math.sqrt(2) if s1 == moved else 1.0
            amp[key] = amp.get(key, 0) + a * b * math.sqrt(wt[0]) * v[0] * norm
    hand = sum(abs(x) ** 2 for x in amp.values())
    assert got.real == pytest.approx(state.norm() ** 2, rel=1e-12)
    assert got.real == pytest.approx(hand, rel=1e-12)


def test_selftest_small():
    rep = wick.selftest(3, 60, seed=1)
    assert rep["cases"] == 60
    assert rep["max_rel_err"] <= 1e-12


@given(st.integers(0, 2 ** 31), st.sampled_from(wick._arities(3)))
def test_every_formula_matches_oracle(seed, combo):
    for name, (f, o, scale) in wick.run_case(np.random.default_rng(seed), 3, combo).items():
        assert abs(f - o) <= 1e-12 * max(scale, 1e-300), name


def test_symmetrize_idempotent():
    t = np.random.default_rng(0).normal(size=(2, 9))
    s = wick.symmetrize(t, 3, 2)
    assert np.allclose(s.reshape(2, 3, 3), s.reshape(2, 3, 3).transpose(0, 2, 1))
    assert np.allclose(wick.symmetrize(s, 3, 2), s)


def test_site_index_missing():
    idx = wick.SiteIndex(np.array([[0, 0, 0], [1, 2, 3]]))
    assert list(idx.find(np.array([[1, 2, 3], [5, 5, 5]]))) == [1, -1]


def test_oracle_photon_cap():
    v = wick.FockVector.vacuum(max_photons=1).bdag(0)
    with pytest.raises(wick.OracleRangeError):
        v.bdag(0)
