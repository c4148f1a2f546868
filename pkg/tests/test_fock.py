import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nelson import fock
from nelson.modes import ModeGrid


def count_by_enumeration(J, m_max):
    return sum(1 for occ in itertools.product(range(m_max + 1), repeat=J) if sum(occ) <= m_max)


@pytest.mark.parametrize("J,m_max,dim", [(2, 1, 3), (1, 3, 4), (3, 2, 10)])
def test_basis_sizes(J, m_max, dim):
    b = fock.FockBasis(J, m_max)
    assert len(b) == dim == count_by_enumeration(J, m_max)


def test_two_mode_states():
    assert fock.FockBasis(2, 1).states == [(), (0,), (1,)]


@given(st.integers(1, 5), st.integers(0, 4))
def test_dimension_matches_enumeration(J, m_max):
    assert fock.basis_dimension(J, m_max) == count_by_enumeration(J, m_max)


def test_creation_on_vacuum_and_sqrt2():
    b = fock.FockBasis(2, 2)
    ad = fock.creation(0, b)
    vac = np.zeros(len(b))
    vac[0] = 1
    out = ad @ vac
    assert out[b.index[(0,)]] == 1 and np.count_nonzero(out) == 1
    assert ad[b.index[(0, 0)], b.index[(0,)]] == pytest.approx(np.sqrt(2))


@given(st.integers(1, 4), st.integers(1, 3), st.data())
def test_ccr_below_cap(J, m_max, data):
    b = fock.FockBasis(J, m_max)
    j = data.draw(st.integers(0, J - 1))
    a, ad = fock.annihilation(j, b), fock.creation(j, b)
    comm = (a @ ad - ad @ a).toarray()
    low = b.dim_upto(m_max - 1)
    assert np.allclose(comm[:low, :low], np.eye(low), atol=1e-14)


def test_number_and_free_energy():
    grid = ModeGrid(np.array([[0.1, 0, 0], [0, 0.2, 0]]), np.ones(2), 0.0, 1.0)
    b = fock.FockBasis(2, 2)
    Hf = fock.photon_energy(b, grid).diagonal()
    assert Hf[b.index[(0,)]] == pytest.approx(0.1)
    assert Hf[b.index[(0, 1)]] == pytest.approx(0.3)
    assert fock.photon_momentum(b, grid, 0).diagonal()[0] == 0
    assert np.array_equal(fock.number_operator(b).diagonal(), b.number)


def test_smeared_field():
    b = fock.FockBasis(3, 2)
    assert fock.smeared_field(np.zeros(3), b).nnz == 0
    op = fock.smeared_field(np.array([0.0, 0.7, 0.0]), b)
    assert op[b.index[(1,)], 0] == pytest.approx(0.7)
    one = fock.smeared_field(np.array([0.3]), fock.FockBasis(1, 1)).toarray()
    assert np.allclose(one, [[0, 0.3], [0.3, 0]])
    assert np.allclose(np.linalg.eigvalsh(one), [-0.3, 0.3])


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.integers(1, 3))
def test_smeared_field_symmetric(c, m_max):
    op = fock.smeared_field(np.array(c), fock.FockBasis(len(c), m_max))
    assert abs(op - op.T).max() == 0 if op.nnz else True


def test_export_coo(tmp_path):
    op = fock.smeared_field(np.array([0.5]), fock.FockBasis(1, 2))
    fock.export_coo_csv(op, tmp_path / "op.csv")
    lines = (tmp_path / "op.csv").read_text().splitlines()
    assert lines[0] == "row,col,re,im"
    assert len(lines) == 1 + op.nnz


def test_basis_guard():
    with pytest.raises(MemoryError):
        fock.FockBasis(400, 4)
