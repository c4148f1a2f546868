"""Truncated bosonic Fock space over a finite mode set.

States are stored as sorted tuples of occupied mode indices (a multiset), so
|2 e_0 + e_3> is (0, 0, 3).  The basis is graded by photon number and, inside a
grade, ordered as ``itertools.combinations_with_replacement`` produces it, which
is lexicographic in the occupation vector read from mode 0 (descending).
"""

import csv
import itertools
import math
from bisect import insort

import numpy as np
import scipy.sparse as sp

MAX_STATES = 5_000_000


def basis_dimension(n_modes, m_max):
    return math.comb(n_modes + m_max, m_max)


class FockBasis:
    def __init__(self, n_modes, m_max):
        if m_max < 0:
            raise ValueError("m_max must be >= 0")
        dim = basis_dimension(n_modes, m_max)
        if dim > MAX_STATES:
            raise MemoryError(f"Fock basis of {dim} states exceeds the {MAX_STATES} guard")
        self.n_modes = n_modes
        self.m_max = m_max
        self.states = [s for m in range(m_max + 1)
                       for s in itertools.combinations_with_replacement(range(n_modes), m)]
        self.index = {s: i for i, s in enumerate(self.states)}
        self.number = np.array([len(s) for s in self.states])
        # sector_start[m] is the first index with m photons
        self.sector_start = np.searchsorted(self.number, np.arange(m_max + 2))
        self._raise = None
        self._occ = None

    def __len__(self):
        return len(self.states)

    def dim_upto(self, m):
        return int(self.sector_start[min(m, self.m_max) + 1])

    def occupation(self):
        if self._occ is None:
            occ = np.zeros((len(self), self.n_modes), dtype=np.int16)
            for i, s in enumerate(self.states):
                for j in s:
                    occ[i, j] += 1
            self._occ = occ
        return self._occ

    def raise_table(self):
        """Index of s + e_j for every state with fewer than m_max photons, shape (D', J)."""
        if self._raise is None:
            n_low = self.dim_upto(self.m_max - 1) if self.m_max > 0 else 0
            tab = np.empty((n_low, self.n_modes), dtype=np.int64)
            for i in range(n_low):
                s = self.states[i]
                for j in range(self.n_modes):
                    t = list(s)
                    insort(t, j)
                    tab[i, j] = self.index[tuple(t)]
            self._raise = tab
        return self._raise


def build_basis(grid, m_max):
    return FockBasis(len(grid) if not isinstance(grid, int) else grid, m_max)


def _raise_amplitudes(basis):
    tab = basis.raise_table()
    occ = basis.occupation()[: tab.shape[0]]
    return tab, np.sqrt(occ + 1.0)


def creation(j, basis):
    tab, amp = _raise_amplitudes(basis)
    rows = tab[:, j]
    cols = np.arange(tab.shape[0])
    d = len(basis)
    return sp.csr_matrix((amp[:, j], (rows, cols)), shape=(d, d))


def annihilation(j, basis):
    return creation(j, basis).T.conj().tocsr()


def number_operator(basis):
    return sp.diags(basis.number.astype(float)).tocsr()


def photon_energy(basis, grid):
    return sp.diags(basis.occupation() @ grid.absk).tocsr()


def photon_momentum(basis, grid, axis):
    return sp.diags(basis.occupation() @ grid.k[:, axis]).tocsr()


def smeared_field(weights, basis):
    """sum_j c_j (b_j + b_j^dagger) for per-mode weights c_j."""
    c = np.asarray(weights)
    tab, amp = _raise_amplitudes(basis)
    d = len(basis)
    n_low = tab.shape[0]
    nz = c != 0
    rows = tab[:, nz].ravel()
    cols = np.repeat(np.arange(n_low), nz.sum())
    vals = (amp[:, nz] * c[nz][None, :]).ravel()
    up = sp.csr_matrix((vals, (rows, cols)), shape=(d, d))
    return (up + up.T).tocsr()


def export_coo_csv(op, path):
    coo = sp.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["row", "col", "re", "im"])
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            v = complex(v)
            wr.writerow([int(r), int(c), repr(v.real), repr(v.imag)])
