"""Vacuum expectation values of products of dressed creation operators.

Everything lives on a cubic lattice: electron momenta are integer 3-vectors in
units of the spacing, photon modes carry integer lattice coordinates too, so
the shifted electron arguments p +- sum k that appear in the pairing formulas
are exact lattice points.  Integrals become weighted sums, the electron weight
being ``w_e`` and the photon weights those of the grid.

Kernel conventions
    B*_m(G)     = sum_p sum_k w_e prod w  G(p; k) eta*(p - k) a*(k)^m
    B*_{n,m}(F) = sum F(q; r | p; k) a*(r)^n a*(k)^m eta*(p - k) eta*(q - r)
with eta*(p) = eta_p^dagger / sqrt(w_e) and a*(k_j) = b_j^dagger / sqrt(w_j).
"""

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

MAX_ARITY = 8


# ---------------------------------------------------------------- patterns

@dataclass(frozen=True)
class ContractionPattern:
    """rho maps ket slot i to bra slot rho[i].

    Ket slots 0..n-1 carry r, n..n+m-1 carry k; bra slots 0..n_t-1 carry r~,
    n_t..n_t+m_t-1 carry k~.
    """
    rho: tuple
    n: int
    m: int
    n_t: int
    m_t: int

    def _block(self, ket_r, bra_r):
        return tuple(i for i, s in enumerate(self.rho)
                     if (i < self.n) == ket_r and (s < self.n_t) == bra_r)

    @property
    def r_hat(self):
        return self._block(True, True)

    @property
    def r_check(self):
        return self._block(True, False)

    @property
    def k_hat(self):
        return self._block(False, False)

    @property
    def k_check(self):
        return self._block(False, True)

    @property
    def is_direct(self):
        return not self.k_check and not self.r_check

    @property
    def is_exchange(self):
        return not self.k_hat and not self.r_hat


class PatternList(list):
    mismatch = False


def enumerate_patterns(m, n, m_t, n_t):
    out = PatternList()
    if m + n != m_t + n_t:
        out.mismatch = True
        return out
    if m + n > MAX_ARITY:
        raise ValueError(f"arity {m + n} exceeds the factorial guard {MAX_ARITY}")
    for rho in itertools.permutations(range(m + n)):
        out.append(ContractionPattern(rho, n, m, n_t, m_t))
    return out


# ---------------------------------------------------------------- permanents

def permanent(M):
    M = np.asarray(M)
    n = M.shape[0]
    if n == 0:
        return 1.0
    if n <= 5:
        return sum(np.prod(M[np.arange(n), list(p)]) for p in itertools.permutations(range(n)))
    return ryser(M)


def ryser(M):
    """Ryser's formula with Gray-code updates of the row sums."""
    n = M.shape[0]
    total = 0.0
    rowsum = np.zeros(n, dtype=M.dtype)
    prev = 0
    for g in range(1, 2 ** n):
        gray = g ^ (g >> 1)
        diff = gray ^ prev
        j = diff.bit_length() - 1
        if gray & diff:
            rowsum = rowsum + M[:, j]
        else:
            rowsum = rowsum - M[:, j]
        prev = gray
        sign = -1 if bin(gray).count("1") % 2 else 1
        total += sign * np.prod(rowsum)
    return (-1) ** n * total


def vev_monomial(tilde_modes, modes, weights):
    """<Omega, a(r~)^n~ a(k~)^m~ a*(r)^n a*(k)^m Omega> with delta -> delta_jj'/w_j."""
    rt, kt = tilde_modes
    r, k = modes
    ket = list(r) + list(k)
    bra = list(rt) + list(kt)
    if len(ket) != len(bra):
        return 0.0
    w = np.asarray(weights, float)
    M = np.array([[(1.0 / w[a]) if a == b else 0.0 for b in bra] for a in ket]).reshape(len(ket), len(bra))
    return float(permanent(M))


# ---------------------------------------------------------------- kernels

_OFF = 1 << 20
_BASE = 1 << 21


def _encode(x):
    x = np.asarray(x, np.int64) + _OFF
    return (x[..., 0] * _BASE + x[..., 1]) * _BASE + x[..., 2]


class SiteIndex:
    """Vectorised lookup of integer lattice sites; missing sites map to -1."""

    def __init__(self, sites):
        keys = _encode(sites)
        self.order = np.argsort(keys)
        self.keys = keys[self.order]

    def find(self, sites):
        q = _encode(sites)
        pos = np.searchsorted(self.keys, q)
        pos = np.clip(pos, 0, max(len(self.keys) - 1, 0))
        if len(self.keys) == 0:
            return np.full(q.shape, -1)
        hit = self.keys[pos] == q
        return np.where(hit, self.order[pos], -1)


@dataclass(frozen=True, eq=False)
class LatticeSpace:
    """Photon modes with integer coordinates plus the electron cell weight."""
    lattice: np.ndarray
    w: np.ndarray
    w_e: float

    @classmethod
    def from_grid(cls, grid, w_e=None):
        if grid.lattice is None:
            raise ValueError("grid has no lattice coordinates")
        return cls(grid.lattice, grid.w, w_e if w_e is not None else grid.spacing ** 3)

    @property
    def J(self):
        return len(self.w)


@dataclass(eq=False)
class Kernel:
    """G_m(p; k_1..k_m): one table of shape (S, J**m) per photon number m."""
    sites: np.ndarray
    tables: dict
    index: SiteIndex = field(init=False, repr=False)

    def __post_init__(self):
        self.sites = np.asarray(self.sites, np.int64).reshape(-1, 3)
        self.index = SiteIndex(self.sites)


@dataclass(eq=False)
class PairKernel:
    """F_{n,m}(q; r | p; k): tables keyed by (n, m) of shape (Sq, J**n, Sp, J**m)."""
    qsites: np.ndarray
    psites: np.ndarray
    tables: dict
    qindex: SiteIndex = field(init=False, repr=False)
    pindex: SiteIndex = field(init=False, repr=False)

    def __post_init__(self):
        self.qsites = np.asarray(self.qsites, np.int64).reshape(-1, 3)
        self.psites = np.asarray(self.psites, np.int64).reshape(-1, 3)
        self.qindex = SiteIndex(self.qsites)
        self.pindex = SiteIndex(self.psites)


def symmetrize(table, J, m):
    """Average a (S, J**m) table over photon-slot permutations."""
    if m <= 1:
        return table
    S = table.shape[0]
    t = table.reshape((S,) + (J,) * m)
    acc = np.zeros_like(t)
    perms = list(itertools.permutations(range(1, m + 1)))
    for p in perms:
        acc += np.transpose(t, (0,) + p)
    return (acc / len(perms)).reshape(S, -1)


def _tuples(J, n):
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(J), repeat=n)), dtype=np.int64).reshape(-1, n)


def _flat(cols, J):
    idx = np.zeros(cols.shape[0], dtype=np.int64)
    for c in range(cols.shape[1]):
        idx = idx * J + cols[:, c]
    return idx


def _gather(kernel, m, sites, flat):
    """conj G_m(site; modes) for arrays of sites and flat mode indices; 0 off support."""
    t = kernel.tables.get(m)
    if t is None:
        return np.zeros(len(flat), complex)
    i = kernel.index.find(sites)
    ok = i >= 0
    out = np.zeros(len(flat), dtype=complex)
    out[ok] = np.conj(t[i[ok], flat[ok]])
    return out


class _PatternGeometry:
    """Per-pattern index arrays over all ket photon tuples T = (r, k)."""

    def __init__(self, pat, space):
        J = space.J
        n, m = pat.n, pat.m
        V = _tuples(J, n + m)
        inv = np.argsort(pat.rho)
        lat = space.lattice
        self.ridx = _flat(V[:, :n], J)
        self.kidx = _flat(V[:, n:], J)
        self.weight = np.prod(space.w[V], axis=1) if n + m else np.ones(1)
        # bra slots 0..n_t-1 carry (r_hat, k_check), the rest (k_hat, r_check)
        self.xidx = _flat(V[:, inv[: pat.n_t]], J)
        self.yidx = _flat(V[:, inv[pat.n_t:]], J)
        zero = np.zeros((len(V), 3), np.int64)

        def total(slots):
            return lat[V[:, list(slots)]].sum(axis=1) if slots else zero

        self.shift_check = total(pat.k_check) - total(pat.r_check)
        self.shift_hat = total(pat.k_hat) - total(pat.r_hat)


def _half(ker, n, col_idx, target, tn, tflat, shift):
    """sum_q ker_n(q; col) * conj target_tn(q + shift; tflat), vectorised over tuples."""
    tab = ker.tables.get(n)
    acc = np.zeros(len(col_idx), dtype=complex)
    if tab is None:
        return acc
    for q in range(len(ker.sites)):
        a = tab[q, col_idx]
        if not np.any(a):
            continue
        acc += a * _gather(target, tn, ker.sites[q][None, :] + shift, tflat)
    return acc


def _quad_branches(G1p, G2p, G1, G2, pat, space, geo=None):
    """The two electron branches of one pattern: (direct-type, exchange-type)."""
    geo = geo or _PatternGeometry(pat, space)
    n, m, nt, mt = pat.n, pat.m, pat.n_t, pat.m_t
    w2 = space.w_e ** 2
    sc, sh = geo.shift_check, geo.shift_hat
    # G'_1 at q + sum k_check - sum r_check, G'_2 at p - (same)
    X = _half(G1, n, geo.ridx, G1p, nt, geo.xidx, sc)
    Y = _half(G2, m, geo.kidx, G2p, mt, geo.yidx, -sc)
    direct = w2 * np.sum(geo.weight * X * Y)
    # G'_1 at p - sum k_hat + sum r_hat, G'_2 at q + (same)
    X = _half(G1, n, geo.ridx, G2p, mt, geo.yidx, sh)
    Y = _half(G2, m, geo.kidx, G1p, nt, geo.xidx, -sh)
    exchange = w2 * np.sum(geo.weight * X * Y)
    return complex(direct), complex(exchange)


def pair_quad_classes(G1p, G2p, G1, G2, n, m, n_t, m_t, space):
    """<Omega, B_nt(G'_1) B_mt(G'_2) B*_n(G_1) B*_m(G_2) Omega> split into classes.

    direct: the direct electron branch of patterns with k_check, r_check empty;
    exchange: the exchange branch of patterns with k_hat, r_hat empty; rest:
    every other (pattern, branch) contribution.
    """
    out = {"direct": 0j, "exchange": 0j, "rest": 0j}
    pats = enumerate_patterns(m, n, m_t, n_t)
    for pat in pats:
        d, e = _quad_branches(G1p, G2p, G1, G2, pat, space)
        out["direct" if pat.is_direct else "rest"] += d
        out["exchange" if pat.is_exchange else "rest"] += e
    return out


def pair_quad(G1p, G2p, G1, G2, n, m, n_t, m_t, space):
    total = 0j
    for pat in enumerate_patterns(m, n, m_t, n_t):
        d, e = _quad_branches(G1p, G2p, G1, G2, pat, space)
        total += d + e
    return total


def pair_single(Gp, G, m, space, m_t=None):
    """<Omega, B_m(G') B*_m(G) Omega> = m! sum w_e prod w conj(G') G; zero on arity mismatch."""
    if m_t is not None and m_t != m:
        return 0j
    t, tp = G.tables.get(m), Gp.tables.get(m)
    if t is None or tp is None:
        return 0j
    i = Gp.index.find(G.sites)
    ok = i >= 0
    wt = np.prod(space.w[_tuples(space.J, m)], axis=1) if m else np.ones(1)
    s = np.sum(np.conj(tp[i[ok]]) * t[ok] * wt[None, :])
    return complex(math.factorial(m) * space.w_e * s)


def pair_double(Fp, F, n, m, n_t, m_t, space):
    """<B*_{nt,mt}(F') Omega, B*_{n,m}(F) Omega> by the two-branch pattern sum."""
    pats = enumerate_patterns(m, n, m_t, n_t)
    tab = F.tables.get((n, m))
    tabp = Fp.tables.get((n_t, m_t))
    if not pats or tab is None or tabp is None:
        return 0j
    total = 0j
    nz = np.argwhere(np.any(tab != 0, axis=(1, 3)))
    for pat in pats:
        geo = _PatternGeometry(pat, space)
        for iq, ip in nz:
            a = tab[iq, geo.ridx, ip, geo.kidx] * geo.weight
            if not np.any(a):
                continue
            q, p = F.qsites[iq], F.psites[ip]
            for s1, s2 in ((p[None, :] - geo.shift_hat, q[None, :] + geo.shift_hat),
                           (q[None, :] + geo.shift_check, p[None, :] - geo.shift_check)):
                jq = Fp.qindex.find(s1)
                jp = Fp.pindex.find(s2)
                ok = (jq >= 0) & (jp >= 0)
                vals = np.zeros(len(a), complex)
                vals[ok] = np.conj(tabp[jq[ok], geo.xidx[ok], jp[ok], geo.yidx[ok]])
                total += np.sum(a * vals)
    return complex(space.w_e ** 2 * total)


def pair_checkH(G2p, G1p, G1, G2, n, m, n_t, m_t, space, vcheck, sub_lattice, sub_w):
    """<B*_mt(G'_1) H B*_nt(G'_2) Omega, B*_n(G_1) H B*_m(G_2) Omega>, H the check interaction.

    vcheck, sub_lattice, sub_w describe the modes strictly below the cutoff.
    The emitted soft photon contracts with its partner, so the sum splits into
    ||v||^2 times the electron-direct branch, plus a soft-momentum-shifted
    electron-exchange branch weighted by v(p~)^2.
    """
    if len(sub_w) == 0:
        raise ValueError("check pairing needs modes below the infrared cutoff")
    vcheck = np.asarray(vcheck, float)
    vnorm = float(np.sum(sub_w * vcheck ** 2))
    w2 = space.w_e ** 2
    total = 0j
    # bra r~ slots belong to G'_1 (m_t photons), k~ slots to G'_2 (n_t photons)
    for pat in enumerate_patterns(m, n, n_t, m_t):
        geo = _PatternGeometry(pat, space)
        sc, sh = geo.shift_check, geo.shift_hat
        X = _half(G1, n, geo.ridx, G1p, m_t, geo.xidx, sc)
        Y = _half(G2, m, geo.kidx, G2p, n_t, geo.yidx, -sc)
        total += vnorm * w2 * np.sum(geo.weight * X * Y)
        for lt, wt, vt in zip(sub_lattice, sub_w, vcheck):
            if vt == 0:
                continue
            X = _half(G1, n, geo.ridx, G2p, n_t, geo.yidx, sh + lt)
            Y = _half(G2, m, geo.kidx, G1p, m_t, geo.xidx, -sh - lt)
            total += wt * vt ** 2 * w2 * np.sum(geo.weight * X * Y)
    return complex(total)


# ---------------------------------------------------------------- brute force

class OracleRangeError(RuntimeError):
    pass


class FockVector:
    """Sparse vector in (bosonic electrons) x (photons): {(sites, modes): amplitude}.

    sites is a sorted tuple of electron lattice points, modes a sorted tuple of
    photon mode indices.  Operators use Kronecker normalisation.
    """

    def __init__(self, data=None, max_photons=8):
        self.data = dict(data or {})
        self.max_photons = max_photons

    @classmethod
    def vacuum(cls, max_photons=8):
        return cls({((), ()): 1.0 + 0j}, max_photons)

    def _new(self, data):
        return FockVector(data, self.max_photons)

    def inner(self, other):
        """<self, other>"""
        return complex(sum(np.conj(v) * other.data.get(k, 0) for k, v in self.data.items()))

    def norm(self):
        return math.sqrt(sum(abs(v) ** 2 for v in self.data.values()))

    def bdag(self, j):
        out = defaultdict(complex)
        for (e, ph), a in self.data.items():
            if len(ph) + 1 > self.max_photons:
                raise OracleRangeError("photon number exceeds the oracle cap")
            new = tuple(sorted(ph + (j,)))
            out[(e, new)] += a * math.sqrt(new.count(j))
        return self._new(out)

    def b(self, j):
        out = defaultdict(complex)
        for (e, ph), a in self.data.items():
            c = ph.count(j)
            if c:
                lst = list(ph)
                lst.remove(j)
                out[(e, tuple(lst))] += a * math.sqrt(c)
        return self._new(out)

    def edag(self, site):
        site = tuple(int(x) for x in site)
        out = defaultdict(complex)
        for (e, ph), a in self.data.items():
            new = tuple(sorted(e + (site,)))
            out[(new, ph)] += a * math.sqrt(new.count(site))
        return self._new(out)

    def e(self, site):
        site = tuple(int(x) for x in site)
        out = defaultdict(complex)
        for (e, ph), a in self.data.items():
            c = e.count(site)
            if c:
                lst = list(e)
                lst.remove(site)
                out[(tuple(lst), ph)] += a * math.sqrt(c)
        return self._new(out)

    def electron_sites(self):
        return sorted({s for (e, _) in self.data for s in e})


def _accumulate(out, vec, c):
    for k, v in vec.data.items():
        out[k] += c * v


def brute_force_vev(word, max_photons=8):
    """<Omega, word Omega> for a word [(op, arg), ...] applied right to left.

    ops: 'b', 'bdag' (mode index), 'e', 'edag' (electron lattice site).
    """
    v = FockVector.vacuum(max_photons)
    for op, arg in reversed(list(word)):
        v = getattr(v, op)(arg)
    return complex(v.data.get(((), ()), 0))


def apply_B(vec, ker, m, space):
    """B*_m(G) vec, literally: sum_p sum_k sqrt(w_e) prod sqrt(w) G(p; k) eta_{p-k}^+ prod b_k^+."""
    t = ker.tables.get(m)
    out = defaultdict(complex)
    if t is not None:
        for s, site in enumerate(ker.sites):
            for c, modes in enumerate(_tuples(space.J, m)):
                val = t[s, c]
                if val == 0:
                    continue
                x = vec
                for j in modes:
                    x = x.bdag(j)
                shifted = site - space.lattice[modes].sum(axis=0)
                amp = val * math.sqrt(space.w_e) * np.prod(np.sqrt(space.w[modes]))
                _accumulate(out, x.edag(shifted), amp)
    return vec._new(out)


def apply_B2(vec, F, n, m, space):
    """B*_{n,m}(F) vec with both electrons created together."""
    t = F.tables.get((n, m))
    out = defaultdict(complex)
    if t is not None:
        rt, kt = _tuples(space.J, n), _tuples(space.J, m)
        for iq, ir, ip, ik in zip(*np.nonzero(t)):
            r, k = rt[ir], kt[ik]
            x = vec
            for j in list(r) + list(k):
                x = x.bdag(j)
            qs = F.qsites[iq] - space.lattice[r].sum(axis=0)
            ps = F.psites[ip] - space.lattice[k].sum(axis=0)
            amp = t[iq, ir, ip, ik] * space.w_e * np.prod(np.sqrt(space.w[list(r) + list(k)]))
            _accumulate(out, x.edag(ps).edag(qs), amp)
    return vec._new(out)


def apply_check(vec, vcheck, sub_lattice, sub_w, sub_modes):
    """sum_{p~, p} sqrt(w~) v(p~) eta_{p-p~}^+ b_{p~}^+ eta_p vec.

    sub_modes are the register indices of the sub-cutoff photons.
    """
    out = defaultdict(complex)
    for lt, wt, vt, j in zip(sub_lattice, sub_w, vcheck, sub_modes):
        if vt == 0:
            continue
        for site in vec.electron_sites():
            x = vec.e(site)
            _accumulate(out, x.bdag(j).edag(np.asarray(site) - lt), math.sqrt(wt) * vt)
    return vec._new(out)


# ---------------------------------------------------------------- self test

_TEST_LATTICE = np.array([[1, 0, 0], [0, 1, 0], [1, 1, 0]])
_TEST_SITES = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
_TEST_SUB = np.array([[-1, 0, 0], [1, -1, 0]])


def random_space(rng, n_modes=3):
    w = rng.uniform(0.5, 2.0, n_modes)
    return LatticeSpace(_TEST_LATTICE[:n_modes], w, float(rng.uniform(0.5, 2.0)))


def random_kernel(rng, space, arities, n_sites=3, density=0.6):
    sites = _TEST_SITES[rng.choice(len(_TEST_SITES), n_sites, replace=False)]
    tables = {}
    for m in arities:
        t = rng.normal(size=(n_sites, space.J ** m)) + 1j * rng.normal(size=(n_sites, space.J ** m))
        t *= rng.random(t.shape) < density
        t /= max(np.linalg.norm(t), 1e-300)
        tables[m] = symmetrize(t, space.J, m)
    return Kernel(sites, tables)


def random_pair_kernel(rng, space, n, m, n_sites=2, density=0.5):
    J = space.J
    qs = _TEST_SITES[rng.choice(len(_TEST_SITES), n_sites, replace=False)]
    ps = _TEST_SITES[rng.choice(len(_TEST_SITES), n_sites, replace=False)]
    shape = (n_sites,) + (J,) * n + (n_sites,) + (J,) * m
    t = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * (rng.random(shape) < density)
    acc = np.zeros_like(t)
    perms = [(a, b) for a in itertools.permutations(range(n)) for b in itertools.permutations(range(m))]
    for a, b in perms:
        axes = (0,) + tuple(1 + x for x in a) + (n + 1,) + tuple(n + 2 + x for x in b)
        acc += np.transpose(t, axes)
    acc = (acc / len(perms)).reshape(n_sites, J ** n, n_sites, J ** m)
    acc /= max(np.linalg.norm(acc), 1e-300)
    return PairKernel(qs, ps, {(n, m): acc})


def _arities(max_arity):
    return [(n, m, nt, mt) for tot in range(max_arity + 1)
            for n in range(tot + 1) for nt in range(tot + 1)
            for m, mt in [(tot - n, tot - nt)]]


def run_case(rng, max_arity=3, combo=None):
    """One random case: every pairing formula against the literal oracle.

    combo = (n, m, nt, mt) fixes the arities, otherwise they are drawn.
    Returns a dict name -> (formula, oracle, scale) with scale = |bra| |ket|.
    """
    space = random_space(rng)
    combos = _arities(max_arity)
    n, m, nt, mt = combo if combo is not None else combos[rng.integers(len(combos))]
    cap = 2 * max_arity + 2
    out = {}
    vac = FockVector.vacuum(cap)

    G1, G2 = random_kernel(rng, space, {n, mt}), random_kernel(rng, space, {m, nt})
    G1p, G2p = random_kernel(rng, space, {nt, m}), random_kernel(rng, space, {mt, n})
    ket = apply_B(apply_B(vac, G2, m, space), G1, n, space)
    bra = apply_B(apply_B(vac, G2p, mt, space), G1p, nt, space)
    out["pair_quad"] = (pair_quad(G1p, G2p, G1, G2, n, m, nt, mt, space), bra.inner(ket),
                        bra.norm() * ket.norm())

    kk = rng.integers(0, max_arity + 1)
    Gs, Gsp = random_kernel(rng, space, {kk}), random_kernel(rng, space, {kk})
    ket = apply_B(vac, Gs, kk, space)
    bra = apply_B(vac, Gsp, kk, space)
    out["pair_single"] = (pair_single(Gsp, Gs, kk, space), bra.inner(ket), bra.norm() * ket.norm())

    F = random_pair_kernel(rng, space, n, m)
    Fp = random_pair_kernel(rng, space, nt, mt)
    ket = apply_B2(vac, F, n, m, space)
    bra = apply_B2(vac, Fp, nt, mt, space)
    out["pair_double"] = (pair_double(Fp, F, n, m, nt, mt, space), bra.inner(ket),
                          bra.norm() * ket.norm())

    # check sandwich: bra = B*_mt(G'_1) H B*_nt(G'_2) Omega, ket = B*_n(G_1) H B*_m(G_2) Omega
    n_sub = int(rng.integers(1, len(_TEST_SUB) + 1))
    sub_lat, sub_w = _TEST_SUB[:n_sub], rng.uniform(0.5, 2.0, n_sub)
    vcheck = rng.uniform(0.2, 1.0, n_sub)
    sub_modes = space.J + np.arange(n_sub)
    H1, H2 = random_kernel(rng, space, {n, mt}), random_kernel(rng, space, {m, nt})
    ket = apply_B(apply_check(apply_B(vac, H2, m, space), vcheck, sub_lat, sub_w, sub_modes), H1, n, space)
    bra = apply_B(apply_check(apply_B(vac, H2, nt, space), vcheck, sub_lat, sub_w, sub_modes), H1, mt, space)
    out["pair_checkH"] = (pair_checkH(H2, H1, H1, H2, n, m, nt, mt, space, vcheck, sub_lat, sub_w),
                          bra.inner(ket), bra.norm() * ket.norm())
    return out


def selftest(max_arity=3, cases=100, seed=0):
    """Random-kernel comparison of every pairing formula against the literal oracle.

    Cases cycle through the arity combinations so each one is hit
    cases // len(combinations) times at least.
    """
    rng = np.random.default_rng(seed)
    combos = _arities(max_arity)
    max_abs = max_rel = 0.0
    for c in range(cases):
        for name, (f, o, scale) in run_case(rng, max_arity, combos[c % len(combos)]).items():
            err = abs(f - o)
            max_abs = max(max_abs, err)
            max_rel = max(max_rel, err / scale if scale > 0 else err)
    return {"cases": cases, "max_abs_err": max_abs, "max_rel_err": max_rel}
