"""Wave packets, dressed electrons and two-electron overlaps on a momentum lattice.

Electron momenta are integer 3-vectors in units of the lattice spacing a, and
every photon mode sits on the same lattice, so all shifted electron arguments
in the pairing formulas land exactly on lattice points.  The quadrature weight
of an electron site is a^3.

The photon register of a lab is every lattice point with 0 < |k| < kappa.  The
fiber problem at cutoff sigma is solved on the modes with |k| >= sigma and its
components are embedded into register-indexed tables, so kernels taken at
different cutoffs can be paired directly.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from . import fock, wick
from .oscillatory import f_table
from .fiber import FiberModel, fd_gradient, loglog_slope
from .modes import ModeGrid, build_lattice_grid, form_factor, form_factor_check


class DomainError(ValueError):
    pass


class ScheduleError(ValueError):
    pass


class DependencyError(RuntimeError):
    pass


# ------------------------------------------------------------------ packets

def bump(p, center, radius):
    d2 = np.sum((np.atleast_2d(p) - center) ** 2, axis=1)
    r2 = radius ** 2
    out = np.zeros(len(d2))
    inside = d2 < r2
    out[inside] = np.exp(-r2 / (r2 - d2[inside]))
    return out


def bump_gradient(p, center, radius):
    p = np.atleast_2d(p)
    d = p - center
    d2 = np.sum(d ** 2, axis=1)
    r2 = radius ** 2
    out = np.zeros_like(p, dtype=float)
    inside = d2 < r2
    g = np.exp(-r2 / (r2 - d2[inside])) * (-2 * r2 / (r2 - d2[inside]) ** 2)
    out[inside] = g[:, None] * d[inside]
    return out


@dataclass(eq=False)
class WavePacket:
    """h(p) = A exp(-r^2 / (r^2 - |p - c|^2)) sampled on the lattice, normalised in quadrature."""
    center: np.ndarray
    radius: float
    spacing: float
    sites: np.ndarray
    values: np.ndarray
    amplitude: float

    @property
    def momenta(self):
        return self.spacing * self.sites.astype(float)

    @property
    def w_e(self):
        return self.spacing ** 3

    @property
    def l1(self):
        return float(self.w_e * np.sum(np.abs(self.values)))

    @property
    def l2(self):
        return float(math.sqrt(self.w_e * np.sum(np.abs(self.values) ** 2)))

    @property
    def linf(self):
        return float(np.max(np.abs(self.values)))

    @property
    def grad_max(self):
        g = self.amplitude * bump_gradient(self.momenta, self.center, self.radius)
        return float(np.max(np.linalg.norm(g, axis=1)))

    def __call__(self, p):
        return self.amplitude * bump(p, self.center, self.radius)


def make_bump(center, radius, spacing, p_max=1 / 6, axes=3):
    """Sample the bump on the lattice; axes=1 keeps only sites on the x axis (centre on it too)."""
    center = np.asarray(center, float)
    if radius <= 0 or np.linalg.norm(center) + radius > p_max + 1e-12:
        raise DomainError(f"packet B({center.tolist()}, {radius}) is not inside |p| < {p_max}")
    n = int(math.ceil(radius / spacing)) + 1
    base = np.round(center / spacing).astype(np.int64)
    rng = np.arange(-n, n + 1)
    if axes == 1:
        if np.any(center[1:] != 0):
            raise DomainError("collinear packets need a centre on the x axis")
        base[1:] = 0
        offs = np.stack([rng, 0 * rng, 0 * rng], axis=1)
    else:
        offs = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    sites = base + offs
    vals = bump(spacing * sites, center, radius)
    keep = vals > 0
    sites, vals = sites[keep], vals[keep]
    if len(sites) == 0:
        raise DomainError("packet support contains no lattice site; refine the spacing")
    order = np.lexsort((sites[:, 2], sites[:, 1], sites[:, 0]))
    sites, vals = sites[order], vals[order]
    A = 1.0 / math.sqrt(spacing ** 3 * np.sum(vals ** 2))
    return WavePacket(center, float(radius), float(spacing), sites, A * vals, A)


def supports_disjoint(h1, h2):
    return float(np.linalg.norm(h1.center - h2.center)) >= h1.radius + h2.radius


@dataclass
class VelocitySupport:
    lo: np.ndarray
    hi: np.ndarray
    points: np.ndarray

    def disjoint(self, other):
        return bool(np.any(self.hi < other.lo) or np.any(other.hi < self.lo))

    def separation(self, other):
        gap = np.maximum(other.lo - self.hi, self.lo - other.hi)
        return float(np.max(gap))


def velocity_support(h, energy, step=1e-3):
    """Bounding box of FD gradients of ``energy`` over the packet's lattice support."""
    pts = np.array([fd_gradient(energy, p, step) for p in h.momenta])
    return VelocitySupport(pts.min(axis=0), pts.max(axis=0), pts)


# ------------------------------------------------------------------ lab

@dataclass
class FiberPoint:
    site: tuple
    sigma: float
    energy: float
    residual: float
    leak: float
    tables: dict
    occupations: list
    amps: np.ndarray


def _embed(table, act, J, m):
    if m == 0:
        return np.asarray(table).reshape(1)
    out = np.zeros((J,) * m, dtype=complex)
    out[np.ix_(*([act] * m))] = table
    return out.reshape(-1)


class ScatteringLab:
    """Ground states on a lattice register plus everything built from them.

    sigma_ref is the smallest cutoff in play; E_{p, sigma_ref} is the proxy
    for the physical dispersion that drives the packet phases.
    """

    def __init__(self, params, spacing, sigma_ref, m_max=1, axes=3, tol=1e-10, grid=None):
        if not 0 < sigma_ref < params.kappa:
            raise ValueError("need 0 < sigma_ref < kappa")
        if grid is not None and (grid.lattice is None or grid.spacing != spacing):
            raise ValueError("a custom register must be a lattice grid with the same spacing")
        self.params = params
        self.spacing = float(spacing)
        self.sigma_ref = float(sigma_ref)
        self.m_max = int(m_max)
        self.axes = axes
        self.tol = tol
        self.grid = grid if grid is not None else build_lattice_grid(0.0, params.kappa, spacing, axes)
        if len(self.grid) == 0:
            raise ValueError("no lattice modes below kappa; refine the spacing")
        self.space = wick.LatticeSpace.from_grid(self.grid)
        self.v = form_factor(self.grid.k, params)
        self.resolution = float(self.grid.absk.min())
        self._models = {}
        self._points = {}
        self.solves = 0

    @property
    def J(self):
        return len(self.grid)

    def active(self, sigma):
        return np.nonzero(self.grid.absk >= sigma)[0]

    def model(self, sigma):
        if sigma not in self._models:
            act = self.active(sigma)
            g = self.grid
            sub = ModeGrid(g.k[act], g.w[act], sigma, g.kappa, lattice=g.lattice[act], spacing=g.spacing)
            self._models[sigma] = FiberModel(sub, self.params, self.m_max, sigma)
        return self._models[sigma]

    def point(self, site, sigma):
        key = (tuple(int(x) for x in site), float(sigma))
        if key not in self._points:
            self._points[key] = self._solve(*key)
        return self._points[key]

    def has_point(self, site, sigma):
        return (tuple(int(x) for x in site), float(sigma)) in self._points

    def add_point(self, pt):
        self._points[(pt.site, pt.sigma)] = pt

    def points(self):
        return list(self._points.values())

    def _solve(self, site, sigma):
        model = self.model(sigma)
        P = self.spacing * np.asarray(site, float)
        gs = model.ground_state(P, tol=self.tol)
        self.solves += 1
        act = self.active(sigma)
        comp = gs.components
        tables = {m: _embed(comp.table(m), act, self.J, m) for m in range(self.m_max + 1)}
        basis = model.basis
        occ = basis.occupation()
        fact = np.array([math.sqrt(math.prod(math.factorial(int(c)) for c in row if c > 1))
                         for row in occ])
        occupations = [tuple(int(act[j]) for j in s) for s in basis.states]
        top = gs.vector.copy()
        top[: basis.dim_upto(self.m_max - 1)] = 0
        leak = math.sqrt(float(np.sum(model.coupling ** 2)) * float(np.vdot(top, top).real)
                         + float(np.linalg.norm(model.V @ top) ** 2))
        return FiberPoint(site, sigma, float(gs.energy), float(gs.residual), leak, tables,
                          occupations, gs.vector / fact)

    def energy(self, site, sigma):
        return self.point(site, sigma).energy

    def phase_energy(self, site, sigma, energy_ref="min"):
        return self.energy(site, self.sigma_ref if energy_ref == "min" else sigma)

    def require(self, sites, sigma):
        missing = [s for s in sites if not self.has_point(s, sigma)]
        if missing:
            raise DependencyError(f"{len(missing)} ground states missing at sigma={sigma}")

    # ---------------------------------------------------------- kernels

    def kernel(self, h, sigma, t=0.0, energy_ref="min", weight=None):
        """G_m(q; k) = e^{-i E_q t} weight(q) h(q) f^m_{q, sigma}(k), m <= m_max."""
        tables = {m: np.zeros((len(h.sites), self.J ** m), complex) for m in range(self.m_max + 1)}
        for s, site in enumerate(h.sites):
            pt = self.point(site, sigma)
            c = h.values[s] * np.exp(-1j * self.phase_energy(site, sigma, energy_ref) * t)
            if weight is not None:
                c *= weight(site)
            for m in tables:
                tables[m][s] = c * pt.tables[m]
        return wick.Kernel(h.sites, tables)

    def psi(self, h, sigma):
        return SingleElectronState(h, sigma, self.kernel(h, sigma), self)

    def build_kernels(self, h1, h2, t, sigma, energy_ref="min"):
        return TwoElectronKernelSet(t, sigma, self.kernel(h1, sigma, t, energy_ref),
                                    self.kernel(h2, sigma, t, energy_ref), self.m_max, self.space)

    def hsigma_kernel(self, h, sigma, t, energy_ref="min"):
        """Kernel of h^sigma(q) = (E_{q, sigma} - E_q) h(q)."""
        def wt(site):
            return self.energy(site, sigma) - self.phase_energy(site, sigma, energy_ref)
        return self.kernel(h, sigma, t, energy_ref, weight=wt)

    def sub_modes(self, sigma):
        sub = np.nonzero(self.grid.absk < sigma)[0]
        return sub, form_factor_check(self.grid.k[sub], sigma, self.params)


@dataclass(eq=False)
class SingleElectronState:
    h: WavePacket
    sigma: float
    kernel: wick.Kernel
    lab: ScatteringLab

    def inner(self, other):
        """<other, self> = sum_m pair_single / m!"""
        return sum(wick.pair_single(other.kernel, self.kernel, m, self.lab.space) / math.factorial(m)
                   for m in range(self.lab.m_max + 1))

    @property
    def norm(self):
        return math.sqrt(self.inner(self).real)


@dataclass(eq=False)
class TwoElectronKernelSet:
    t: float
    sigma: float
    G1: wick.Kernel
    G2: wick.Kernel
    m_max: int
    space: wick.LatticeSpace


def _arities(m_max):
    return [(n, m, nt, mt) for n in range(m_max + 1) for m in range(m_max + 1)
            for nt in range(m_max + 1) for mt in range(m_max + 1) if n + m == nt + mt]


def _single(Gp, G, m_max, space):
    return sum(wick.pair_single(Gp, G, m, space) / math.factorial(m) for m in range(m_max + 1))


def overlap(tkp, tk, check=True):
    """<Psi', Psi> for two kernel sets, split into direct, exchange and rest.

    Sums every photon arity; with check=True also verifies the partition
    against an independent pattern sum and the direct / exchange classes
    against products of single-electron overlaps.
    """
    if tkp.space is not tk.space and (tkp.space.J != tk.space.J
                                      or not np.array_equal(tkp.space.lattice, tk.space.lattice)):
        raise ValueError("kernel sets live on different grids")
    space = tk.space
    m_max = min(tk.m_max, tkp.m_max)
    out = {"direct": 0j, "exchange": 0j, "rest": 0j}
    total = 0j
    for n, m, nt, mt in _arities(m_max):
        c = 1.0 / math.sqrt(math.factorial(n) * math.factorial(m) * math.factorial(nt) * math.factorial(mt))
        cls = wick.pair_quad_classes(tkp.G1, tkp.G2, tk.G1, tk.G2, n, m, nt, mt, space)
        for key in out:
            out[key] += c * cls[key]
        if check:
            total += c * wick.pair_quad(tkp.G1, tkp.G2, tk.G1, tk.G2, n, m, nt, mt, space)
    out["total"] = out["direct"] + out["exchange"] + out["rest"]
    if check:
        out["partition_err"] = abs(total - out["total"])
        direct = _single(tkp.G1, tk.G1, m_max, space) * _single(tkp.G2, tk.G2, m_max, space)
        exch = _single(tkp.G1, tk.G2, m_max, space) * _single(tkp.G2, tk.G1, m_max, space)
        out["direct_err"] = abs(direct - out["direct"])
        out["exchange_err"] = abs(exch - out["exchange"])
    return out


# ------------------------------------------------------------------ Cook terms

def _c_term(FA, FB, m_max, space):
    total = 0j
    for n in range(m_max):
        for m in range(m_max + 1):
            for nt in range(m_max):
                mt = n + m - nt
                if not 0 <= mt <= m_max:
                    continue
                c = 1.0 / math.sqrt(math.factorial(m) * math.factorial(n + 1)
                                    * math.factorial(mt) * math.factorial(nt + 1))
                total += c * wick.pair_double(FB, FA, n, m, nt, mt, space)
    return total


def cook_terms(lab, h1, h2, t, sigma, energy_ref="min"):
    """Norms of the three pieces of d/dt Psi_{t, sigma} through the pairing formulas.

    norm_dcomm = ||[[H_I^a, eta1], eta2] Omega||, norm_check = ||eta1 H^c eta2 Omega||
    (check interaction), norm_hsigma = ||eta1 eta(h2^sigma) Omega||.
    """
    space, M = lab.space, lab.m_max
    G1 = lab.kernel(h1, sigma, t, energy_ref)
    G2 = lab.kernel(h2, sigma, t, energy_ref)
    F12, F21 = f_table(lab, G1, G2), f_table(lab, G2, G1)
    dc = (_c_term(F12, F12, M, space) + _c_term(F21, F21, M, space)
          + 2 * _c_term(F12, F21, M, space).real)
    sub, vcheck = lab.sub_modes(sigma)
    chk = 0j
    if len(sub) and np.any(vcheck):
        for n, m, nt, mt in _arities(M):
            c = 1.0 / math.sqrt(math.factorial(n) * math.factorial(m) * math.factorial(nt) * math.factorial(mt))
            chk += c * wick.pair_checkH(G2, G1, G1, G2, n, m, nt, mt, space, vcheck,
                                        space.lattice[sub], space.w[sub])
    Hs = lab.hsigma_kernel(h2, sigma, t, energy_ref)
    tk = TwoElectronKernelSet(t, sigma, G1, Hs, M, space)
    hs = overlap(tk, tk, check=False)["total"]
    return {"norm_dcomm": math.sqrt(max(dc.real, 0.0)), "norm_check": math.sqrt(max(chk.real, 0.0)),
            "norm_hsigma": math.sqrt(max(hs.real, 0.0)),
            "imag_residual": max(abs(dc.imag), abs(chk.imag), abs(hs.imag))}


# ------------------------------------------------------------------ literal two-electron space

class TwoElectronDynamics:
    """Literal states in (bosonic electrons on the lattice) x (photon register).

    Vectors are dicts {(electron sites, photon modes): amplitude}.  The full
    Hamiltonian is sum_e p_e^2 / 2 + H_f + H_I with the uncut form factor;
    photon numbers above ``cap`` are dropped.
    """

    def __init__(self, lab, cap):
        self.lab = lab
        self.cap = cap
        a = lab.spacing
        self.a = a
        self.lat = [tuple(int(x) for x in row) for row in lab.space.lattice]
        self.absk = lab.grid.absk
        self.c = np.sqrt(lab.space.w) * lab.v
        self.w_e = lab.space.w_e
        self.dropped = 0.0

    # -- elementary builders

    def _add(self, out, e, ph, amp):
        if len(ph) > self.cap:
            self.dropped = max(self.dropped, abs(amp))
            return
        out[(e, ph)] += amp

    def dressed(self, vec, h, sigma, t, energy_ref="min", weight=None):
        """eta*(h_t) vec with eta* the dressed creation operator at cutoff sigma."""
        lab = self.lab
        out = defaultdict(complex)
        for s, site in enumerate(h.sites):
            pt = lab.point(site, sigma)
            coef = math.sqrt(self.w_e) * h.values[s] * np.exp(-1j * lab.phase_energy(site, sigma, energy_ref) * t)
            if weight is not None:
                coef *= weight(site)
            for modes, amp in zip(pt.occupations, pt.amps):
                if amp == 0:
                    continue
                shift = np.sum([self.lat[j] for j in modes], axis=0) if modes else np.zeros(3, int)
                esite = tuple(int(x) for x in np.asarray(site) - shift)
                for (e, ph), a in vec.items():
                    new_ph = tuple(sorted(ph + modes))
                    f = 1.0
                    for j in set(modes):
                        f *= math.sqrt(math.factorial(new_ph.count(j)) / math.factorial(ph.count(j)))
                    new_e = tuple(sorted(e + (esite,)))
                    f *= math.sqrt(new_e.count(esite))
                    self._add(out, new_e, new_ph, coef * amp * f * a)
        return out

    def _move(self, e, old, new):
        lst = list(e)
        c = lst.count(old)
        lst.remove(old)
        lst.append(new)
        ne = tuple(sorted(lst))
        return ne, math.sqrt(c * ne.count(new))

    def interaction(self, vec, part="both", coupling=None, modes=None):
        """H_I pieces: 'create' = sum c_j eta*_{p-k} b*_j eta_p, 'annihilate' its adjoint."""
        c = self.c if coupling is None else coupling
        modes = np.nonzero(c)[0] if modes is None else modes
        out = defaultdict(complex)
        for (e, ph), a in vec.items():
            for s in set(e):
                for j in modes:
                    lj = self.lat[j]
                    if part in ("both", "create"):
                        new = (s[0] - lj[0], s[1] - lj[1], s[2] - lj[2])
                        ne, f = self._move(e, s, new)
                        nph = tuple(sorted(ph + (j,)))
                        self._add(out, ne, nph, a * c[j] * f * math.sqrt(nph.count(j)))
                    if part in ("both", "annihilate"):
                        cnt = ph.count(j)
                        if cnt:
                            new = (s[0] + lj[0], s[1] + lj[1], s[2] + lj[2])
                            ne, f = self._move(e, s, new)
                            lst = list(ph)
                            lst.remove(j)
                            out[(ne, tuple(lst))] += a * c[j] * f * math.sqrt(cnt)
        return out

    def free(self, vec):
        out = defaultdict(complex)
        a2 = 0.5 * self.a ** 2
        for (e, ph), amp in vec.items():
            en = sum(a2 * (s[0] ** 2 + s[1] ** 2 + s[2] ** 2) for s in e) + sum(self.absk[j] for j in ph)
            if en:
                out[(e, ph)] += en * amp
        return out

    def hamiltonian(self, vec):
        return add(self.free(vec), self.interaction(vec))

    def check(self, vec, sigma):
        """The creation part of the interaction restricted to modes below sigma."""
        sub, vcheck = self.lab.sub_modes(sigma)
        c = np.zeros(self.lab.J)
        c[sub] = np.sqrt(self.lab.space.w[sub]) * vcheck
        return self.interaction(vec, "create", coupling=c)

    def propagate(self, vec, s, tol=1e-17):
        """e^{i H s} vec by its Taylor series, to absolute tolerance tol."""
        out = defaultdict(complex, vec)
        term = dict(vec)
        k = 0
        while True:
            k += 1
            term = scale(self.hamiltonian(term), 1j * s / k)
            nrm = norm(term)
            out = add(out, term)
            if nrm < tol or k > 60:
                break
        return out

    def product_state(self, h1, h2, sigma, t, energy_ref="min"):
        vac = {((), ()): 1.0 + 0j}
        return self.dressed(self.dressed(vac, h2, sigma, t, energy_ref), h1, sigma, t, energy_ref)


def add(a, b, cb=1.0):
    out = defaultdict(complex, a)
    for k, v in b.items():
        out[k] += cb * v
    return out


def scale(a, c):
    return {k: c * v for k, v in a.items()}


def inner(a, b):
    """<a, b>"""
    if len(a) > len(b):
        return np.conj(inner(b, a))
    return complex(sum(np.conj(v) * b.get(k, 0) for k, v in a.items()))


def norm(a):
    return math.sqrt(sum(abs(v) ** 2 for v in a.values()))


def cook_terms_literal(dyn, h1, h2, t, sigma, energy_ref="min"):
    """The three derivative pieces as literal vectors, plus i H X + dX/dt directly."""
    lab = dyn.lab
    vac = {((), ()): 1.0 + 0j}
    e1 = dyn.dressed(vac, h1, sigma, t, energy_ref)
    e2 = dyn.dressed(vac, h2, sigma, t, energy_ref)
    X = dyn.dressed(e2, h1, sigma, t, energy_ref)
    Ha = lambda v: dyn.interaction(v, "annihilate")
    dcomm = add(add(Ha(X), dyn.dressed(Ha(e2), h1, sigma, t, energy_ref), -1.0),
                dyn.dressed(Ha(e1), h2, sigma, t, energy_ref), -1.0)
    chk12 = dyn.dressed(dyn.check(e2, sigma), h1, sigma, t, energy_ref)
    chk21 = dyn.dressed(dyn.check(e1, sigma), h2, sigma, t, energy_ref)

    def wt(site):
        return lab.energy(site, sigma) - lab.phase_energy(site, sigma, energy_ref)

    hs12 = dyn.dressed(dyn.dressed(vac, h2, sigma, t, energy_ref, weight=wt), h1, sigma, t, energy_ref)
    hs21 = dyn.dressed(dyn.dressed(vac, h1, sigma, t, energy_ref, weight=wt), h2, sigma, t, energy_ref)
    three = scale(add(add(add(add(dcomm, chk12), chk21), hs12), hs21), 1j)

    # d/dt X: each dressed factor picks up -i E_q
    def ewt(site):
        return -1j * lab.phase_energy(site, sigma, energy_ref)

    dX = add(dyn.dressed(e2, h1, sigma, t, energy_ref, weight=ewt),
             dyn.dressed(dyn.dressed(vac, h2, sigma, t, energy_ref, weight=ewt), h1, sigma, t, energy_ref))
    gen = add(scale(dyn.hamiltonian(X), 1j), dX)
    return {"X": X, "three": three, "generator": gen, "dcomm": dcomm, "check12": chk12,
            "check21": chk21, "hsigma12": hs12, "hsigma21": hs21}


class CollinearPropagator:
    """The truncated two-electron Hamiltonian as a sparse matrix, for collinear set-ups.

    Electrons and photon modes all sit on the x axis.  Electrons are written
    as distinguishable, x1 in [-width, width], and the bosonic states embed
    symmetrically.  Total momentum is conserved, so a state is labelled by
    (total momentum, x1, photon state) with x2 fixed by the rest.
    """

    def __init__(self, dyn, totals, width):
        lab = dyn.lab
        lat = lab.space.lattice
        if np.any(lat[:, 1:]):
            raise ValueError("collinear propagation needs a register on the x axis")
        L = lat[:, 0]
        self.dyn, self.width = dyn, width
        self.totals = sorted(int(x) for x in totals)
        self.basis = basis = fock.FockBasis(lab.J, dyn.cap)
        occ = basis.occupation()
        kph = occ @ L
        xs = np.arange(-width, width + 1)
        T, X1, PH = np.meshgrid(np.arange(len(self.totals)), xs, np.arange(len(basis)), indexing="ij")
        X2 = np.asarray(self.totals)[T] - X1 - kph[PH]
        ok = np.abs(X2) <= width
        self.index = np.full(T.shape, -1, np.int64)
        self.index[ok] = np.arange(int(ok.sum()))
        T, X1, PH, X2 = T[ok], X1[ok], PH[ok], X2[ok]
        self.T, self.X1, self.PH, self.X2 = T, X1, PH, X2
        n = len(T)
        a2 = 0.5 * lab.spacing ** 2
        diag = a2 * (X1 ** 2 + X2 ** 2) + occ[PH] @ lab.grid.absk
        rows, cols, vals = [], [], []
        low = basis.number[PH] < dyn.cap
        rt = basis.raise_table()
        src = np.nonzero(low)[0]
        for j in np.nonzero(dyn.c)[0]:
            tgt_ph = rt[PH[src], j]
            amp = dyn.c[j] * np.sqrt(occ[PH[src], j] + 1.0)
            # emission by electron 2 leaves x1 alone; by electron 1 shifts it
            for x1 in (X1[src], X1[src] - L[j]):
                inside = np.abs(x1) <= width
                tgt = np.full(len(src), -1)
                tgt[inside] = self.index[T[src][inside], x1[inside] + width, tgt_ph[inside]]
                hit = tgt >= 0
                rows.append(tgt[hit])
                cols.append(src[hit])
                vals.append(amp[hit])
        up = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        self.free = diag
        self.interaction = (up + up.T).tocsr()
        self.H = (sp.diags(diag) + self.interaction).tocsr()

    def __len__(self):
        return self.H.shape[0]

    def embed(self, vec):
        out = np.zeros(len(self), complex)
        tot = {p: i for i, p in enumerate(self.totals)}
        for (e, ph), a in vec.items():
            if len(e) != 2:
                raise ValueError("two-electron states only")
            x1, x2 = e[0][0], e[1][0]
            p = tot[x1 + x2 + sum(self.dyn.lat[j][0] for j in ph)]
            k = self.basis.index[ph]
            pairs = [(x1, x2)] if x1 == x2 else [(x1, x2), (x2, x1)]
            amp = a if x1 == x2 else a / math.sqrt(2)
            for y1, _ in pairs:
                i = self.index[p, y1 + self.width, k]
                if i < 0:
                    raise ValueError("state outside the propagation window")
                out[i] += amp
        return out

    def propagate(self, x, s):
        """e^{i H s} x"""
        return expm_multiply(1j * s * self.H, x)


def fd_derivative_norm(prop, h1, h2, t, sigma, dt=1e-3, energy_ref="min"):
    """||d/dt Psi_t|| by central differences of Psi_s = e^{iHs} X_s, Richardson-extrapolated.

    ||Psi_{t+d} - Psi_{t-d}|| = ||e^{iHd} X_{t+d} - e^{-iHd} X_{t-d}||, so the
    difference only needs propagation over +-d.
    """
    dyn = prop.dyn

    def central(d):
        a = prop.propagate(prop.embed(dyn.product_state(h1, h2, sigma, t + d, energy_ref)), d)
        b = prop.propagate(prop.embed(dyn.product_state(h1, h2, sigma, t - d, energy_ref)), -d)
        return float(np.linalg.norm(a - b)) / (2 * d)

    D1, D2 = central(dt), central(dt / 2)
    return {"coarse": D1, "fine": D2, "richardson": (4 * D2 - D1) / 3}


def kato_rellich(prop, samples=100, seed=0, a=0.5):
    """||H_I psi|| <= a ||H_fr psi|| + b ||psi|| on random two-electron vectors.

    The theoretical b for n electrons is 2 n^2 ||w^{-1/2} v||^2 + n ||v|| with
    a = 1/2; the fitted b is the smallest constant that works for the sample.
    """
    c = prop.dyn.c
    absk = prop.dyn.absk
    nz = c != 0
    n_el = 2
    b_theory = 2 * n_el ** 2 * float(np.sum(c[nz] ** 2 / absk[nz])) + n_el * float(np.sqrt(np.sum(c ** 2)))
    rng = np.random.default_rng(seed)
    dim = len(prop)
    ratios = []
    for i in range(samples):
        x = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        if i % 2:
            # weight towards low free energy, where the bound is tightest
            x *= np.exp(-prop.free / rng.uniform(0.01, 0.5))
        x /= np.linalg.norm(x)
        lhs = float(np.linalg.norm(prop.interaction @ x))
        rhs_free = a * float(np.linalg.norm(prop.free * x))
        ratios.append((lhs, rhs_free))
    lhs = np.array([r[0] for r in ratios])
    free = np.array([r[1] for r in ratios])
    b_fit = float(np.max(lhs - free))
    return {"a": a, "b_theory": b_theory, "b_fit": b_fit, "samples": samples,
            "holds": bool(np.all(lhs <= free + b_theory)), "max_lhs": float(lhs.max())}


# ------------------------------------------------------------------ studies

def rest_series(lab, h1, h2, sigma, t_list, energy_ref="min"):
    rows = []
    for t in t_list:
        tk = lab.build_kernels(h1, h2, t, sigma, energy_ref)
        ov = overlap(tk, tk)
        rows.append({"t": float(t), "rest": ov["rest"], "total": ov["total"], "direct": ov["direct"],
                     "exchange": ov["exchange"], "partition_err": ov["partition_err"]})
    return rows


def schedule(kappa, gamma, t_list, resolution):
    sig = [kappa / t ** gamma for t in t_list]
    bad = [t for t, s in zip(t_list, sig) if s < resolution]
    if bad:
        raise ScheduleError(f"sigma_t = kappa / t^gamma drops below the grid resolution {resolution:g} "
                            f"at t = {bad[0]:g}; start the t-ladder earlier or refine the grid")
    return sig


def convergence_study(lab, h1, h2, gamma, t_list, energy_ref="min"):
    """Same-time cutoff differences ||Psi_{t2, s2} - Psi_{t2, s1}||^2 along sigma_t = kappa / t^gamma.

    Each difference is assembled from four overlaps.  The remaining fixed-cutoff
    time step is the Cook integral and is reported separately by cook_terms.
    """
    t_list = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ScheduleError("t_list must be increasing")
    sig = schedule(lab.params.kappa, gamma, t_list, lab.resolution)
    rows = []
    for (t1, s1), (t2, s2) in zip(zip(t_list, sig), zip(t_list[1:], sig[1:])):
        a = lab.build_kernels(h1, h2, t2, s2, energy_ref)
        b = lab.build_kernels(h1, h2, t2, s1, energy_ref)
        aa, bb, ab, ba = overlap(a, a), overlap(b, b), overlap(a, b), overlap(b, a)
        diff = aa["total"] + bb["total"] - ab["total"] - ba["total"]
        rows.append({"t1": t1, "t2": t2, "sigma1": s1, "sigma2": s2, "diff_sq": diff.real,
                     "norm_sq": aa["total"].real, "rest": abs(aa["rest"]), "cross_rest": abs(ab["rest"])})
    out = {"rows": rows}
    if len(rows) >= 2:
        ts = [r["t2"] for r in rows]
        rs = [r["rest"] for r in rows]
        if all(x > 0 for x in rs):
            out["rest_exponent"] = loglog_slope(ts, rs)
    return out
