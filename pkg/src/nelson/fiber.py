"""Fiber Hamiltonians at fixed total momentum, their ground states and f^m components."""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import gammaln

from . import fock
from .modes import form_factor_cutoff


class SolverError(RuntimeError):
    pass


class PhaseConventionError(RuntimeError):
    pass


class SpectralConditionError(RuntimeError):
    pass


@dataclass
class GroundState:
    P: np.ndarray
    sigma: float
    energy: float
    vector: np.ndarray
    gap: float
    residual: float
    components: dict = field(default_factory=dict)

    def record(self):
        return {"P": [float(x) for x in self.P], "sigma": float(self.sigma),
                "E": float(self.energy), "gap": float(self.gap),
                "residual": float(self.residual),
                "norm_check": float(np.linalg.norm(self.vector))}


class FiberModel:
    """H_{P,sigma} = (P - P_f)^2 / 2 + H_f + sum_j sqrt(w_j) v^sigma(k_j) (b_j + b_j^dagger)."""

    def __init__(self, grid, params, m_max, sigma, basis=None):
        self.grid = grid
        self.params = params
        self.sigma = sigma
        self.basis = basis if basis is not None else fock.FockBasis(len(grid), m_max)
        if self.basis.n_modes != len(grid):
            raise ValueError("grid and basis have different mode counts")
        occ = self.basis.occupation().astype(float)
        self.pf = occ @ grid.k
        self.hf = occ @ grid.absk
        self.vsig = form_factor_cutoff(grid.k, sigma, params)
        self.coupling = np.sqrt(grid.w) * self.vsig
        self.V = fock.smeared_field(self.coupling, self.basis)

    @property
    def m_max(self):
        return self.basis.m_max

    def diagonal(self, P):
        d = np.asarray(P, float)[None, :] - self.pf
        return 0.5 * np.einsum("ij,ij->i", d, d) + self.hf

    def hamiltonian(self, P):
        return (sp.diags(self.diagonal(P)) + self.V).tocsr()

    def ground_state(self, P, tol=1e-10, max_iter=400, dense_below=2000):
        P = np.asarray(P, float)
        gs = ground_state(self.hamiltonian(P), tol=tol, max_iter=max_iter, dense_below=dense_below)
        gs.P, gs.sigma = P, self.sigma
        gs.components = extract_components(gs, self.grid, self.basis)
        return gs

    def energy(self, P, **kw):
        return self.ground_state(P, **kw).energy


def assemble_fiber_hamiltonian(P, sigma, grid, basis, params):
    return FiberModel(grid, params, basis.m_max, sigma, basis=basis).hamiltonian(P)


def _fix_phase(vec):
    a = vec[0]
    if abs(a) < 1e-12:
        raise PhaseConventionError(f"vacuum amplitude {abs(a):.3e} too small to fix the phase")
    return vec * (abs(a) / a)


def lanczos(H, v0, n_iter, tol):
    """Lanczos with full reorthogonalisation; returns Ritz values and the lowest Ritz vector."""
    n = H.shape[0]
    n_iter = min(n_iter, n)
    Q = np.zeros((n_iter + 1, n), dtype=np.result_type(H.dtype, v0.dtype))
    alpha, beta = [], []
    Q[0] = v0 / np.linalg.norm(v0)
    for k in range(n_iter):
        w = H @ Q[k]
        a = np.vdot(Q[k], w).real
        w = w - a * Q[k] - (beta[-1] * Q[k - 1] if k > 0 else 0)
        # two passes of Gram-Schmidt against the whole basis
        for _ in range(2):
            w = w - Q[: k + 1].T @ (Q[: k + 1].conj() @ w)
        alpha.append(a)
        b = np.linalg.norm(w)
        if k >= 1 or b < tol:
            theta, S = sla.eigh_tridiagonal(np.array(alpha), np.array(beta)) if k > 0 else \
                (np.array(alpha), np.ones((1, 1)))
            if abs(b * S[-1, 0]) < 0.1 * tol or b < 1e-14 or k == n_iter - 1:
                vec = S[:, 0] @ Q[: k + 1]
                return theta, vec
        beta.append(b)
        Q[k + 1] = w / b
    raise SolverError("Lanczos exhausted without producing a Ritz pair")


def ground_state(H, tol=1e-10, max_iter=400, dense_below=2000, restarts=6):
    n = H.shape[0]
    if n < dense_below:
        evals, evecs = np.linalg.eigh(H.toarray())
        vec = _fix_phase(evecs[:, 0])
        E = evals[0]
        gap = evals[1] - evals[0] if n > 1 else math.inf
    else:
        v0 = np.zeros(n, dtype=H.dtype)
        v0[0] = 1.0
        for _ in range(restarts):
            theta, vec = lanczos(H, v0, max_iter, tol)
            vec = vec / np.linalg.norm(vec)
            E = float(np.vdot(vec, H @ vec).real)
            res = np.linalg.norm(H @ vec - E * vec)
            if res <= tol:
                break
            v0 = vec
        vec = _fix_phase(vec)
        # Ritz estimate; by interlacing it bounds the true gap from above
        gap = theta[1] - theta[0] if len(theta) > 1 else math.inf
    vec = vec / np.linalg.norm(vec)
    E = float(np.vdot(vec, H @ vec).real)
    res = float(np.linalg.norm(H @ vec - E * vec))
    if res > tol:
        raise SolverError(f"ground state not converged, residual {res:.3e}")
    return GroundState(None, None, E, vec, float(gap), res)


class Components:
    """f^m values, one per occupation state of sector m.

    psi_n = f^m(modes of n) * sqrt(m! / prod n_j!) * prod sqrt(w_j)^{n_j}
    """

    def __init__(self, values, basis, grid):
        self.values = values
        self.basis = basis
        self.grid = grid

    def __getitem__(self, m):
        a, b = self.basis.sector_start[m], self.basis.sector_start[m + 1]
        return self.values[a:b]

    def at(self, modes):
        i = self.basis.index.get(tuple(sorted(modes)))
        return 0.0 if i is None else self.values[i]

    def table(self, m):
        """Dense symmetric f^m over all ordered m-tuples of modes."""
        J = self.basis.n_modes
        out = np.zeros((J,) * m, dtype=self.values.dtype)
        if m > self.basis.m_max:
            return out
        for s, val in zip(self.basis.states[self.basis.sector_start[m]:self.basis.sector_start[m + 1]],
                          self[m]):
            for perm in set(itertools.permutations(s)):
                out[perm] = val
        return out

    def norm_sq(self):
        return {m: float(np.sum(np.abs(self[m]) ** 2 * self._mult(m))) for m in range(self.basis.m_max + 1)}

    def _mult(self, m):
        a, b = self.basis.sector_start[m], self.basis.sector_start[m + 1]
        occ = self.basis.occupation()[a:b]
        return np.exp(gammaln(m + 1) - gammaln(occ + 1).sum(axis=1) + occ @ np.log(self.grid.w))


def extract_components(gs, grid, basis):
    occ = basis.occupation()
    log_multi = gammaln(basis.number + 1) - gammaln(occ + 1).sum(axis=1)
    scale = np.exp(0.5 * (log_multi + occ @ np.log(grid.w)))
    return Components(gs.vector / scale, basis, grid)


def conjugate_gradient(matvec, b, tol=1e-12, max_iter=1000):
    """Plain CG that refuses non-positive curvature."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    bnorm = math.sqrt(rr)
    if bnorm == 0:
        return x
    for _ in range(max_iter):
        Ap = matvec(p)
        curv = np.vdot(p, Ap).real
        if curv <= 0:
            raise SpectralConditionError("shifted fiber operator is not positive definite")
        a = rr / curv
        x += a * p
        r -= a * Ap
        rr_new = np.vdot(r, r).real
        if math.sqrt(rr_new) <= tol * bnorm:
            return x
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise SolverError("conjugate gradient did not converge")


def froehlich_f1(model, gs, tol=1e-12):
    """f^1(k_j) = -<Omega, (H_{P-k_j} - E + |k_j|)^{-1} v^sigma(k_j) psi> for every mode.

    On the truncated space the identity b_j psi = -R c_j Pi psi is exact when the
    resolvent lives on the cap m_max - 1 and psi is projected there, so that is
    what is solved here.
    """
    basis = model.basis
    n_low = basis.dim_upto(model.m_max - 1)
    V_low = model.V[:n_low, :n_low]
    rhs = gs.vector[:n_low]
    f1 = np.zeros(len(model.grid), dtype=gs.vector.dtype)
    for j in np.nonzero(model.vsig)[0]:
        kj = model.grid.k[j]
        diag = model.diagonal(gs.P - kj)[:n_low] - gs.energy + model.grid.absk[j]
        x = conjugate_gradient(lambda u: diag * u + V_low @ u, rhs, tol=tol)
        f1[j] = -model.vsig[j] * x[0]
    return f1


def fd_hessian(energy, P, h):
    P = np.asarray(P, float)
    e0 = energy(P)
    H = np.zeros((3, 3))
    E = np.eye(3) * h
    for i in range(3):
        H[i, i] = (energy(P + E[i]) - 2 * e0 + energy(P - E[i])) / h ** 2
        for j in range(i + 1, 3):
            H[i, j] = H[j, i] = (energy(P + E[i] + E[j]) - energy(P + E[i] - E[j])
                                 - energy(P - E[i] + E[j]) + energy(P - E[i] - E[j])) / (4 * h * h)
    return H


def fd_gradient(energy, P, h):
    P = np.asarray(P, float)
    return np.array([(energy(P + h * e) - energy(P - h * e)) / (2 * h) for e in np.eye(3)])


@dataclass
class EnergySurface:
    sigma: float
    p_grid: np.ndarray
    energies: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray

    @property
    def min_curvature(self):
        return min(np.linalg.eigvalsh(H)[0] for H in self.hessians)


def energy_surface(model, p_grid, h=None, **solver):
    h = h if h is not None else min(1e-3, model.sigma / 10)
    cache = {}

    def energy(P):
        key = tuple(np.round(P, 14))
        if key not in cache:
            cache[key] = model.energy(P, **solver)
        return cache[key]

    p_grid = np.atleast_2d(np.asarray(p_grid, float))
    for P in p_grid:
        if np.linalg.norm(P) >= model.params.p_max:
            raise ValueError("P grid point outside the electron momentum ball")
    energies = np.array([energy(P) for P in p_grid])
    grads = np.array([fd_gradient(energy, P, h) for P in p_grid])
    hess = np.array([fd_hessian(energy, P, h) for P in p_grid])
    return EnergySurface(model.sigma, p_grid, energies, grads, hess)


def aligned_difference(u, v):
    """u - e^{i phi} v with the phase maximising the overlap."""
    ov = np.vdot(v, u)
    ph = ov / abs(ov) if abs(ov) > 0 else 1.0
    return u - ph * v


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.abs(np.asarray(y, float))
    keep = y > 0
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def verify_spectral_bounds(surfaces, states=None):
    """Fitted constants for the energy and state bounds along a decreasing sigma ladder.

    surfaces: EnergySurface objects on a common p_grid.  states: optional
    mapping sigma -> GroundState at one fixed P, for the Cauchy state bound.
    """
    sig = np.array([s.sigma for s in surfaces])
    if np.any(np.diff(sig) >= 0):
        raise ValueError("sigma ladder must be strictly decreasing")
    ref = surfaces[-1]
    report = {
        "sigmas": sig.tolist(),
        "min_curvature": [s.min_curvature for s in surfaces],
        "max_velocity": [float(np.max(np.linalg.norm(s.gradients, axis=1))) for s in surfaces],
        "max_hessian_norm": [float(max(np.linalg.norm(H, 2) for H in s.hessians)) for s in surfaces],
    }
    diffs = [float(np.max(np.abs(s.energies - ref.energies))) for s in surfaces[:-1]]
    report["energy_cauchy"] = diffs
    if len(diffs) >= 2:
        report["energy_cauchy_slope"] = loglog_slope(sig[:-1], diffs)
    if states:
        ks = sorted(states, reverse=True)
        last = states[ks[-1]].vector
        sd = [float(np.linalg.norm(aligned_difference(states[s].vector, last))) for s in ks[:-1]]
        report["state_cauchy"] = sd
        if len(sd) >= 2:
            report["state_cauchy_slope"] = loglog_slope(ks[:-1], sd)
    return report
