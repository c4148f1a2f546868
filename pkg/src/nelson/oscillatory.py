"""Photon-emission kernels F_{n,m}, the slow-cutoff split, decay fits and summation checks."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import wick
from .modes import g_norm_sq, smoothstep


def slow_cutoff(sigma, kappa, gamma0):
    return kappa * (sigma / kappa) ** (1.0 / (8.0 * gamma0))


def plateau(x, eps=0.1):
    """Smooth radial profile: 1 on |x| <= 1 - eps, 0 for |x| >= 1."""
    return 1.0 - smoothstep((np.abs(x) - (1.0 - eps)) / eps)


def split_weights(absk, sigma, params, eps=0.1):
    """(chi_1, chi_2) on the modes, chi_1(k) = plateau(|k| / sigma_s), chi_2 = 1 - chi_1."""
    chi1 = plateau(np.asarray(absk) / slow_cutoff(sigma, params.kappa, params.gamma0), eps)
    return chi1, 1.0 - chi1


def _flat(modes, J):
    i = 0
    for j in modes:
        i = i * J + int(j)
    return i


def eval_F(lab, G1, G2, n, m, q, r, p, k, weights=None):
    """F^{G1,G2}_{n,m}(q; r | p; k) = (n+1) sum_j w_j v(k_j) G1_{n+1}(q + k_j; r, k_j) G2_m(p - k_j; k).

    q, p are integer lattice sites, r and k tuples of register mode indices.
    Returns 0 when n + 1 exceeds the photon cap of the kernels.
    """
    if n + 1 not in G1.tables or m not in G2.tables:
        return 0j
    J, lat, w = lab.J, lab.space.lattice, lab.space.w
    v = lab.v if weights is None else lab.v * weights
    nz = np.nonzero(v)[0]
    q, p = np.asarray(q, np.int64), np.asarray(p, np.int64)
    i1 = G1.index.find(q[None, :] + lat[nz])
    i2 = G2.index.find(p[None, :] - lat[nz])
    ok = (i1 >= 0) & (i2 >= 0)
    if not np.any(ok):
        return 0j
    base = _flat(r, J) * J
    a = G1.tables[n + 1][i1[ok], base + nz[ok]]
    b = G2.tables[m][i2[ok], _flat(k, J)]
    return complex((n + 1) * np.sum(w[nz[ok]] * v[nz[ok]] * a * b))


def f_table(lab, A, B, weights=None, max_entries=5e7):
    """All F^{A,B}_{n,m} tables (n < m_max, m <= m_max) as a PairKernel.

    Dense in (q, p), so only for small registers; larger ones raise ValueError.
    """
    J, lat, w = lab.J, lab.space.lattice, lab.space.w
    v = lab.v if weights is None else lab.v * weights
    nz = np.nonzero(v)[0]
    qs = np.unique((A.sites[:, None, :] - lat[None, nz, :]).reshape(-1, 3), axis=0)
    ps = np.unique((B.sites[:, None, :] + lat[None, nz, :]).reshape(-1, 3), axis=0)
    size = len(qs) * len(ps) * sum(J ** n * J ** m for n in range(lab.m_max) for m in range(lab.m_max + 1))
    if size > max_entries:
        raise ValueError(f"dense F tables need {size:.3g} entries (limit {max_entries:.3g}); "
                         "use a collinear register (lattice_axes = 1) or smaller packets")
    qi, pi = wick.SiteIndex(qs), wick.SiteIndex(ps)
    tables = {}
    for n in range(lab.m_max):
        a_tab = A.tables[n + 1].reshape((len(A.sites), J ** n, J))
        for m in range(lab.m_max + 1):
            b_tab = B.tables[m]
            t = np.zeros((len(qs), J ** n, len(ps), J ** m), complex)
            for j in nz:
                iq = qi.find(A.sites - lat[j])
                ip = pi.find(B.sites + lat[j])
                blk = (n + 1) * w[j] * v[j] * a_tab[:, :, j]
                t[np.ix_(iq, np.arange(J ** n), ip, np.arange(J ** m))] += \
                    blk[:, :, None, None] * b_tab[None, None, :, :]
            tables[(n, m)] = t
    return wick.PairKernel(qs, ps, tables)


def slow_cutoff_split(lab, G1, G2, n, m, q, r, p, k, sigma, eps=0.1):
    """(F_1, F_2, F): the kernel below and above the slow cutoff, and the whole."""
    chi1, chi2 = split_weights(lab.grid.absk, sigma, lab.params, eps)
    F1 = eval_F(lab, G1, G2, n, m, q, r, p, k, chi1)
    F2 = eval_F(lab, G1, G2, n, m, q, r, p, k, chi2)
    return F1, F2, eval_F(lab, G1, G2, n, m, q, r, p, k)


def envelope(t, sigma, params):
    """sigma^{a/(4 g0)} / t + sigma t + 1 / (t^2 sigma^{1/(4 g0)})"""
    t = np.asarray(t, float)
    a, g0 = params.alpha_bar, params.gamma0
    return sigma ** (a / (4 * g0)) / t + sigma * t + 1.0 / (t ** 2 * sigma ** (1 / (4 * g0)))


def rest_envelope(t, sigma, sigma_p, params):
    t = np.asarray(t, float)
    return 1.0 / (t * sigma ** (1 / (8 * params.gamma0))) + sigma_p ** (2 * params.alpha_bar)


@dataclass
class DecayReport:
    t: np.ndarray
    magnitude: np.ndarray
    exponent: float
    prefactor: float
    residual: float
    model: str
    bound: np.ndarray
    constant: float
    dominated: bool
    dropped: int = 0
    params: dict = field(default_factory=dict)

    def record(self):
        return {"t": self.t.tolist(), "magnitude": self.magnitude.tolist(), "exponent": self.exponent,
                "prefactor": self.prefactor, "residual": self.residual, "model": self.model,
                "bound": self.bound.tolist(), "constant": self.constant, "dominated": self.dominated,
                "dropped": self.dropped, **self.params}


def _shape(model, t, sigma, params):
    if model == "1/t":
        return 1.0 / t
    if model == "1/t2":
        return 1.0 / t ** 2
    if model == "mixed":
        if sigma is None or params is None:
            raise ValueError("the mixed envelope needs sigma and params")
        return envelope(t, sigma, params)
    raise ValueError(f"unknown decay model {model!r}")


def fit_decay(samples, model="1/t", sigma=None, params=None):
    """Log-log least squares of magnitude against t, plus a domination check.

    The comparison constant is calibrated on the earliest sample; ``dominated``
    says whether every later sample stays under constant * shape(t).
    """
    t = np.array([s[0] for s in samples], float)
    y = np.array([s[1] for s in samples], float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("t samples must be strictly increasing")
    keep = y > 0
    dropped = int(np.sum(~keep))
    t, y = t[keep], y[keep]
    if len(t) < 5 or t[-1] < 10 * t[0]:
        raise ValueError("need at least 5 positive samples spanning a decade in t")
    X = np.vstack([np.log(t), np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - np.log(y)) ** 2)))
    shape = _shape(model, t, sigma, params)
    C = y[0] / shape[0]
    dominated = bool(np.all(y <= C * shape * (1 + 1e-9)))
    return DecayReport(t, y, float(coef[0]), float(math.exp(coef[1])), resid, model, C * shape, float(C),
                       dominated, dropped, {"sigma": sigma})


# ------------------------------------------------------------------ summation

@dataclass
class SummationReport:
    sigmas: list
    lhs: dict
    rhs: dict
    c_env: float
    c_eff: float
    passed: dict

    def record(self):
        return {"sigmas": self.sigmas, "lhs": self.lhs, "rhs": self.rhs, "c_env": self.c_env,
                "c_eff": self.c_eff, "passed": self.passed}


def _summation_lhs(g2, shift_m, shift_n, tol=1e-16, max_order=400):
    """sum over m + n = mt + nt of (mt + nt)! / (m! n! mt! nt!) g2(m - shift_m) g2(n - shift_n)."""
    total = 0.0
    for N in range(max_order):
        inner = 2.0 ** N  # sum over mt + nt = N of N! / (mt! nt!)
        layer = 0.0
        for m in range(N + 1):
            n = N - m
            a, b = m - shift_m, n - shift_n
            if a < 0 or b < 0:
                continue
            layer += g2(a) * g2(b) / (math.factorial(m) * math.factorial(n))
        layer *= inner
        total += layer
        if N > 2 and layer < tol * total:
            break
    return total


def calibrated_constant(sigmas, params, c_env):
    """Smallest c with ||g^1_sigma||^2 <= (lam c)^2 log(k*/sigma) on every sigma.

    ||g^m||^2 = ||g^1||^2^m, so this is the envelope hypothesis of the summation
    estimate for every m at once.
    """
    ks = params.kappa_star
    ratios = [g_norm_sq(1, s, params, c_env) / (params.lam ** 2 * math.log(ks / s))
              for s in sigmas if s < ks and params.lam > 0]
    return math.sqrt(max(ratios)) if ratios else c_env


def summation_check(sigmas, params, c_env, c_eff=None, norms="exact"):
    """The three summation estimates over a cutoff list.

    norms='exact' uses the closed-form ||g^m||^2; 'log' uses the envelope
    (lam c)^{2m} log(k*/sigma)^m itself, for which the first estimate is an equality.
    """
    c_eff = calibrated_constant(sigmas, params, c_env) if c_eff is None else c_eff
    lhs, rhs, passed = {}, {}, {}
    variants = {"plain": (0, 0, 1.0), "shifted": (1, 0, 2.0), "double_shifted": (1, 1, 4.0)}
    for s in sigmas:
        L = math.log(params.kappa_star / s)
        if norms == "exact":
            g2 = lambda m, s=s: g_norm_sq(m, s, params, c_env)
            c_rhs = c_eff
        else:
            g2 = lambda m, L=L: (params.lam * c_env) ** (2 * m) * L ** m
            c_rhs = c_env
        base = (params.kappa_star / s) ** (4 * params.lam ** 2 * c_rhs ** 2)
        for name, (sm, sn, factor) in variants.items():
            key = f"{name}@{s:g}"
            lhs[key] = _summation_lhs(g2, sm, sn)
            rhs[key] = factor * base
            passed[key] = lhs[key] <= rhs[key] * (1 + 1e-12)
    return SummationReport(list(sigmas), lhs, rhs, c_env, c_eff, passed)


# ------------------------------------------------------------------ studies

def f_decay_series(lab, h1, h2, sigma, t_list, tuples, n=0, m=0, eps=0.1, energy_ref="min"):
    """max over tuples of |F|, |F_1|, |F_2| per t, and the worst split mismatch."""
    rows = []
    for t in t_list:
        G1 = lab.kernel(h1, sigma, t, energy_ref)
        G2 = lab.kernel(h2, sigma, t, energy_ref)
        vals = [slow_cutoff_split(lab, G1, G2, n, m, q, r, p, k, sigma, eps) for q, r, p, k in tuples]
        F1 = np.array([x[0] for x in vals])
        F2 = np.array([x[1] for x in vals])
        F = np.array([x[2] for x in vals])
        rows.append({"t": float(t), "F": float(np.max(np.abs(F))), "F1": float(np.max(np.abs(F1))),
                     "F2": float(np.max(np.abs(F2))),
                     "split_err": float(np.max(np.abs(F1 + F2 - F))) if len(F) else 0.0})
    return rows


def support_tuples(lab, h1, h2, sigma, n, m, count, rng):
    """Random (q, r, p, k) with q + k_j in supp h1 and p - k_j in supp h2 for some coupled mode j."""
    act = lab.active(sigma)
    out = []
    for _ in range(count):
        j = int(rng.choice(act))
        q = h1.sites[rng.integers(len(h1.sites))] - lab.space.lattice[j]
        p = h2.sites[rng.integers(len(h2.sites))] + lab.space.lattice[j]
        r = tuple(int(x) for x in rng.choice(act, n))
        k = tuple(int(x) for x in rng.choice(act, m))
        out.append((q, r, p, k))
    return out
