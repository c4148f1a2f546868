"""Photon mode grids, form factors and envelopes.

Two kinds of grid are provided.  ``build_annulus_grid`` is a product
Gauss-Legendre x spherical rule used for spectral work on a single fiber.
``build_lattice_grid`` places modes on a cubic lattice so that photon
momentum sums stay on the electron lattice; the pairing formulas and the
two-electron computations need that.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    lam: float = 0.05
    alpha_bar: float = 0.5
    kappa: float = 1.0
    eps0: float = 0.1
    p_max: float = 1.0 / 6.0
    gamma: float = 5.0
    gamma0: float = 5.0

    def __post_init__(self):
        # lam == 0 is allowed: it is the free theory used throughout the tests
        checks = [
            ("lambda", self.lam >= 0.0),
            ("alpha_bar", 0.0 < self.alpha_bar <= 0.5),
            ("kappa", self.kappa > 0.0),
            ("eps0", 0.0 < self.eps0 < 1.0),
            ("p_max", 0.0 < self.p_max <= 1.0 / 6.0 + 1e-15),
            ("gamma", self.gamma > 4.0),
            ("gamma0", self.gamma0 >= self.gamma),
        ]
        for key, ok in checks:
            if not ok:
                raise ValueError(f"invalid model parameter: {key}")

    @property
    def kappa_star(self):
        return self.kappa / (1.0 - self.eps0)

    @classmethod
    def from_mapping(cls, d):
        names = {"lambda": "lam", "alpha_bar": "alpha_bar", "kappa": "kappa", "eps0": "eps0",
                 "p_max": "p_max", "gamma": "gamma", "gamma0": "gamma0"}
        kw = {}
        for key, attr in names.items():
            if key in d:
                try:
                    kw[attr] = float(d[key])
                except (TypeError, ValueError):
                    raise ValueError(f"invalid model parameter: {key}") from None
        return cls(**kw)

    def to_mapping(self):
        return {"lambda": self.lam, "alpha_bar": self.alpha_bar, "kappa": self.kappa,
                "eps0": self.eps0, "p_max": self.p_max, "gamma": self.gamma,
                "gamma0": self.gamma0}


def read_params(path):
    """Read ModelParams from a flat ``key = value`` file."""
    d = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {line!r}")
            key, val = line.split("=", 1)
            d[key.strip()] = val.strip()
    return ModelParams.from_mapping(d)


@dataclass(frozen=True, eq=False)
class ModeGrid:
    k: np.ndarray
    w: np.ndarray
    sigma: float
    kappa: float
    n_radial: int = 0
    n_angular: int = 0
    # integer coordinates when every mode sits on spacing * Z^3
    lattice: np.ndarray = None
    spacing: float = None
    absk: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "absk", np.linalg.norm(self.k, axis=1))

    def __len__(self):
        return len(self.w)

    def rotated(self, R):
        return ModeGrid(self.k @ np.asarray(R).T, self.w.copy(), self.sigma, self.kappa,
                        self.n_radial, self.n_angular)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["kx", "ky", "kz", "w"])
            for kk, ww in zip(self.k, self.w):
                wr.writerow([repr(float(x)) for x in (*kk, ww)])


# Lebedev-type rules, weights normalised to 1
_OCTA = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
_CUBE = np.array([[a, b, c] for a in (1, -1) for b in (1, -1) for c in (1, -1)], float) / math.sqrt(3)
_EDGE = np.array([[a, b, 0] for a in (1, -1) for b in (1, -1)] +
                 [[a, 0, b] for a in (1, -1) for b in (1, -1)] +
                 [[0, a, b] for a in (1, -1) for b in (1, -1)], float) / math.sqrt(2)


def angular_rule(n):
    """Unit directions and weights (summing to 4 pi) for an n-point sphere rule."""
    if n == 1:
        dirs, wts = np.array([[0.0, 0.0, 1.0]]), np.array([1.0])
    elif n == 6:
        dirs, wts = _OCTA, np.full(6, 1 / 6)
    elif n == 14:
        dirs = np.vstack([_OCTA, _CUBE])
        wts = np.concatenate([np.full(6, 1 / 15), np.full(8, 3 / 40)])
    elif n == 26:
        dirs = np.vstack([_OCTA, _EDGE, _CUBE])
        wts = np.concatenate([np.full(6, 1 / 21), np.full(12, 4 / 105), np.full(8, 9 / 280)])
    else:
        # product rule: Gauss in cos(theta), uniform in phi, n = 2 * n_theta^2
        nt = int(round(math.sqrt(n / 2)))
        if nt < 1 or 2 * nt * nt != n:
            raise ValueError(f"unsupported angular rule size {n}")
        x, wx = np.polynomial.legendre.leggauss(nt)
        nphi = 2 * nt
        phi = 2 * np.pi * (np.arange(nphi) + 0.5) / nphi
        st = np.sqrt(1 - x ** 2)
        dirs = np.array([[s * math.cos(ph), s * math.sin(ph), c] for c, s in zip(x, st) for ph in phi])
        wts = np.array([wc / (2 * nphi) for wc in wx for _ in phi])
    return dirs, 4 * np.pi * wts


def build_annulus_grid(sigma, kappa, n_radial, n_angular):
    if not 0 < sigma < kappa:
        raise ValueError(f"invalid range: need 0 < sigma < kappa, got {sigma}, {kappa}")
    if n_radial < 1 or n_angular < 1:
        raise ValueError("n_radial and n_angular must be >= 1")
    x, wx = np.polynomial.legendre.leggauss(n_radial)
    half = 0.5 * (kappa - sigma)
    r = sigma + half * (x + 1)
    wr = half * wx * r ** 2
    dirs, wa = angular_rule(n_angular)
    k = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    w = (wr[:, None] * wa[None, :]).ravel()
    return ModeGrid(k, w, sigma, kappa, n_radial, n_angular)


def build_shell_grid(edges, n_radial, n_angular):
    """Concatenate annulus grids on consecutive radii, so every edge is a cutoff boundary."""
    edges = sorted(edges)
    parts = [build_annulus_grid(a, b, n_radial, n_angular) for a, b in zip(edges[:-1], edges[1:])]
    return ModeGrid(np.vstack([g.k for g in parts]), np.concatenate([g.w for g in parts]),
                    edges[0], edges[-1], n_radial * len(parts), n_angular)


def build_lattice_grid(r_min, r_max, spacing, axes=3):
    """Modes at spacing * Z^3 with r_min <= |k| < r_max, origin excluded, weight spacing^3.

    ``axes=1`` keeps only points on the x axis; that thins the mode set for
    small literal two-electron computations while keeping the lattice exact.
    """
    n = int(math.ceil(r_max / spacing))
    rng = np.arange(-n, n + 1)
    if axes == 1:
        pts = np.stack([rng, 0 * rng, 0 * rng], axis=1)
    else:
        pts = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    r = spacing * np.linalg.norm(pts, axis=1)
    keep = (r >= r_min) & (r < r_max) & (r > 0)
    pts = pts[keep]
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], np.round(r[keep] / spacing, 9)))
    pts = pts[order]
    k = spacing * pts.astype(float)
    w = np.full(len(pts), spacing ** 3)
    return ModeGrid(k, w, r_min, r_max, 0, 0, lattice=pts.astype(np.int64), spacing=spacing)


def merge_grids(a, b):
    lat = None
    if a.lattice is not None and b.lattice is not None and a.spacing == b.spacing:
        lat = np.vstack([a.lattice, b.lattice])
    return ModeGrid(np.vstack([a.k, b.k]), np.concatenate([a.w, b.w]), min(a.sigma, b.sigma),
                    max(a.kappa, b.kappa), lattice=lat, spacing=a.spacing if lat is not None else None)


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x ** 2)


def _radius(k):
    k = np.asarray(k, float)
    return np.linalg.norm(k, axis=-1)


def chi_kappa(k, params):
    r = _radius(k)
    lo = (1 - params.eps0) * params.kappa
    return 1.0 - smoothstep((r - lo) / (params.kappa - lo))


def form_factor(k, params):
    r = _radius(k)
    if params.lam == 0:
        return np.zeros_like(r)
    if np.any(r == 0):
        if params.alpha_bar < 0.5:
            raise ZeroDivisionError("form factor is singular at k = 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        val = params.lam * chi_kappa(k, params) * r ** params.alpha_bar / np.sqrt(2 * r)
    # alpha_bar = 1/2 is constant near the origin
    return np.where(r == 0, params.lam / math.sqrt(2) if params.alpha_bar == 0.5 else 0.0, val)


def form_factor_cutoff(k, sigma, params):
    r = _radius(k)
    return np.where(r >= sigma, form_factor(k, params), 0.0)


def form_factor_check(k, sigma, params):
    """Infrared part lam 1_{|k|<sigma} |k|^a / sqrt(2|k|); no UV smoothing factor."""
    r = _radius(k)
    if params.lam == 0:
        return np.zeros_like(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = params.lam * r ** params.alpha_bar / np.sqrt(2 * r)
    return np.where((r < sigma) & (r > 0), val, 0.0)


def g_envelope(ks, sigma, params, c_env):
    out = 1.0
    for kk in ks:
        r = float(_radius(kk))
        if not sigma <= r < params.kappa_star:
            return 0.0
        out *= c_env * params.lam * r ** (params.alpha_bar - 1.5)
    return out


def g_norm_sq(m, sigma, params, c_env):
    """Exact continuum ||g^m_sigma||^2 = A^m, A = 4 pi (c lam)^2 (k*^{2a} - sigma^{2a}) / (2a)."""
    a2 = 2 * params.alpha_bar
    A = 4 * np.pi * (c_env * params.lam) ** 2 * (params.kappa_star ** a2 - sigma ** a2) / a2
    return A ** m
