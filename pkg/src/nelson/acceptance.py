"""The thirteen acceptance criteria as plain functions.

Each returns a Result; ``run_all`` prints one PASS/FAIL line per criterion.
Criteria listed in UNATTAINABLE fail for a structural reason recorded in the
project notes, and are reported as FAIL rather than tuned into passing.
"""

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import fiber, oscillatory as osc, scattering as sc, wick
from .modes import (ModeGrid, ModelParams, build_annulus_grid, build_shell_grid, form_factor_cutoff,
                    merge_grids)

UNATTAINABLE = {9, 12}


@dataclass
class Result:
    number: int
    title: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} [{self.number:2d}] {self.title}: {_brief(self.detail)}"


def _brief(d):
    parts = []
    for k, v in d.items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.3g}")
        elif isinstance(v, (bool, int, str)):
            parts.append(f"{k}={v}")
    return ", ".join(parts)


def _timed(number, title):
    def wrap(fn):
        def run(*a, **kw):
            t0 = time.perf_counter()
            passed, detail = fn(*a, **kw)
            return Result(number, title, bool(passed), detail, time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# ------------------------------------------------------------------ shared set-ups

COOK = dict(lam=0.05, kappa=0.25, spacing=0.05, sigma_ref=0.1, m_max=2)
LAB3D = dict(lam=0.05, kappa=0.25, spacing=0.05, sigma_ref=0.1, m_max=1)
T_DECAY = [5, 7, 10, 14, 20, 28, 40, 56, 80]


@lru_cache(maxsize=None)
def cook_setup(lam=COOK["lam"]):
    params = ModelParams(lam=lam, kappa=COOK["kappa"])
    lab = sc.ScatteringLab(params, COOK["spacing"], COOK["sigma_ref"], m_max=COOK["m_max"], axes=1)
    h1 = sc.make_bump([-0.1, 0, 0], 0.06, COOK["spacing"], axes=1)
    h2 = sc.make_bump([0.1, 0, 0], 0.06, COOK["spacing"], axes=1)
    dyn = sc.TwoElectronDynamics(lab, 2 * lab.m_max + 1)
    return lab, h1, h2, dyn


@lru_cache(maxsize=None)
def lab3d(lam=LAB3D["lam"]):
    params = ModelParams(lam=lam, kappa=LAB3D["kappa"])
    lab = sc.ScatteringLab(params, LAB3D["spacing"], LAB3D["sigma_ref"], m_max=LAB3D["m_max"])
    h1 = sc.make_bump([-0.08, 0, 0], 0.08, LAB3D["spacing"])
    h2 = sc.make_bump([0.08, 0, 0], 0.08, LAB3D["spacing"])
    return lab, h1, h2


def _propagator(dyn, h1, h2, sigma, t):
    X = dyn.product_state(h1, h2, sigma, t)
    totals = {e[0][0] + e[1][0] + sum(dyn.lat[j][0] for j in ph) for (e, ph) in X}
    reach = int(np.max(np.abs(dyn.lab.space.lattice[:, 0])))
    width = int(max(abs(s[0]) for (e, _) in X for s in e)) + 2 * reach
    return sc.CollinearPropagator(dyn, totals, width)


def fiber_grid():
    return build_annulus_grid(0.1, 1.0, 4, 14)


# ------------------------------------------------------------------ criteria

@_timed(1, "Wick oracle equivalence")
def criterion_1(per_combination=100, seed=0):
    combos = len(wick._arities(3))
    cases = per_combination * combos
    t0 = time.perf_counter()
    rep = wick.selftest(3, cases, seed)
    dt = time.perf_counter() - t0
    return rep["max_rel_err"] <= 1e-12 and dt <= 120, {
        "max_rel_err": rep["max_rel_err"], "max_abs_err": rep["max_abs_err"], "cases": cases,
        "arity_combos": combos, "runtime_s": dt}


@_timed(2, "Free-theory exactness")
def criterion_2():
    params = ModelParams(lam=0.0)
    grid = fiber_grid()
    P = np.array([0.1, 0.0, 0.0])
    gs = fiber.FiberModel(grid, params, 2, 0.1).ground_state(P)
    e_err = abs(gs.energy - 0.5 * P @ P)
    vac = np.zeros_like(gs.vector)
    vac[0] = 1
    psi_err = float(np.linalg.norm(gs.vector - vac))

    lab, h1, h2, dyn = cook_setup(0.0)
    lab.sigma_ref = COOK["sigma_ref"]
    sig, t = 0.15, 3.0
    tk = lab.build_kernels(h1, h2, t, sig)
    ov = sc.overlap(tk, tk)
    w_e = lab.space.w_e
    n1, n2 = w_e * np.sum(h1.values ** 2), w_e * np.sum(h2.values ** 2)
    i12 = w_e * sum(a * b for s, a in zip(map(tuple, h1.sites), h1.values)
                    for s2, b in zip(map(tuple, h2.sites), h2.values) if s == s2)
    wick_value = n1 * n2 + i12 ** 2
    ct = sc.cook_terms(lab, h1, h2, t, sig)
    lit = sc.cook_terms_literal(dyn, h1, h2, t, sig)
    cook_max = max(ct["norm_dcomm"], ct["norm_check"], ct["norm_hsigma"], sc.norm(lit["three"]))
    passed = (e_err <= 1e-13 and psi_err <= 1e-13 and abs(ov["total"] - wick_value) <= 1e-13
              and ov["rest"] == 0 and cook_max == 0.0)
    return passed, {"energy_err": e_err, "psi_err": psi_err,
                    "overlap_err": abs(ov["total"] - wick_value), "rest": abs(ov["rest"]), "cook_max": cook_max}


def second_order_shift(P, sigma, grid, params):
    v = form_factor_cutoff(grid.k, sigma, params)
    den = grid.absk + 0.5 * grid.absk ** 2 - grid.k @ np.asarray(P)
    return -float(np.sum(grid.w * v ** 2 / den))


@_timed(3, "Perturbative energy oracle")
def criterion_3():
    params = ModelParams(lam=0.01)
    grid = fiber_grid()
    P = np.array([0.05, 0.0, 0.0])
    gs = fiber.FiberModel(grid, params, 2, 0.1).ground_state(P)
    shift = gs.energy - 0.5 * P @ P
    ref = second_order_shift(P, 0.1, grid, params)
    rel = abs(shift - ref) / abs(ref)
    return rel <= 0.05, {"shift": shift, "second_order": ref, "rel_diff": rel}


@_timed(4, "Froehlich formula consistency")
def criterion_4():
    grid = fiber_grid()
    P = np.array([0.05, 0.02, 0.0])
    errs = {}
    for lam in (0.01, 0.05):
        model = fiber.FiberModel(grid, ModelParams(lam=lam), 2, 0.1)
        gs = model.ground_state(P)
        f_res = fiber.froehlich_f1(model, gs)
        f_vec = gs.components[1]
        errs[lam] = float(np.sqrt(np.sum(grid.w * np.abs(f_res - f_vec) ** 2) /
                                  np.sum(grid.w * np.abs(f_vec) ** 2)))
    return max(errs.values()) <= 1e-8, {"rel_l2_lam0.01": errs[0.01], "rel_l2_lam0.05": errs[0.05]}


@_timed(5, "Support below the cutoff")
def criterion_5():
    sigma = 0.1
    grid = merge_grids(build_annulus_grid(0.04, sigma, 2, 14), build_annulus_grid(sigma, 1.0, 3, 14))
    model = fiber.FiberModel(grid, ModelParams(lam=0.05), 2, sigma)
    gs = model.ground_state(np.array([0.05, 0.0, 0.0]))
    occ = model.basis.occupation()
    sub = grid.absk < sigma
    touches = occ[:, sub].sum(axis=1) > 0
    worst = float(np.max(np.abs(gs.vector[touches])))
    return worst <= 1e-12, {"max_sub_amplitude": worst, "sub_modes": int(sub.sum())}


@_timed(6, "Convexity and energy-convergence slope")
def criterion_6():
    params = ModelParams(lam=0.05)
    sigmas = [0.5, 0.2, 0.1]
    edges = sorted({*sigmas, *(s / 2 for s in sigmas), 1.0})
    grid = build_shell_grid(edges, 2, 6)
    p_grid = [[0, 0, 0]] + [list(s * 0.05 * e) for e in np.eye(3) for s in (1, -1)]
    solver = {"dense_below": 0}
    curv = {}
    for s in sigmas:
        surf = fiber.energy_surface(fiber.FiberModel(grid, params, 2, s), p_grid, **solver)
        curv[s] = surf.min_curvature
    P = np.array([0.05, 0.0, 0.0])
    diffs = []
    for s in sigmas:
        e1 = fiber.FiberModel(grid, params, 2, s).energy(P, **solver)
        e2 = fiber.FiberModel(grid, params, 2, s / 2).energy(P, **solver)
        diffs.append(abs(e1 - e2))
    slope = fiber.loglog_slope(sigmas, diffs)
    return min(curv.values()) > 0 and slope >= 0.9, {
        "min_curvature": min(curv.values()), "slope": slope, "modes": len(grid)}


@_timed(7, "Norm identity")
def criterion_7():
    lab, h1, h2 = lab3d()
    errs = []
    for s in (0.1, 0.15):
        for h in (h1, h2):
            hn = math.sqrt(h.w_e * float(np.sum(h.values ** 2)))
            errs.append(abs(lab.psi(h, s).norm - hn))
    cross = lab.psi(h1, 0.1).inner(lab.psi(h2, 0.1))
    return max(errs) <= 1e-10 and cross == 0, {"norm_err": max(errs), "cross": abs(cross)}


def brute_force_overlaps():
    """overlap() against literal two-electron inner products on a three-mode register."""
    a = 0.05
    lat = np.array([[1, 0, 0], [0, 1, 0], [1, 1, 0]])
    grid = ModeGrid(a * lat.astype(float), np.full(3, a ** 3), 0.0, 0.25, lattice=lat, spacing=a)
    params = ModelParams(lam=0.3, kappa=0.25)
    lab = sc.ScatteringLab(params, a, 0.04, m_max=1, grid=grid)
    h1 = sc.make_bump([-0.05, 0, 0], 0.06, a)
    h2 = sc.make_bump([0.0, 0.05, 0], 0.06, a)
    dyn = sc.TwoElectronDynamics(lab, 2)
    worst = 0.0
    worst_part = 0.0
    cases = [((0.5, 0.04), (0.5, 0.04)), ((1.5, 0.04), (1.5, 0.06)), ((0.0, 0.06), (0.0, 0.04))]
    for (t, s), (tp, sp_) in cases:
        tk = lab.build_kernels(h1, h2, t, s)
        tkp = lab.build_kernels(h1, h2, tp, sp_)
        ov = sc.overlap(tkp, tk)
        lit = sc.inner(dyn.product_state(h1, h2, sp_, tp), dyn.product_state(h1, h2, s, t))
        worst = max(worst, abs(ov["total"] - lit))
        worst_part = max(worst_part, ov["partition_err"])
    return worst, worst_part, abs(ov["exchange"])


@_timed(8, "Clustering decomposition")
def criterion_8():
    lab, h1, h2 = lab3d()
    part = 0.0
    for t in (5.0, 40.0):
        for s, sp_ in ((0.1, 0.1), (0.15, 0.1)):
            ov = sc.overlap(lab.build_kernels(h1, h2, t, sp_), lab.build_kernels(h1, h2, t, s))
            part = max(part, ov["partition_err"], ov["direct_err"], ov["exchange_err"])
    bf, bf_part, exch = brute_force_overlaps()
    return part <= 1e-12 and bf_part <= 1e-12 and bf <= 1e-10, {
        "partition_err": max(part, bf_part), "brute_force_err": bf, "exchange_seen": exch}


@_timed(9, "Rest-term decay")
def criterion_9(t_list=tuple(T_DECAY)):
    lab, h1, h2 = lab3d()
    rows = sc.rest_series(lab, h1, h2, 0.1, t_list)
    rep = osc.fit_decay([(r["t"], abs(r["rest"])) for r in rows], "1/t")
    part = max(r["partition_err"] for r in rows)
    return rep.exponent <= -0.8 and part <= 1e-12, {
        "exponent": rep.exponent, "rest_first": float(rep.magnitude[0]), "rest_last": float(rep.magnitude[-1]),
        "partition_err": part}


@_timed(10, "Cook identity")
def criterion_10(sigmas=(0.15, 0.1), t=3.0):
    lab, h1, h2, dyn = cook_setup()
    out = {}
    worst = 0.0
    for s in sigmas:
        lit = sc.cook_terms_literal(dyn, h1, h2, t, s)
        three = sc.norm(lit["three"])
        prop = _propagator(dyn, h1, h2, s, t)
        fd = sc.fd_derivative_norm(prop, h1, h2, t, s)
        rel = abs(fd["richardson"] - three) / three
        worst = max(worst, rel)
        out[f"rel_diff@{s:g}"] = rel
        out[f"three_term@{s:g}"] = three
    out["leak"] = max(p.leak for p in lab.points())
    return worst <= 1e-4, out


@_timed(11, "Summation bounds")
def criterion_11():
    sigmas = [0.5, 0.2, 0.1, 0.05]
    ok = True
    detail = {}
    for lam in (0.05, 0.1):
        params = ModelParams(lam=lam)
        rep = osc.summation_check(sigmas, params, 1.0)
        log_rep = osc.summation_check(sigmas, params, 1.0, norms="log")
        ok &= all(rep.passed.values()) and all(log_rep.passed.values())
        detail[f"c_eff@{lam:g}"] = rep.c_eff
        detail[f"worst_ratio@{lam:g}"] = max(rep.lhs[k] / rep.rhs[k] for k in rep.lhs)
    return ok, detail


def f_samples(lab, h1, h2, sigma, t_list, count=200, seed=0, n=0, m=1):
    rng = np.random.default_rng(seed)
    tuples = osc.support_tuples(lab, h1, h2, sigma, n, m, count, rng)
    params = lab.params
    g = params.lam * lab.grid.absk ** (params.alpha_bar - 1.5)
    shape = np.array([np.prod(g[list(r)]) * np.prod(g[list(k)]) for _, r, _, k in tuples])
    shape /= math.sqrt(math.factorial(n) * math.factorial(m))
    mags, split = [], 0.0
    for t in t_list:
        G1 = lab.kernel(h1, sigma, t)
        G2 = lab.kernel(h2, sigma, t)
        vals = np.array([osc.slow_cutoff_split(lab, G1, G2, n, m, q, r, p, k, sigma) for q, r, p, k in tuples])
        split = max(split, float(np.max(np.abs(vals[:, 0] + vals[:, 1] - vals[:, 2]))))
        mags.append(np.abs(vals))
    return np.array(mags), shape, split


@_timed(12, "Oscillatory split and envelope")
def criterion_12(t_list=tuple(T_DECAY), sigma=0.1):
    lab, h1, h2 = lab3d()
    mags, shape, split = f_samples(lab, h1, h2, sigma, t_list)
    env = osc.envelope(np.array(t_list, float), sigma, lab.params)
    ratio = mags[:, :, 2] / (env[:, None] * shape[None, :])
    C = float(np.max(ratio[0]))
    dominated = bool(np.all(ratio <= C * (1 + 1e-9)))
    rep = osc.fit_decay(list(zip(t_list, mags[:, :, 1].max(axis=1))), "1/t2")
    passed = split <= 1e-14 and dominated and rep.exponent <= -1.6
    return passed, {"split_err": split, "dominated": dominated, "envelope_constant": C,
                    "F2_exponent": rep.exponent}


@_timed(13, "Kato-Rellich bound")
def criterion_13(samples=100, seed=0):
    lab, h1, h2, dyn = cook_setup()
    prop = _propagator(dyn, h1, h2, 0.1, 3.0)
    rep = sc.kato_rellich(prop, samples, seed)
    return rep["holds"] and rep["a"] < 1 and rep["b_fit"] <= rep["b_theory"], {
        "a": rep["a"], "b_theory": rep["b_theory"], "b_fit": rep["b_fit"], "dim": len(prop)}


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11, criterion_12, criterion_13]


def run_all(printer=print):
    results = []
    for crit in CRITERIA:
        res = crit()
        printer(res.line())
        results.append(res)
    return results
