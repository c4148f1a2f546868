"""Command line entry point: flat key=value configs, a ground-state cache and JSON/CSV artifacts.

    nelson <subcommand> [--config FILE] [--out DIR] [--threads N] [--seed N] [flags]

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, fiber, oscillatory as osc, scattering as sc, wick
from .modes import ModelParams, build_annulus_grid, build_shell_grid, merge_grids

log = logging.getLogger("nelson")

CACHE_VERSION = 1
MODEL_KEYS = {"lambda", "alpha_bar", "kappa", "eps0", "p_max", "gamma", "gamma0"}


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


@dataclass
class ExperimentConfig:
    params: ModelParams = field(default_factory=ModelParams)
    # fiber grid and basis
    sigma: float = 0.1
    n_radial: int = 4
    n_angular: int = 14
    include_sub_sigma: bool = False
    m_max: int = 2
    P: list = field(default_factory=lambda: [0.05, 0.0, 0.0])
    sigmas: list = field(default_factory=lambda: [0.5, 0.2, 0.1])
    p_step: float = 0.05
    # electron lattice and packets
    spacing: float = 0.05
    lattice_axes: int = 3
    lattice_m_max: int = 1
    lattice_kappa: float = 0.25
    sigma_ref: float = 0.1
    center1: list = field(default_factory=lambda: [-0.08, 0.0, 0.0])
    radius1: float = 0.08
    center2: list = field(default_factory=lambda: [0.08, 0.0, 0.0])
    radius2: float = 0.08
    # schedule, solver, output
    t_list: list = field(default_factory=lambda: [5.0, 7.0, 10.0, 14.0, 20.0, 28.0, 40.0, 56.0, 80.0])
    energy_ref: str = "min"
    c_env: float = 1.0
    tol: float = 1e-10
    max_iter: int = 400
    out_dir: str = "out"
    seed: int = 0

    @classmethod
    def from_mapping(cls, d):
        kw, model = {}, {}
        fields = {f.name: f for f in dataclasses.fields(cls) if f.name != "params"}
        for key, raw in d.items():
            if key in MODEL_KEYS:
                model[key] = raw
                continue
            if key not in fields:
                raise ValueError(f"unknown config key: {key}")
            default = fields[key].default_factory() if fields[key].default is dataclasses.MISSING \
                else fields[key].default
            try:
                if isinstance(default, list):
                    kw[key] = _floats(raw)
                elif isinstance(default, bool):
                    kw[key] = _bool(raw)
                else:
                    kw[key] = type(default)(raw)
            except (TypeError, ValueError):
                raise ValueError(f"invalid config key: {key}") from None
        cfg = cls(params=ModelParams.from_mapping(model), **kw)
        cfg.validate()
        return cfg

    def validate(self):
        p = self.params
        checks = [
            ("sigma", 0 < self.sigma < p.kappa),
            ("n_radial", self.n_radial >= 1),
            ("n_angular", self.n_angular >= 1),
            ("m_max", self.m_max >= 1),
            ("P", len(self.P) == 3 and math.hypot(*self.P) < p.p_max),
            ("sigmas", len(self.sigmas) > 0 and all(0 < s < p.kappa for s in self.sigmas)),
            ("p_step", 0 < self.p_step < p.p_max),
            ("spacing", self.spacing > 0),
            ("lattice_axes", self.lattice_axes in (1, 3)),
            ("lattice_m_max", self.lattice_m_max >= 1),
            ("lattice_kappa", 0 < self.lattice_kappa <= p.kappa),
            ("sigma_ref", 0 < self.sigma_ref < self.lattice_kappa),
            ("center1", len(self.center1) == 3),
            ("center2", len(self.center2) == 3),
            ("radius1", self.radius1 > 0),
            ("radius2", self.radius2 > 0),
            ("t_list", len(self.t_list) > 0 and all(t >= 0 for t in self.t_list)),
            ("energy_ref", self.energy_ref in ("min", "current")),
            ("c_env", self.c_env > 0),
            ("tol", self.tol > 0),
            ("max_iter", self.max_iter > 0),
        ]
        for key, ok in checks:
            if not ok:
                raise ValueError(f"invalid config key: {key}")
        return self

    def to_mapping(self):
        d = {k: v for k, v in dataclasses.asdict(self).items() if k != "params"}
        d.update(self.params.to_mapping())
        return d

    def semantic(self, keys=None):
        d = self.to_mapping()
        d.pop("out_dir")
        return {k: d[k] for k in keys} if keys is not None else d

    def hash(self, keys=None):
        blob = json.dumps(self.semantic(keys), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def read_config(path):
    d = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"invalid config key: {line}")
            key, val = (x.strip() for x in line.split("=", 1))
            d[key] = val
    return d


# ------------------------------------------------------------------ persistence

def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def write_json(path, obj):
    # json writes floats with repr, which round-trips
    Path(path).write_text(json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


@dataclass
class RunRecord:
    config_hash: str
    subcommand: str
    started: str
    finished: str = ""
    version: str = __version__
    outputs: dict = field(default_factory=dict)

    def save(self, out):
        write_json(Path(out) / f"run_{self.subcommand}.json", dataclasses.asdict(self))


class Output:
    """Artifact writer for one run; every JSON artifact names the run record it belongs to."""

    def __init__(self, directory, record):
        self.dir = Path(directory)
        self.record = record
        self.dir.mkdir(parents=True, exist_ok=True)

    def json(self, name, obj):
        ref = {"config_hash": self.record.config_hash, "record": f"run_{self.record.subcommand}.json"}
        body = {"run": ref, "data": obj} if not isinstance(obj, dict) else {**obj, "run": ref}
        write_json(self.dir / name, body)

    def csv(self, name, header, rows):
        write_csv(self.dir / name, header, rows)


class GroundStateCache:
    """One directory per semantic key; one .npz per (P, sigma) point.

    Writes go through a temporary file and an atomic rename, so concurrent
    readers never see a partial entry.
    """

    def __init__(self, root, key):
        self.dir = Path(root) / key
        self.hits = self.misses = 0
        self.dir.mkdir(parents=True, exist_ok=True)
        meta = self.dir / "meta.json"
        if meta.exists():
            version = json.loads(meta.read_text()).get("version")
            if version != CACHE_VERSION:
                log.warning("cache version %s != %s in %s; rebuilding", version, CACHE_VERSION, self.dir)
                for f in self.dir.glob("*.npz"):
                    f.unlink()
        meta.write_text(json.dumps({"version": CACHE_VERSION, "key": key}))

    def path(self, name):
        return self.dir / f"{name}.npz"

    def load(self, name):
        p = self.path(name)
        if not p.exists():
            self.misses += 1
            return None
        self.hits += 1
        log.info("cache hit %s", name)
        with np.load(p, allow_pickle=False) as z:
            return {k: z[k] for k in z.files}

    def save(self, name, **arrays):
        fd, tmp = tempfile.mkstemp(dir=self.dir, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, self.path(name))


def cache_root():
    return os.environ.get("NELSON_CACHE_DIR", str(Path.home() / ".cache" / "nelson"))


FIBER_KEYS = ["lambda", "alpha_bar", "kappa", "eps0", "p_max", "gamma", "gamma0", "n_radial", "n_angular",
              "include_sub_sigma", "m_max", "tol", "max_iter", "sigma", "sigmas"]
LAB_KEYS = ["lambda", "alpha_bar", "kappa", "eps0", "p_max", "gamma", "gamma0", "spacing", "lattice_axes",
            "lattice_m_max", "lattice_kappa", "sigma_ref", "tol"]


def _point_name(P, sigma):
    return "fiber_" + hashlib.sha1(repr((tuple(float(x) for x in P), float(sigma))).encode()).hexdigest()[:20]


class FiberRunner:
    """Fiber ground states on the configured grid, memoised through the cache."""

    def __init__(self, cfg, cache):
        self.cfg = cfg
        self.cache = cache
        self.solves = 0
        self.grid = fiber_grid(cfg)
        self._models = {}

    def model(self, sigma):
        if sigma not in self._models:
            self._models[sigma] = fiber.FiberModel(self.grid, self.cfg.params, self.cfg.m_max, sigma)
        return self._models[sigma]

    def state(self, P, sigma, components=False):
        P = np.asarray(P, float)
        name = _point_name(P, sigma)
        z = self.cache.load(name)
        if z is not None:
            gs = fiber.GroundState(P, sigma, float(z["energy"]), z["vector"], float(z["gap"]),
                                   float(z["residual"]))
            if components:
                model = self.model(sigma)
                gs.components = fiber.extract_components(gs, model.grid, model.basis)
            return gs
        gs = self.model(sigma).ground_state(P, tol=self.cfg.tol, max_iter=self.cfg.max_iter)
        self.solves += 1
        self.cache.save(name, energy=gs.energy, vector=gs.vector, gap=gs.gap, residual=gs.residual)
        return gs

    def energy(self, sigma):
        return lambda P: self.state(P, sigma).energy


def fiber_grid(cfg):
    """Shell grid with an edge at every cutoff in play, so cutoffs fall on shell boundaries."""
    p = cfg.params
    edges = sorted({cfg.sigma, *cfg.sigmas, p.kappa})
    lo = edges[0]
    grid = build_shell_grid(edges, cfg.n_radial, cfg.n_angular) if len(edges) > 2 else \
        build_annulus_grid(lo, p.kappa, cfg.n_radial, cfg.n_angular)
    if cfg.include_sub_sigma:
        grid = merge_grids(build_annulus_grid(lo / 2, lo, max(1, cfg.n_radial // 2), cfg.n_angular), grid)
    return grid


def _lab_point_name(site, sigma):
    return "lab_{}_{}_{}_{}".format(*site, repr(float(sigma)).replace(".", "p"))


class LabRunner:
    def __init__(self, cfg, cache):
        self.cfg = cfg
        self.cache = cache
        params = dataclasses.replace(cfg.params, kappa=cfg.lattice_kappa) if cfg.lattice_kappa != cfg.params.kappa \
            else cfg.params
        self.lab = sc.ScatteringLab(params, cfg.spacing, cfg.sigma_ref, cfg.lattice_m_max, cfg.lattice_axes,
                                    cfg.tol)
        axes = cfg.lattice_axes
        self.h1 = sc.make_bump(cfg.center1, cfg.radius1, cfg.spacing, params.p_max, axes)
        self.h2 = sc.make_bump(cfg.center2, cfg.radius2, cfg.spacing, params.p_max, axes)
        self._stored = set()

    def preload(self, sigmas):
        lab = self.lab
        for sigma in {*sigmas, lab.sigma_ref}:
            for site in np.vstack([self.h1.sites, self.h2.sites]):
                site = tuple(int(x) for x in site)
                name = _lab_point_name(site, sigma)
                if lab.has_point(site, sigma):
                    continue
                z = self.cache.load(name)
                if z is None:
                    continue
                tables = {m: z[f"table{m}"] for m in range(lab.m_max + 1)}
                occ = [tuple(int(j) for j in row if j >= 0) for row in z["occupations"]]
                lab.add_point(sc.FiberPoint(site, float(sigma), float(z["energy"]), float(z["residual"]),
                                            float(z["leak"]), tables, occ, z["amps"]))
                self._stored.add((site, float(sigma)))

    def store(self):
        for pt in self.lab.points():
            key = (pt.site, pt.sigma)
            if key in self._stored:
                continue
            width = max([len(o) for o in pt.occupations] + [1])
            occ = np.full((len(pt.occupations), width), -1, np.int64)
            for i, o in enumerate(pt.occupations):
                occ[i, :len(o)] = o
            tables = {f"table{m}": t for m, t in pt.tables.items()}
            self.cache.save(_lab_point_name(pt.site, pt.sigma), energy=pt.energy, residual=pt.residual,
                            leak=pt.leak, occupations=occ, amps=pt.amps, **tables)
            self._stored.add(key)


def cache_ground_states(cfg, root=None, fiber_points=True, lab_sigmas=None):
    """Solve and store every ground state the configured schedule needs; idempotent."""
    root = root or cache_root()
    out = {"fiber_solves": 0, "lab_solves": 0, "hits": 0}
    if fiber_points:
        fc = GroundStateCache(root, "fiber-" + cfg.hash(FIBER_KEYS))
        fr = FiberRunner(cfg, fc)
        for sigma in sorted({cfg.sigma, *cfg.sigmas}):
            for P in _p_grid(cfg):
                fr.state(P, sigma)
        out["fiber_solves"] = fr.solves
        out["hits"] += fc.hits
    if lab_sigmas:
        lc = GroundStateCache(root, "lab-" + cfg.hash(LAB_KEYS))
        lr = LabRunner(cfg, lc)
        lr.preload(lab_sigmas)
        before = lr.lab.solves
        for sigma in {*lab_sigmas, lr.lab.sigma_ref}:
            for h in (lr.h1, lr.h2):
                for site in h.sites:
                    lr.lab.point(site, sigma)
        lr.store()
        out["lab_solves"] = lr.lab.solves - before
        out["hits"] += lc.hits
    return out


def _p_grid(cfg):
    P0 = np.asarray(cfg.P, float)
    return [P0] + [P0 + s * cfg.p_step * e for e in np.eye(3) for s in (1, -1)]


# ------------------------------------------------------------------ subcommands

def cmd_ground(cfg, args, out, pool):
    fr = FiberRunner(cfg, GroundStateCache(cache_root(), "fiber-" + cfg.hash(FIBER_KEYS)))
    P = args.P if args.P is not None else cfg.P
    sigma = args.sigma if args.sigma is not None else cfg.sigma
    gs = fr.state(P, sigma, components=True)
    rec = gs.record()
    rec.update({"lambda": cfg.params.lam, "m_max": cfg.m_max, "modes": len(fr.grid)})
    out.json("ground.json", rec)
    f1 = gs.components[1]
    out.csv("f1.csv", ["kx", "ky", "kz", "re", "im"],
              [(*k, complex(v).real, complex(v).imag) for k, v in zip(fr.grid.k, f1)])
    return {"ground.json": rec, "f1.csv": len(f1), "solves": fr.solves}


def cmd_sweep(cfg, args, out, pool):
    fr = FiberRunner(cfg, GroundStateCache(cache_root(), "fiber-" + cfg.hash(FIBER_KEYS)))
    sigmas = sorted(args.sigmas or cfg.sigmas, reverse=True)
    p_grid = np.array(_p_grid(cfg))
    if np.any(np.linalg.norm(p_grid, axis=1) + 2e-3 >= cfg.params.p_max):
        raise ValueError("invalid config key: p_step")

    def surface(sigma):
        energy = fr.energy(sigma)
        h = min(1e-3, sigma / 10)
        grads = np.array([fiber.fd_gradient(energy, P, h) for P in p_grid])
        hess = np.array([fiber.fd_hessian(energy, P, h) for P in p_grid])
        return fiber.EnergySurface(sigma, p_grid, np.array([energy(P) for P in p_grid]), grads, hess)

    surfaces = list(pool.map(surface, sigmas))
    states = {s: fr.state(cfg.P, s) for s in sigmas}
    rep = fiber.verify_spectral_bounds(surfaces, states)
    rep["convex"] = bool(min(rep["min_curvature"]) > 0)
    out.json("sweep.json", rep)
    out.csv("sweep.csv", ["sigma", "px", "py", "pz", "E"],
              [(s.sigma, *P, E) for s in surfaces for P, E in zip(s.p_grid, s.energies)])
    return {"sweep.json": rep["convex"], "solves": fr.solves}


def _lab(cfg, sigmas):
    lr = LabRunner(cfg, GroundStateCache(cache_root(), "lab-" + cfg.hash(LAB_KEYS)))
    lr.preload(sigmas)
    return lr


def cmd_overlap(cfg, args, out, pool):
    t = args.t if args.t is not None else cfg.t_list[0]
    s1 = args.sigma if args.sigma is not None else cfg.sigma_ref
    s2 = args.sigma2 if args.sigma2 is not None else s1
    lr = _lab(cfg, [s1, s2])
    lab = lr.lab
    ov = sc.overlap(lab.build_kernels(lr.h1, lr.h2, t, s2, cfg.energy_ref),
                    lab.build_kernels(lr.h1, lr.h2, t, s1, cfg.energy_ref))
    lr.store()
    rep = {"t": t, "sigma": s1, "sigma2": s2, **ov}
    out.json("overlap.json", rep)
    return {"overlap.json": rep, "solves": lab.solves}


def cmd_cook(cfg, args, out, pool):
    t = args.t if args.t is not None else cfg.t_list[0]
    s = args.sigma if args.sigma is not None else cfg.sigma_ref
    lr = _lab(cfg, [s])
    rep = sc.cook_terms(lr.lab, lr.h1, lr.h2, t, s, cfg.energy_ref)
    lr.store()
    rep = {"t": t, "sigma": s, **rep}
    out.json("cook.json", rep)
    return {"cook.json": rep, "solves": lr.lab.solves}


def cmd_converge(cfg, args, out, pool):
    gamma = args.gamma if args.gamma is not None else cfg.params.gamma
    t_list = args.t_list or cfg.t_list
    lr = _lab(cfg, sc.schedule(cfg.lattice_kappa, gamma, t_list, 0.0))
    rep = sc.convergence_study(lr.lab, lr.h1, lr.h2, gamma, t_list, cfg.energy_ref)
    lr.store()
    rep["gamma"] = gamma
    out.json("converge.json", rep)
    cols = ["t1", "t2", "sigma1", "sigma2", "diff_sq", "norm_sq", "rest", "cross_rest"]
    out.csv("converge.csv", cols, [[r[c] for c in cols] for r in rep["rows"]])
    return {"converge.json": len(rep["rows"]), "solves": lr.lab.solves}


def cmd_decay(cfg, args, out, pool):
    sigma = args.sigma if args.sigma is not None else cfg.sigma_ref
    t_list = args.t_list or cfg.t_list
    lr = _lab(cfg, [sigma])
    lab = lr.lab
    rng = np.random.default_rng(cfg.seed)
    if args.n + 1 > lab.m_max or args.m > lab.m_max or args.n < 0 or args.m < 0:
        raise ValueError(f"need n + 1 <= lattice_m_max and m <= lattice_m_max (= {lab.m_max})")
    tuples = osc.support_tuples(lab, lr.h1, lr.h2, sigma, args.n, args.m, args.count, rng)
    rows = osc.f_decay_series(lab, lr.h1, lr.h2, sigma, t_list, tuples, args.n, args.m,
                              energy_ref=cfg.energy_ref)
    lr.store()
    rep = {"rows": rows, "n": args.n, "m": args.m, "sigma": sigma, "tuples": len(tuples)}
    try:
        fit = osc.fit_decay([(r["t"], r["F"]) for r in rows], "mixed", sigma, lab.params)
        rep["fit"] = fit.record()
        bound = dict(zip(fit.t.tolist(), fit.bound.tolist()))
    except ValueError as exc:
        rep["fit"] = {"skipped": str(exc)}
        bound = {}
    out.json("decay.json", rep)
    out.csv("decay.csv", ["t", "abs_F", "bound_value"],
              [(r["t"], r["F"], bound.get(r["t"], float("nan"))) for r in rows])
    return {"decay.json": len(rows), "solves": lab.solves}


def cmd_summation(cfg, args, out, pool):
    sigmas = args.sigmas or cfg.sigmas
    c_env = args.c_env if args.c_env is not None else cfg.c_env
    rep = osc.summation_check(sigmas, cfg.params, c_env).record()
    rep["all_passed"] = all(rep["passed"].values())
    out.json("summation.json", rep)
    out.csv("summation.csv", ["case", "lhs", "rhs", "passed"],
              [(k, rep["lhs"][k], rep["rhs"][k], rep["passed"][k]) for k in sorted(rep["lhs"])])
    if not rep["all_passed"]:
        raise ArithmeticError("summation estimate violated: "
                              + ", ".join(k for k, ok in rep["passed"].items() if not ok))
    return {"summation.json": rep["all_passed"]}


def cmd_wick_selftest(cfg, args, out, pool):
    rep = wick.selftest(args.max_arity, args.cases, cfg.seed)
    out.json("wick_selftest.json", rep)
    if rep["max_rel_err"] > 1e-12:
        raise ArithmeticError(f"pairing formula mismatch: max_rel_err={rep['max_rel_err']:.3e}")
    return {"wick_selftest.json": rep}


def cmd_all(cfg, args, out, pool):
    from . import acceptance

    results = acceptance.run_all(printer=print)
    rows = [{"number": r.number, "title": r.title, "passed": r.passed, "detail": r.detail} for r in results]
    out.json("acceptance.json", rows)
    failed = [r.number for r in results if not r.passed]
    if failed:
        raise ArithmeticError(f"acceptance criteria failed: {failed}")
    return {"acceptance.json": len(rows)}


COMMANDS = {"ground": cmd_ground, "sweep": cmd_sweep, "overlap": cmd_overlap, "cook": cmd_cook,
            "converge": cmd_converge, "decay": cmd_decay, "summation": cmd_summation,
            "wick-selftest": cmd_wick_selftest, "all": cmd_all}

# two-word spellings, e.g. "scatter overlap" or "wick selftest"
ALIASES = {("fiber", "ground"): "ground", ("fiber", "sweep"): "sweep", ("scatter", "overlap"): "overlap",
           ("scatter", "cook"): "cook", ("scatter", "converge"): "converge", ("wick", "selftest"): "wick-selftest",
           ("decay", "fkernel"): "decay", ("decay", "summation"): "summation"}


def build_parser():
    ap = argparse.ArgumentParser(prog="nelson", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config")
    ap.add_argument("--out")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    ap.add_argument("--P", type=_floats)
    ap.add_argument("--sigma", type=float)
    ap.add_argument("--sigma2", type=float)
    ap.add_argument("--sigmas", type=_floats)
    ap.add_argument("--t", type=float)
    ap.add_argument("--t-list", type=_floats)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--n", type=int, default=0)
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--c-env", type=float)
    ap.add_argument("--max-arity", type=int, default=3)
    ap.add_argument("--cases", type=int, default=100)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _normalise(argv):
    if len(argv) >= 2 and (argv[0], argv[1]) in ALIASES:
        return [ALIASES[(argv[0], argv[1])]] + argv[2:]
    return argv


def run(argv):
    argv = _normalise(list(argv))
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = read_config(args.config) if args.config else {}
        for item in args.set:
            if "=" not in item:
                raise ValueError(f"invalid config key: {item}")
            k, v = item.split("=", 1)
            raw[k.strip()] = v.strip()
        if args.seed is not None:
            raw["seed"] = str(args.seed)
        if args.out is not None:
            raw["out_dir"] = args.out
        cfg = ExperimentConfig.from_mapping(raw)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    record = RunRecord(cfg.hash(), args.command, time.strftime("%Y-%m-%dT%H:%M:%S"))
    out = Output(cfg.out_dir, record)
    code = 0
    try:
        with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
            record.outputs = COMMANDS[args.command](cfg, args, out, pool)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 1
    except (ArithmeticError, RuntimeError, MemoryError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {type(exc).__module__}: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 2
    record.finished = time.strftime("%Y-%m-%dT%H:%M:%S")
    record.outputs = {"exit_code": code, **record.outputs}
    record.save(out.dir)
    return code


def main(argv=None):
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
