"""Ground-state energy along a cutoff ladder on a shell grid, and the fitted convergence slope."""

import argparse

import numpy as np

from nelson import fiber
from nelson.modes import ModelParams, build_shell_grid

ap = argparse.ArgumentParser()
ap.add_argument("--lam", type=float, default=0.05)
ap.add_argument("--sigmas", default="0.5,0.2,0.1,0.05")
ap.add_argument("--m-max", type=int, default=2)
args = ap.parse_args()

sigmas = [float(s) for s in args.sigmas.split(",")]
edges = sorted({*sigmas, *(s / 2 for s in sigmas), 1.0})
grid = build_shell_grid(edges, 2, 6)
params = ModelParams(lam=args.lam)
P = np.array([0.05, 0.0, 0.0])

diffs = []
for s in sigmas:
    e1 = fiber.FiberModel(grid, params, args.m_max, s).energy(P, dense_below=0)
    e2 = fiber.FiberModel(grid, params, args.m_max, s / 2).energy(P, dense_below=0)
    diffs.append(abs(e1 - e2))
    print(f"sigma={s:<6g} E={e1:.12f} |E_s - E_s/2|={diffs[-1]:.3e}")
print(f"log-log slope {fiber.loglog_slope(sigmas, diffs):.3f} on {len(grid)} modes")
