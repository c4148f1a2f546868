"""Finite-difference d/dt Psi against the three-term formula for a range of steps and photon caps."""

import argparse

from nelson import scattering as sc
from nelson.modes import ModelParams

ap = argparse.ArgumentParser()
ap.add_argument("--lam", type=float, default=0.05)
ap.add_argument("--sigma", type=float, default=0.15)
ap.add_argument("--t", type=float, default=3.0)
args = ap.parse_args()

h1 = sc.make_bump([-0.1, 0, 0], 0.06, 0.05, axes=1)
h2 = sc.make_bump([0.1, 0, 0], 0.06, 0.05, axes=1)

for m_max in (1, 2):
    lab = sc.ScatteringLab(ModelParams(lam=args.lam, kappa=0.25), 0.05, 0.1, m_max=m_max, axes=1)
    dyn = sc.TwoElectronDynamics(lab, 2 * m_max + 1)
    lit = sc.cook_terms_literal(dyn, h1, h2, args.t, args.sigma)
    three = sc.norm(lit["three"])
    totals = {e[0][0] + e[1][0] + sum(dyn.lat[j][0] for j in ph) for (e, ph) in lit["X"]}
    prop = sc.CollinearPropagator(dyn, totals, 4 * (m_max + 1) + 4)
    for dt in (1e-2, 1e-3, 1e-4):
        fd = sc.fd_derivative_norm(prop, h1, h2, args.t, args.sigma, dt)
        print(f"m_max={m_max} dim={len(prop)} dt={dt:.0e} three={three:.10e} "
              f"coarse={abs(fd['coarse'] - three) / three:.2e} richardson={abs(fd['richardson'] - three) / three:.2e}")
