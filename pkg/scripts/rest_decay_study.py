"""Rest term and F_2 magnitudes against t, with the largest accumulated phase difference.

The phase column explains the flat curves: decay needs |dE| t well above 2 pi.
"""

import argparse
import json

import numpy as np

from nelson import acceptance, oscillatory as osc, scattering as sc

ap = argparse.ArgumentParser()
ap.add_argument("--t-list", default="5,7,10,14,20,28,40,56,80")
ap.add_argument("--sigma", type=float, default=0.1)
ap.add_argument("--out", default="rest_decay.json")
args = ap.parse_args()

t_list = [float(x) for x in args.t_list.split(",")]
lab, h1, h2 = acceptance.lab3d()
rows = sc.rest_series(lab, h1, h2, args.sigma, t_list)
mags, _, split = acceptance.f_samples(lab, h1, h2, args.sigma, t_list)

sites = np.vstack([h1.sites, h2.sites])
E = np.array([lab.phase_energy(s, args.sigma) for s in sites])
spread = float(E.max() - E.min())

print(f"{'t':>6} {'|rest|':>12} {'max|F2|':>12} {'phase':>8}")
for r, m in zip(rows, mags):
    print(f"{r['t']:6.1f} {abs(r['rest']):12.4e} {m[:, 1].max():12.4e} {spread * r['t']:8.3f}")

rest_fit = osc.fit_decay([(r["t"], abs(r["rest"])) for r in rows], "1/t")
f2_fit = osc.fit_decay(list(zip(t_list, mags[:, :, 1].max(axis=1))), "1/t2")
print(f"rest exponent {rest_fit.exponent:.4f}, F2 exponent {f2_fit.exponent:.4f}, split err {split:.2e}")

with open(args.out, "w") as fh:
    json.dump({"t": t_list, "rest": [abs(r["rest"]) for r in rows],
               "F2": mags[:, :, 1].max(axis=1).tolist(), "energy_spread": spread,
               "rest_exponent": rest_fit.exponent, "F2_exponent": f2_fit.exponent}, fh, indent=2)
