"""Runge approximation sweep on the half circle for a few targets and both misfit norms."""

import argparse
from pathlib import Path

import numpy as np

from fracschro.config import sign_change_profile
from fracschro.forward import Potential, assemble
from fracschro.measurement import build_source_basis
from fracschro.runge import RungeProblem, density_sweep
from fracschro.spectral import build_region, build_torus_spectrum


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--s", type=float, default=0.5)
    ap.add_argument("--m", type=int, default=24)
    ap.add_argument("--out", default="out/scripts/runge")
    args = ap.parse_args()

    sp = build_torus_spectrum(1, 2 * np.pi, 20, 64)
    x = sp.points[:, 0]
    region = build_region(sp, lambda p: 0 < p[0] < np.pi, "half_circle")
    op = assemble(sp, Potential(sp, 1 + 0.5 * np.cos(x)), args.s)
    basis = build_source_basis(sp, region, "bump", args.m)
    targets = {
        "one": np.ones(region.count),
        "sign": sign_change_profile(sp, region),
        "cos3": np.cos(3 * x[region.mask]),
    }
    alphas = [10.0**-k for k in range(1, 13)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for norm in ("L2", "Hs"):
        problem = RungeProblem.from_operator(op, basis, targets["one"], alphas[0], norm)
        table = density_sweep(problem, targets, alphas)
        table.write_csv(out / f"sweep_{norm}.csv")
        print(f"[{norm}] relative error at alpha = {alphas[-1]:g}")
        for tid in table.target_ids():
            rel = [r.relative_error for r in table.rows if r.target_id == tid]
            print(f"  {tid:5s} {rel[-1]:.3e}  monotone={tid not in table.monotone_violations()}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
