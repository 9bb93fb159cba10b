"""Resolvent growth sweeps on two meshes over the top decade of the validity window.

Example: python scripts/run_sweeps.py --models WW EBB --out out/sweeps
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from fkvlab.assembly import Model, ModelSpec
from fkvlab.errors import FitError
from fkvlab.frequency import target_ell, two_mesh_fit, validity_window
from fkvlab.kernel import FractionalParams, smallest_grid
from fkvlab.operator import build_operator

# mesh pairs whose coarse validity window spans at least one decade
MESHES = {"EBBW": (512, 1024), "WW": (512, 1024), "WEBB": (512, 1024), "EBB": (256, 512), "EBBEBB": (256, 512)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", nargs="+", default=list(MESHES), choices=list(MESHES))
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply both meshes by this factor")
    ap.add_argument("--out", default="out/sweeps")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p = FractionalParams(args.alpha, args.eta)
    grid = smallest_grid(p, 1e-6)
    print(f"{'model':7s} {'band':>17s} {'ell coarse':>10s} {'ell fine':>9s} {'r2':>5s} {'target':>6s} {'time':>6s}")
    for name in args.models:
        t0 = time.perf_counter()
        nc, nf = (max(4, int(n * args.scale)) for n in MESHES[name])
        spec = ModelSpec(Model(name))
        coarse = build_operator(spec, p, grid, nc, nc)
        lo, hi = validity_window(coarse)
        if lo >= hi:
            print(f"{name:7s} empty validity window at n={nc}; increase --scale")
            continue
        band = (max(lo, hi / 10.0), hi)
        try:
            fit = two_mesh_fit((coarse, build_operator(spec, p, grid, nf, nf)), band, args.points)
        except FitError as exc:
            print(f"{name:7s} no fit at n={nc}/{nf}: {exc}")
            continue
        for tag, sweep in zip(("coarse", "fine"), fit.sweeps):
            (out / f"sweep_{name}_{tag}.csv").write_text(sweep.to_csv())
        print(f"{name:7s} {band[0]:8.3g}-{band[1]:<8.3g} {fit.coarse.exponent:10.3f} {fit.fine.exponent:9.3f} "
              f"{fit.fine.r_squared:5.2f} {target_ell(spec.model, args.alpha):6.3g} {time.perf_counter() - t0:5.0f}s")


if __name__ == "__main__":
    main()
