"""Endstopped association fields: fitted ridge radius against ES length."""
import argparse

import numpy as np

from cortexk.experiments import curvature_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lengths", type=float, nargs="+", default=[1.0, 0.85, 0.7, 0.6, 0.5])
    ap.add_argument("--orientations", type=int, default=21)
    ap.add_argument("--steps", type=int, default=2)
    ap.add_argument("--cS", type=float, default=2.0)
    ap.add_argument("--cL", type=float, default=1.0)
    args = ap.parse_args()
    res = curvature_experiment(tuple(args.lengths), cS=args.cS, cL=args.cL,
                               theta_count=args.orientations, n=args.steps)
    for L, r in zip(res.lengths, res.radii):
        print(f"L={L:5.2f}  radius={r:8.3f}  curvature={1 / r if np.isfinite(r) else 0:.3f}")
    print(f"plain cell radius={res.plain_radius:.3g}")
    print(f"nonincreasing: {res.monotone}")


if __name__ == "__main__":
    main()
