"""Shape of the projected kernel for every filter of the synthetic learned bank."""
import argparse

import numpy as np

from cortexk.experiments import learned_bank, learned_kernel_field
from cortexk.filterbank import dominant_orientation
from cortexk.propagation import DiscreteGridKernel
from cortexk.viz_export import default_threshold, project_max, region_anisotropy, wrapped_orientation_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--percentile", type=float, default=90.0)
    args = ap.parse_args()
    bank = learned_bank(args.count, seed=args.seed)
    kernel = DiscreteGridKernel(bank)
    ratios, errs = [], []
    for f in range(len(bank)):
        proj = project_max(learned_kernel_field(bank, f, 12, kernel), "f")
        ratio, angle = region_anisotropy(proj, default_threshold(proj.values, args.percentile))
        dev = np.degrees(wrapped_orientation_distance(angle, dominant_orientation(bank.stack[f])))
        ratios.append(ratio)
        errs.append(dev)
        print(f"f={f:3d}  anisotropy {ratio:6.2f}  axis deviation {dev:5.1f} deg")
    print(f"min anisotropy {min(ratios):.2f}, max deviation {max(errs):.1f} deg")


if __name__ == "__main__":
    main()
