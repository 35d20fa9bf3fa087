"""Component counts of kernel superlevel sets with and without patch truncation."""
import argparse

import numpy as np

from cortexk.experiments import gabor_kernel_field, spatial_grid, theta_axis
from cortexk.filterbank import GaborParams
from cortexk.kernel import PatchSpec
from cortexk.viz_export import count_components


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--step", type=float, default=0.05)
    ap.add_argument("--orientations", type=int, default=64)
    ap.add_argument("--patch", type=float, default=1.0)
    args = ap.parse_args()
    gp = GaborParams()
    grid = spatial_grid(1.5, 1.5, args.step, theta_axis(count=args.orientations))
    raw = gabor_kernel_field(gp, grid)
    cut = gabor_kernel_field(gp, grid, patch=PatchSpec(args.patch))
    for frac in (0.05, 0.1, 0.2, 0.3, 0.35, 0.5):
        level = frac * gp.eta
        print(f"level {frac:.2f} eta: untruncated {count_components(raw, level)}, "
              f"truncated {count_components(cut, level)}")
    print(f"side-lobe peak {np.exp(-1):.3f} eta")


if __name__ == "__main__":
    main()
