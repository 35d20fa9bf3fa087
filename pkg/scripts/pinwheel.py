"""Patchiness of the propagated field on random pinwheel maps, over several seeds."""
import argparse

from cortexk.experiments import pinwheel_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--size", type=int, default=81)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--waves", type=int, default=30)
    ap.add_argument("--trials", type=int, default=1000)
    args = ap.parse_args()
    for seed in args.seeds:
        res = pinwheel_experiment(size=args.size, m=args.waves, seed=seed, n=args.steps,
                                  trials=args.trials, method="sparse")
        print(f"seed {seed}: statistic {res.statistic:.4f}  random p5 {res.baseline_p5:.4f}  "
              f"mean {res.baseline.mean():.4f}  patchy {res.patchy}")


if __name__ == "__main__":
    main()
