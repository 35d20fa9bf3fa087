"""Run every figure preset into out/<preset> and print the manifests."""
import argparse
from pathlib import Path

from cortexk import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out", help="parent output directory")
    ap.add_argument("--only", nargs="*", choices=sorted(cli.PRESETS), help="subset of presets")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for name in args.only or cli.PRESETS:
        command, _ = cli.PRESETS[name]
        out = Path(args.out) / name
        code = cli.main([command, "--preset", name, "--out", str(out), "--threads", str(args.threads)])
        print(f"== {name} ({command}) exit {code}")
        if code == 0:
            print((out / "manifest.txt").read_text(), end="")


if __name__ == "__main__":
    main()
