#!/usr/bin/env python3
"""Regenerate the ablation table and sweeps under ./artifacts/.

    python scripts/repro.py [--out artifacts] [--seed 0] [--skip-sweeps | --sweeps-only]

--sweeps-only reuses an existing corpus and stats file in the output directory.
"""
import argparse
import sys

from smlad.repro import ReproError, directional_claims, repro_ablation, repro_sweeps


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="artifacts")
    parser.add_argument("--seed", type=int, default=0)
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--skip-sweeps", action="store_true")
    mode.add_argument("--sweeps-only", action="store_true")
    args = parser.parse_args()
    try:
        if not args.sweeps_only:
            rows = repro_ablation(args.out, args.seed)
            for name, ok in directional_claims(rows):
                print(f"{'PASS' if ok else 'FAIL'}  {name}")
            print(open(f"{args.out}/ablation.md").read(), end="")
        if not args.skip_sweeps:
            for path in repro_sweeps(args.out, args.seed):
                print(f"wrote {path}")
    except ReproError as exc:
        print(f"repro failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
