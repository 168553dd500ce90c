"""Regenerate the two-condition evaluation fixture (fixed and adaptive voice CSVs)."""

import argparse
from pathlib import Path

from voiceadapt.corpus import generate_evaluation_fixture, write_tuples_csv

DATA = Path(__file__).resolve().parents[1] / "src" / "voiceadapt" / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", type=Path, default=DATA)
    args = ap.parse_args()
    fixed, adaptive = generate_evaluation_fixture(seed=args.seed)
    write_tuples_csv(args.out_dir / "evaluation_fixed.csv", fixed)
    write_tuples_csv(args.out_dir / "evaluation_adaptive.csv", adaptive)
    print(f"wrote {len(fixed)} fixed and {len(adaptive)} adaptive tuples to {args.out_dir}")


if __name__ == "__main__":
    main()
