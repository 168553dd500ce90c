"""Regenerate the shipped synthetic study corpus (src/voiceadapt/data/study_corpus.csv)."""

import argparse
from pathlib import Path

from voiceadapt.corpus import CorpusSpec, generate_study_corpus, write_tuples_csv

DATA = Path(__file__).resolve().parents[1] / "src" / "voiceadapt" / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=DATA / "study_corpus.csv")
    args = ap.parse_args()
    tuples = generate_study_corpus(CorpusSpec(seed=args.seed))
    write_tuples_csv(args.out, tuples)
    print(f"wrote {len(tuples)} tuples to {args.out}")


if __name__ == "__main__":
    main()
