#!/usr/bin/env python3
"""Materialize the labelled synthetic app corpus used by tests and demos.

Writes 23 .apk archives (12 injectable across the three wrapper shapes,
3 near-miss negatives, 5 non-DL apps, 3 corrupt files) plus a ground
truth listing, so scanner and matcher claims can be checked end to end.
"""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from prepatch import synth


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("out", type=Path, help="corpus output directory")
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--truth", type=Path, default=None,
                        help="where to write ground-truth labels "
                             "(default: OUT/ground_truth.json)")
    args = parser.parse_args(argv)

    entries = synth.build_corpus(args.out, seed=args.seed)
    truth_path = args.truth or args.out / "ground_truth.json"
    labels = [
        {
            "name": e.truth.name,
            "file": e.path.name,
            "kind": e.truth.kind,
            "renamed": e.truth.renamed,
            "is_dl": e.truth.is_dl,
            "services": list(e.truth.services),
            "strategies": list(e.truth.strategies),
            "injectable": e.truth.injectable,
        }
        for e in entries
    ]
    truth_path.write_text(json.dumps(labels, indent=2, sort_keys=True) + "\n")

    for label in labels:
        flags = []
        if label["is_dl"]:
            flags.append("DL")
        if label["injectable"]:
            flags.append("injectable")
        if label["renamed"]:
            flags.append("renamed")
        print(f"{label['file']:28s} {label['kind']:12s} "
              f"{' '.join(flags) or '-'}")
    print(f"\n{len(entries)} apps written to {args.out}")
    print(f"ground truth: {truth_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
