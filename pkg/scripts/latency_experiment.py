#!/usr/bin/env python3
"""Show how the pixel-op latency proxy grows with forced preview size.

A perturbation that overrides the selected preview dimensions makes every
later stage touch more samples; this prints the deterministic op count
per candidate size so the trend is visible without a device.
"""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from prepatch import sim


def parse_size(text):
    width, _, height = text.partition("x")
    return int(width), int(height)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--sizes", type=parse_size, nargs="+",
                        default=list(sim.LATENCY_SIZES),
                        metavar="WxH",
                        help="preview sizes to profile (default: the "
                             "standard four)")
    parser.add_argument("--images", type=int, default=10)
    parser.add_argument("--json", type=Path, default=None)
    args = parser.parse_args(argv)

    profile = sim.latency_profile(args.sizes, image_count=args.images)
    baseline = profile[0][1]
    print(f"{'size':>10s} {'pixel ops':>12s} {'vs first':>9s}")
    for pair, cost in profile:
        print(f"{pair.width:>5d}x{pair.height:<4d} {cost:>12d} "
              f"{cost / baseline:>8.2f}x")

    if args.json:
        payload = [{"width": p.width, "height": p.height, "pixel_ops": c}
                   for p, c in profile]
        args.json.write_text(json.dumps(payload, indent=2, sort_keys=True)
                             + "\n")
        print(f"\nresults written to {args.json}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
