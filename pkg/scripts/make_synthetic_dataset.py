#!/usr/bin/env python3
"""Generate a bright-disk-on-noise dataset for desk-scale runs.

Example:
    python3 scripts/make_synthetic_dataset.py --out data/disks --count 16 --size 64
"""

import argparse

from edgeguide.synthetic import make_disk_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="dataset root to create")
    parser.add_argument("--count", type=int, default=16)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    root = make_disk_dataset(args.out, count=args.count, size=args.size, seed=args.seed)
    print(f"wrote {args.count} samples under {root}/images and {root}/masks")


if __name__ == "__main__":
    main()
