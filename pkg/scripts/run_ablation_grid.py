#!/usr/bin/env python3
"""Desk-scale ablation grid: guidance on/off, edge attention on/off, detectors.

Trains each variant on a synthetic disk dataset and prints a markdown
summary, mirroring the harness switches used for the full-scale studies.

Example:
    python3 scripts/run_ablation_grid.py --out runs/grid --epochs 60
"""

import argparse
import os
import tempfile

from edgeguide.config import TrainConfig
from edgeguide.data import load_manifest
from edgeguide.harness import evaluate, train
from edgeguide.synthetic import make_disk_dataset

VARIANTS = [
    ("baseline (no guiding)", dict(use_sam_guiding=False, use_eg=False)),
    ("guiding, no edge attention", dict(use_eg=False)),
    ("full, sobel", dict(detector="sobel")),
    ("full, laplacian", dict(detector="laplacian")),
    ("full, canny", dict(detector="canny")),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/grid")
    parser.add_argument("--epochs", type=int, default=60)
    parser.add_argument("--count", type=int, default=16)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    data_root = os.path.join(args.out, "data")
    if not os.path.isdir(os.path.join(data_root, "images")):
        make_disk_dataset(data_root, count=args.count, size=args.size, seed=args.seed)
    train_manifest = load_manifest(data_root, "disks")
    val_root = os.path.join(args.out, "val")
    if not os.path.isdir(os.path.join(val_root, "images")):
        make_disk_dataset(val_root, count=max(args.count // 2, 2), size=args.size,
                          seed=args.seed + 1)
    val_manifest = load_manifest(val_root, "disks-val", split="test")

    rows = []
    for name, overrides in VARIANTS:
        config = TrainConfig(
            epochs=args.epochs, batch_size=4, image_size=args.size,
            student_channels=(8, 16, 32, 64), lr=1e-3, seed=args.seed,
            **overrides,
        )
        run_dir = os.path.join(args.out, name.replace(" ", "_").replace(",", ""))
        print(f"== {name}")
        ckpt, _ = train(config, train_manifest, val_manifest, out_dir=run_dir)
        row = evaluate(ckpt, val_manifest)
        rows.append((name, row))

    print()
    print("| Variant | mDice | mIoU |")
    print("| --- | --- | --- |")
    for name, row in rows:
        print(f"| {name} | {row['mdice']:.3f} | {row['miou']:.3f} |")


if __name__ == "__main__":
    main()
