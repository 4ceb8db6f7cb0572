"""Synthetic disk dataset: bright disks on dark noise, for sanity runs."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image


def make_disk_dataset(root: str, count: int = 4, size: int = 64, seed: int = 0) -> str:
    """Write `count` bright-disk-on-noise samples under root/images+masks."""
    rng = np.random.Generator(np.random.PCG64(seed))
    images_dir = os.path.join(root, "images")
    masks_dir = os.path.join(root, "masks")
    os.makedirs(images_dir, exist_ok=True)
    os.makedirs(masks_dir, exist_ok=True)

    yy, xx = np.mgrid[0:size, 0:size]
    for i in range(count):
        radius = rng.uniform(0.18, 0.3) * size
        cy = rng.uniform(radius + 1, size - radius - 1)
        cx = rng.uniform(radius + 1, size - radius - 1)
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2

        image = rng.uniform(0.0, 0.25, size=(size, size, 3))
        image[disk] = rng.uniform(0.85, 1.0, size=(int(disk.sum()), 3))
        mask = disk.astype(np.uint8) * 255

        stem = f"disk_{i:03d}"
        Image.fromarray((image * 255).astype(np.uint8)).save(os.path.join(images_dir, f"{stem}.png"))
        Image.fromarray(mask, mode="L").save(os.path.join(masks_dir, f"{stem}.png"))
    return root
